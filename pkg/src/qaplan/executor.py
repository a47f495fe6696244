"""Render plans as numbered steps and run them against stub APIs.

A rendered plan starts with every value acquisition: a known value from the
binding environment, or a ``get_info_api`` call for a missing one. These are
ordered by the first API action that consumes them. API calls follow in plan
order. Execution walks the same step list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .catalog import Catalog
from .planner import Plan

GET_INFO = "get_info_api"


@dataclass(frozen=True)
class Step:
    kind: str  # "bind", "get_info" or "api"
    target: str
    inputs: tuple = ()
    api: str = ""
    value: str | None = None
    label: str = ""
    value_type: str = ""


def object_label(obj: str, catalog: Catalog) -> str:
    """Human label for an argument object such as ``x_start_date``."""
    best = None
    for goal in catalog.goals:
        for arg in goal.args:
            for m in arg.materialized:
                if obj.endswith("_" + m.predicate) and (best is None or len(m.predicate) > len(best.predicate)):
                    best = m
    if best is not None:
        return best.label
    return obj.split("_", 1)[-1].replace("_", " ")


def plan_steps(plan: Plan, bindings: dict, catalog: Catalog) -> list[Step]:
    get_info = {a.args[0]: a for a in plan if a.schema == GET_INFO}
    apis = [a for a in plan if a.schema != GET_INFO]
    steps: list[Step] = []
    done: set[str] = set()

    def acquire(obj: str) -> None:
        if obj in done:
            return
        if obj in bindings:
            steps.append(Step("bind", obj, value=bindings[obj]))
        elif obj in get_info:
            steps.append(Step("get_info", obj, label=object_label(obj, catalog), value_type=get_info[obj].args[1]))
        else:
            return
        done.add(obj)

    for action in apis:
        for obj in action.args[:-1]:
            acquire(obj)
    for obj in get_info:
        acquire(obj)
    for obj in sorted(bindings):
        acquire(obj)
    for action in apis:
        steps.append(Step("api", action.args[-1], inputs=action.args[:-1], api=action.schema))
    return steps


def _step_text(n: int, step: Step) -> str:
    if step.kind == "bind":
        return f'Step {n}. {step.target} = "{step.value}";'
    if step.kind == "get_info":
        return f'Step {n}. {step.target} = {GET_INFO}("{step.label}", {step.value_type});'
    return f"Step {n}. {step.target} = {step.api}({', '.join(step.inputs)});"


def render_plan(plan: Plan, bindings: dict, catalog: Catalog) -> str:
    steps = plan_steps(plan, bindings, catalog)
    return "".join(_step_text(n, s) + "\n" for n, s in enumerate(steps, start=1))


# --- execution -------------------------------------------------------------------

class MissingAnswer(LookupError):
    def __init__(self, step: int, target: str, label: str):
        super().__init__(f"step {step}: no answer for {target} ({label})")
        self.step = step
        self.target = target
        self.label = label


class UserAbort(RuntimeError):
    pass


@dataclass
class InfoSource:
    """Where ``get_info_api`` values come from.

    In ``answer_map`` mode, answers are looked up by object name first, then
    by label. In ``interactive_terminal`` mode the user is prompted; an empty
    answer or end of input aborts.
    """

    mode: str = "answer_map"
    answers: dict = field(default_factory=dict)
    prompt: Callable[[str], str] = input

    def __post_init__(self):
        if self.mode not in ("answer_map", "interactive_terminal"):
            raise ValueError(f"unknown info source mode {self.mode!r}")

    @classmethod
    def from_file(cls, path) -> InfoSource:
        answers = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(answers, dict) or not all(isinstance(v, str) for v in answers.values()):
            raise ValueError("answer map must be a JSON object of strings")
        return cls("answer_map", answers)

    def ask(self, step: int, target: str, label: str, value_type: str) -> str:
        if self.mode == "answer_map":
            for key in (target, label):
                if key in self.answers:
                    return self.answers[key]
            raise MissingAnswer(step, target, label)
        try:
            value = self.prompt(f"? {label} ({value_type}): ").strip()
        except (EOFError, KeyboardInterrupt):
            value = ""
        if not value:
            raise UserAbort(f"step {step}: no value given for {label}")
        return value


@dataclass(frozen=True)
class TraceRecord:
    step: int
    action: str
    inputs: tuple  # ((object, value), ...)
    output: str


@dataclass
class ExecutionTrace:
    records: list = field(default_factory=list)
    status: str = "completed"
    aborted_step: int | None = None
    reason: str = ""
    error: Exception | None = None

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "aborted_step": self.aborted_step,
            "reason": self.reason,
            "records": [
                {"step": r.step, "action": r.action, "inputs": [list(i) for i in r.inputs], "output": r.output}
                for r in self.records
            ],
        }


def execute(plan: Plan, bindings: dict, info: InfoSource, catalog: Catalog) -> ExecutionTrace:
    """Run ``plan``; stub APIs return ``<api>#<step>`` tokens."""
    trace = ExecutionTrace()
    env: dict[str, str] = {}
    for n, step in enumerate(plan_steps(plan, bindings, catalog), start=1):
        if step.kind == "bind":
            env[step.target] = step.value
            trace.records.append(TraceRecord(n, "bind", (), step.value))
            continue
        if step.kind == "get_info":
            try:
                value = info.ask(n, step.target, step.label, step.value_type)
            except (MissingAnswer, UserAbort) as exc:
                return _abort(trace, n, exc)
            env[step.target] = value
            trace.records.append(TraceRecord(n, GET_INFO, ((step.label, step.value_type),), value))
            continue
        unresolved = [i for i in step.inputs if i not in env]
        if unresolved:
            return _abort(trace, n, RuntimeError(f"{step.api}: unresolved inputs {unresolved}"))
        token = f"{step.api}#{n}"
        env[step.target] = token
        trace.records.append(TraceRecord(n, step.api, tuple((i, env[i]) for i in step.inputs), token))
    return trace


def _abort(trace: ExecutionTrace, step: int, exc: Exception) -> ExecutionTrace:
    trace.status = "aborted"
    trace.aborted_step = step
    trace.reason = str(exc)
    trace.error = exc
    return trace


def is_executable(plan: Plan, catalog: Catalog) -> bool:
    """False when every API in the plan serves a non-executable (how-to) goal."""
    apis = [a.schema for a in plan if a.schema != GET_INFO]
    if not apis:
        return False
    return any((g := catalog.by_api(api)) is None or g.executable for api in apis)
