"""Query to plan: translate, materialize, generate the task, ground, and search."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .asp import FactSet
from .catalog import Catalog, data_path, load_catalog_file
from .pddl import Domain, TaskProblem, generate_task, load_domain
from .planner import STRATEGIES, GroundProblem, Plan, ground, solve
from .reasoner import extract_errors, load_rules, materialize
from .translator import TranslationResult, TranslatorConfig, translate


@dataclass(frozen=True)
class PlannerConfig:
    strategy: str = "greedy_hadd"
    time_limit_s: float = 1.0
    costs: dict | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.time_limit_s <= 0:
            raise ValueError("time limit must be positive")
        for name, cost in (self.costs or {}).items():
            if not isinstance(cost, int) or isinstance(cost, bool) or cost < 0:
                raise ValueError(f"cost for {name} must be a non-negative integer")


def load_costs(path) -> dict:
    costs = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(costs, dict):
        raise ValueError("costs file must be a JSON object of schema -> int")
    return costs


@dataclass(frozen=True)
class PipelineConfig:
    translator: TranslatorConfig
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    catalog_path: str | None = None
    rules_path: str | None = None
    domain_path: str | None = None


class StageFailure(RuntimeError):
    """A pipeline stage raised; ``stage`` names it and ``cause`` is the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class ConstraintViolation(RuntimeError):
    def __init__(self, messages: list[str], materialized: FactSet):
        super().__init__("; ".join(messages))
        self.messages = messages
        self.materialized = materialized


@dataclass
class Outcome:
    query: str
    translation: TranslationResult
    materialized: FactSet
    task: TaskProblem
    bindings: dict
    problem: GroundProblem
    plan: Plan
    timings: dict = field(default_factory=dict)

    @property
    def reasoning_time(self) -> float:
        """Seconds spent after translation (materialize, task generation, planning)."""
        return sum(v for k, v in self.timings.items() if k != "translate")


class Pipeline:
    """Loads catalog, rules, and domain once and answers queries with them."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.catalog: Catalog = load_catalog_file(config.catalog_path)
        self.rules = load_rules(config.rules_path or data_path("rules.lp"))
        self.domain: Domain = load_domain(config.domain_path)

    def translate(self, query: str) -> TranslationResult:
        return translate(query, self.catalog, self.config.translator)

    def materialize(self, facts: FactSet) -> FactSet:
        return materialize(facts, self.rules)

    def generate_task(self, materialized: FactSet, problem_name: str = "query"):
        return generate_task(materialized, self.catalog, problem_name)

    def plan(self, task: TaskProblem) -> tuple[GroundProblem, Plan]:
        cfg = self.config.planner
        problem = ground(self.domain, task, cfg.costs)
        return problem, solve(problem, cfg.time_limit_s, cfg.strategy)

    def answer(self, query: str) -> Outcome:
        """Run every stage; raises :class:`ConstraintViolation` or :class:`StageFailure`."""
        timings: dict[str, float] = {}

        def stage(name, fn, *args):
            start = time.perf_counter()
            try:
                return fn(*args)
            except Exception as exc:
                raise StageFailure(name, exc) from exc
            finally:
                timings[name] = time.perf_counter() - start

        translation = stage("translate", self.translate, query)
        materialized = stage("materialize", self.materialize, translation.facts)
        errors = extract_errors(materialized)
        if errors:
            raise ConstraintViolation(errors, materialized)
        task, bindings = stage("gen-task", self.generate_task, materialized)
        problem, plan = stage("plan", self.plan, task)
        return Outcome(query, translation, materialized, task, bindings, problem, plan, timings)
