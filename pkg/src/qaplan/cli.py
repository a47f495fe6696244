"""``qaplan`` command line: one sub-command per pipeline stage plus ``answer`` and ``eval``.

Exit codes: 0 ok, 1 pipeline failure, 2 domain-constraint violation,
64 usage error, 65 malformed input data, 66 missing input file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .asp import FactSet, ParseError, parse_facts, render_facts
from .catalog import CatalogError, data_path
from .evaluation import DatasetSchemaError, load_dataset, run_eval
from .executor import InfoSource, execute, is_executable, render_plan
from .pddl import PddlError, TaskGenerationError, parse_task, render_task
from .pipeline import ConstraintViolation, Pipeline, PipelineConfig, PlannerConfig, StageFailure, load_costs
from .planner import STRATEGIES, PlanningError, ground, solve
from .reasoner import BuiltinDomainError, RuleError, extract_errors
from .translator import API_KEY_ENV, TranslationError, TranslatorConfig

EXIT_OK, EXIT_FAILURE, EXIT_CONSTRAINT = 0, 1, 2
EXIT_USAGE, EXIT_DATA, EXIT_NOINPUT = 64, 65, 66


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(EXIT_USAGE, message)


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--catalog", help="catalog JSON (default: bundled)")
    g.add_argument("--rules", help="domain rules file (default: bundled)")
    g.add_argument("--domain", help="domain PDDL (default: bundled)")
    g.add_argument("--translator", choices=("llm", "fixture"), default="fixture")
    g.add_argument("--fixtures", help="fixture translations (default: bundled)")
    g.add_argument("--format", choices=("text", "json"), default="text")
    g.add_argument("--llm-endpoint", help=f"OpenAI-compatible base URL; key read from ${API_KEY_ENV}")
    g.add_argument("--llm-model")
    g.add_argument("--temperature", type=float, default=0.0)
    g.add_argument("--max-retries", type=int, default=2)
    g.add_argument("-v", "--verbose", action="store_true")


def _planner_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", choices=STRATEGIES, default="greedy_hadd")
    p.add_argument("--time-limit", type=float, default=1.0, help="search time limit in seconds")
    p.add_argument("--costs", help="JSON map action schema -> integer cost")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qaplan", description="Answer queries by planning over API actions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("translate", help="query -> intermediate facts")
    p.add_argument("query")
    _common(p)

    p = sub.add_parser("materialize", help="intermediate facts -> materialized facts")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("query", nargs="?")
    src.add_argument("--facts", help="facts file ('-' for stdin)")
    _common(p)

    p = sub.add_parser("gen-task", help="query or facts -> task PDDL")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("query", nargs="?")
    src.add_argument("--facts", help="intermediate or materialized facts file ('-' for stdin)")
    p.add_argument("--problem-name", default="query")
    p.add_argument("--bindings-out", help="write the binding environment as JSON here")
    _common(p)

    p = sub.add_parser("plan", help="task PDDL -> plan")
    p.add_argument("--task", required=True, help="task PDDL file ('-' for stdin)")
    p.add_argument("--bindings", help="binding environment JSON from gen-task")
    _planner_flags(p)
    _common(p)

    p = sub.add_parser("answer", help="query -> rendered plan (optionally executed)")
    p.add_argument("query")
    p.add_argument("--execute", action="store_true", help="run the plan against stub APIs")
    p.add_argument("--answers", help="JSON answer map for get_info steps (default: prompt)")
    _planner_flags(p)
    _common(p)

    p = sub.add_parser("eval", help="score the pipeline on an annotated dataset")
    p.add_argument("--dataset", help="JSONL dataset (default: bundled)")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    _planner_flags(p)
    _common(p)
    return parser


# --- helpers ---------------------------------------------------------------------

def _existing(path: str | None, what: str) -> str | None:
    if path is not None and path != "-" and not Path(path).is_file():
        raise CliError(EXIT_NOINPUT, f"{what} not found: {path}")
    return path


def _read(path: str, what: str) -> str:
    _existing(path, what)
    return sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")


def _config(args) -> PipelineConfig:
    for attr, what in (("catalog", "catalog"), ("rules", "rules file"), ("domain", "domain file"),
                       ("fixtures", "fixtures file"), ("costs", "costs file")):
        _existing(getattr(args, attr, None), what)
    try:
        if args.translator == "llm":
            if not os.environ.get(API_KEY_ENV):
                raise CliError(EXIT_USAGE, f"the llm translator needs ${API_KEY_ENV}")
            tcfg = TranslatorConfig(
                "llm", args.llm_endpoint, args.llm_model, args.temperature, args.max_retries,
            )
        else:
            tcfg = TranslatorConfig(
                "fixture", fixtures_path=args.fixtures or str(data_path("fixtures.json")),
                temperature=args.temperature, max_retries=args.max_retries,
            )
        pcfg = PlannerConfig()
        if hasattr(args, "strategy"):
            costs = load_costs(args.costs) if args.costs else None
            pcfg = PlannerConfig(args.strategy, args.time_limit, costs)
    except (ValueError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    return PipelineConfig(tcfg, pcfg, args.catalog, args.rules, args.domain)


def _pipeline(args) -> Pipeline:
    config = _config(args)
    try:
        return Pipeline(config)
    except (CatalogError, ParseError, RuleError, PddlError, ValueError) as exc:
        raise CliError(EXIT_DATA, f"cannot load pipeline inputs: {exc}") from None


def _emit(args, text: str, payload) -> None:
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        sys.stdout.write(text)


def _query(args) -> str:
    if not args.query or not args.query.strip():
        raise CliError(EXIT_USAGE, "query must be non-empty")
    return args.query


def _translate(pipe: Pipeline, query: str) -> FactSet:
    try:
        return pipe.translate(query).facts
    except TranslationError as exc:
        raise CliError(EXIT_FAILURE, f"[translate] {exc}") from None


def _load_facts(path: str) -> FactSet:
    try:
        return parse_facts(_read(path, "facts file"))
    except ParseError as exc:
        raise CliError(EXIT_DATA, f"{path}: {exc}") from None


def _materialize(pipe: Pipeline, facts: FactSet) -> FactSet:
    try:
        materialized = pipe.materialize(facts)
    except BuiltinDomainError as exc:
        raise CliError(EXIT_FAILURE, f"[materialize] {exc}") from None
    errors = extract_errors(materialized)
    if errors:
        raise CliError(EXIT_CONSTRAINT, "\n".join(errors))
    return materialized


def _facts_input(args, pipe: Pipeline) -> FactSet:
    if args.facts is not None:
        return _load_facts(args.facts)
    return _translate(pipe, _query(args))


# --- commands --------------------------------------------------------------------

def cmd_translate(args) -> int:
    pipe = _pipeline(args)
    facts = _translate(pipe, _query(args))
    _emit(args, render_facts(facts), [str(a) for a in facts])
    return EXIT_OK


def cmd_materialize(args) -> int:
    pipe = _pipeline(args)
    materialized = _materialize(pipe, _facts_input(args, pipe))
    _emit(args, render_facts(materialized), [str(a) for a in materialized])
    return EXIT_OK


def cmd_gen_task(args) -> int:
    pipe = _pipeline(args)
    materialized = _materialize(pipe, _facts_input(args, pipe))
    try:
        task, bindings = pipe.generate_task(materialized, args.problem_name)
    except TaskGenerationError as exc:
        raise CliError(EXIT_FAILURE, f"[gen-task] {exc}") from None
    if args.bindings_out:
        Path(args.bindings_out).write_text(json.dumps(bindings, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    text = render_task(task)
    _emit(args, text, {"task": text, "bindings": bindings})
    return EXIT_OK


def cmd_plan(args) -> int:
    pipe = _pipeline(args)
    try:
        task = parse_task(_read(args.task, "task file"), pipe.domain)
    except (ParseError, PddlError) as exc:
        raise CliError(EXIT_DATA, f"{args.task}: {exc}") from None
    bindings = {}
    if args.bindings:
        try:
            bindings = json.loads(_read(args.bindings, "bindings file"))
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_DATA, f"{args.bindings}: {exc}") from None
    cfg = pipe.config.planner
    try:
        problem = ground(pipe.domain, task, cfg.costs)
        plan = solve(problem, cfg.time_limit_s, cfg.strategy)
    except (PlanningError, ValueError) as exc:
        raise CliError(EXIT_FAILURE, f"[plan] {exc}") from None
    _emit(args, render_plan(plan, bindings, pipe.catalog), {"plan": plan.to_json(), "cost": plan.cost})
    return EXIT_OK


def cmd_answer(args) -> int:
    query = _query(args)
    pipe = _pipeline(args)
    info = None
    if args.execute:
        if args.answers:
            try:
                info = InfoSource.from_file(_existing(args.answers, "answers file"))
            except (ValueError, json.JSONDecodeError) as exc:
                raise CliError(EXIT_DATA, f"{args.answers}: {exc}") from None
        else:
            info = InfoSource("interactive_terminal")
    try:
        outcome = pipe.answer(query)
    except ConstraintViolation as exc:
        raise CliError(EXIT_CONSTRAINT, "\n".join(exc.messages)) from None
    except StageFailure as exc:
        raise CliError(EXIT_FAILURE, str(exc)) from None
    text = render_plan(outcome.plan, outcome.bindings, pipe.catalog)
    payload = {"plan": outcome.plan.to_json(), "bindings": outcome.bindings, "rendered": text}
    code = EXIT_OK
    if info is not None:
        if is_executable(outcome.plan, pipe.catalog):
            trace = execute(outcome.plan, outcome.bindings, info, pipe.catalog)
            payload["trace"] = trace.to_json()
            text += "".join(f"# {r.step}: {r.action} -> {r.output}\n" for r in trace.records)
            if not trace.completed:
                text += f"# aborted at step {trace.aborted_step}: {trace.reason}\n"
                code = EXIT_FAILURE
        else:
            text += "# how-to plan: not executed\n"
            payload["trace"] = None
    _emit(args, text, payload)
    return code


def cmd_eval(args) -> int:
    path = _existing(args.dataset, "dataset") or str(data_path("dataset.jsonl"))
    if args.runs < 1 or args.workers < 1:
        raise CliError(EXIT_USAGE, "--runs and --workers must be positive")
    pipe = _pipeline(args)
    try:
        cases = load_dataset(path, pipe.catalog)
    except DatasetSchemaError as exc:
        raise CliError(EXIT_DATA, f"{path}: {exc}") from None
    if not cases:
        raise CliError(EXIT_DATA, f"{path}: dataset is empty")
    report = run_eval(cases, pipe, args.runs, args.workers)
    _emit(args, report.to_text(), report.to_json())
    return EXIT_OK


COMMANDS = {
    "translate": cmd_translate,
    "materialize": cmd_materialize,
    "gen-task": cmd_gen_task,
    "plan": cmd_plan,
    "answer": cmd_answer,
    "eval": cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except CliError as exc:
        if exc.code == EXIT_CONSTRAINT:
            # constraint messages are answers for the user, not diagnostics
            print(exc)
        else:
            print(f"qaplan: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
