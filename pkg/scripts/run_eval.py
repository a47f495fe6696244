"""Evaluate the pipeline on an annotated dataset and write a JSON report.

    python scripts/run_eval.py --runs 5 --out results/eval.json

Uses the fixture translator unless ``--translator llm`` is given, in which
case the endpoint key is read from QAPLAN_LLM_API_KEY.
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from qaplan.catalog import data_path
from qaplan.evaluation import load_dataset, run_eval
from qaplan.pipeline import Pipeline, PipelineConfig, PlannerConfig
from qaplan.translator import TranslatorConfig


@dataclass
class EvalRun:
    dataset: str = str(data_path("dataset.jsonl"))
    runs: int = 1
    workers: int = 1
    translator: str = "fixture"
    fixtures: str = str(data_path("fixtures.json"))
    llm_endpoint: str | None = None
    llm_model: str | None = None
    temperature: float = 0.0
    strategy: str = "greedy_hadd"
    time_limit_s: float = 1.0
    out: str | None = None


def parse_args() -> EvalRun:
    defaults = EvalRun()
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, value in asdict(defaults).items():
        kind = type(value) if value is not None else str
        p.add_argument("--" + name.replace("_", "-"), type=kind, default=value)
    return EvalRun(**vars(p.parse_args()))


def main() -> None:
    cfg = parse_args()
    if cfg.translator == "llm":
        tcfg = TranslatorConfig("llm", cfg.llm_endpoint, cfg.llm_model, cfg.temperature)
    else:
        tcfg = TranslatorConfig("fixture", fixtures_path=cfg.fixtures)
    pipeline = Pipeline(PipelineConfig(tcfg, PlannerConfig(cfg.strategy, cfg.time_limit_s)))
    cases = load_dataset(cfg.dataset, pipeline.catalog)

    start = time.perf_counter()
    report = run_eval(cases, pipeline, cfg.runs, cfg.workers)
    elapsed = time.perf_counter() - start

    print(report.to_text(), end="")
    times = [r.reasoning_time for r in report.results[0] if r.reasoning_time is not None]
    if times:
        print(f"non-LLM time per query: mean {1000 * sum(times) / len(times):.2f} ms, max {1000 * max(times):.2f} ms")
    print(f"wall time: {elapsed:.2f}s")
    if cfg.out:
        path = Path(cfg.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"config": asdict(cfg), **report.to_json()}, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
