"""Compare search strategies on bundled and random tasks.

For each strategy, reports mean/max search time and plan length relative to
the breadth-first optimum, plus cost relative to the uniform-cost optimum
when random action costs are drawn.

    python scripts/planner_benchmark.py --random 500 --seed 1
"""

from __future__ import annotations

import argparse
import random
import statistics
import sys
import time
from pathlib import Path

from qaplan.catalog import data_path, load_catalog_file
from qaplan.evaluation import load_dataset
from qaplan.pddl import generate_task, load_domain
from qaplan.pipeline import Pipeline, PipelineConfig
from qaplan.planner import STRATEGIES, bfs_solve, ground, solve
from qaplan.translator import TranslatorConfig

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from generators import random_materialized  # noqa: E402


def bundled_tasks():
    pipeline = Pipeline(PipelineConfig(TranslatorConfig(fixtures_path=str(data_path("fixtures.json")))))
    tasks = []
    for case in load_dataset(data_path("dataset.jsonl"), pipeline.catalog):
        if case.expect_error:
            continue
        m = pipeline.materialize(pipeline.translate(case.query).facts)
        tasks.append(pipeline.generate_task(m)[0])
    return tasks


def random_tasks(n: int, seed: int, catalog):
    rng = random.Random(seed)
    return [generate_task(random_materialized(rng, catalog), catalog)[0] for _ in range(n)]


def bench(problems, strategy: str) -> dict:
    times, ratios = [], []
    for problem, optimum in problems:
        start = time.perf_counter()
        plan = solve(problem, time_limit_s=5.0, strategy=strategy)
        times.append(time.perf_counter() - start)
        ratios.append(plan.cost / optimum if optimum else 1.0)
    return {
        "mean_ms": 1000 * statistics.fmean(times),
        "max_ms": 1000 * max(times),
        "mean_ratio": statistics.fmean(ratios),
        "max_ratio": max(ratios),
    }


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--random", type=int, default=300, help="number of random tasks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--costs", action="store_true", help="draw random integer action costs")
    args = p.parse_args()

    catalog, domain = load_catalog_file(), load_domain()
    rng = random.Random(args.seed)
    suites = {"bundled": bundled_tasks(), "random": random_tasks(args.random, args.seed, catalog)}

    print(f"{'suite':<8} {'strategy':<12} {'mean ms':>8} {'max ms':>8} {'mean ratio':>10} {'max ratio':>9}")
    for name, tasks in suites.items():
        problems = []
        for task in tasks:
            costs = {a.name: rng.randint(1, 9) for a in domain.actions} if args.costs else None
            problem = ground(domain, task, costs)
            optimum = solve(problem, time_limit_s=30.0, strategy="astar_hmax").cost if args.costs \
                else len(bfs_solve(problem))
            problems.append((problem, optimum))
        for strategy in STRATEGIES:
            r = bench(problems, strategy)
            print(f"{name:<8} {strategy:<12} {r['mean_ms']:>8.2f} {r['max_ms']:>8.2f} "
                  f"{r['mean_ratio']:>10.3f} {r['max_ratio']:>9.3f}")


if __name__ == "__main__":
    main()
