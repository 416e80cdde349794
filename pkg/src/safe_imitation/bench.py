"""Geometry benchmark: the same filter loop under different collision representations.

Every configured pair is imposed on every step (activation distance set to
infinity), so the constraint count is the worst case for the representation.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .cbf_filter import make_collider
from .config import RunConfig
from .pipeline import Pipeline

log = logging.getLogger(__name__)

DEFAULT_KINDS = ("spheres-k0", "spheres-k1", "boxes", "capsules")
MIN_STEPS = 100
TIMER_RESOLUTION = 1e-6


@dataclass(frozen=True)
class BenchResult:
    kind: str
    n_constraints: int
    steps: int
    mean_rate_hz: float
    mean_solve_s: float
    mean_distance_s: float
    mean_active: float

    def row(self) -> list:
        return [self.kind, self.n_constraints, self.steps, f"{self.mean_rate_hz:.1f}",
                f"{self.mean_solve_s:.6e}", f"{self.mean_distance_s:.6e}", f"{self.mean_active:.1f}"]


BENCH_HEADER = ["geometry", "constraints", "steps", "rate_hz", "solve_s", "distance_s",
                "mean_active"]


def bench_config(cfg: RunConfig | None = None, steps: int = 500) -> RunConfig:
    cfg = cfg or RunConfig(scenario="side-by-side-arm-raise")
    barrier = replace(cfg.barrier, activation_distance=math.inf)
    return cfg.with_(barrier=barrier, steps=steps, safety=True)


def run_one(cfg: RunConfig, kind: str) -> BenchResult:
    pipe = Pipeline(cfg.with_(geometry=kind), collider=make_collider(kind))
    counts, solve, dist, step, active = set(), [], [], [], []
    for rec in pipe.iter_steps():
        counts.add(len(rec.report.labels))
        solve.append(rec.report.solve_time)
        dist.append(rec.report.eval_time)
        step.append(rec.step_time)
        active.append(rec.report.n_active)
    if len(counts) != 1:
        raise RuntimeError(f"{kind}: constraint count changed between steps: {sorted(counts)}")
    mean_step = float(np.mean(step))
    return BenchResult(kind, counts.pop(), len(step), 1.0 / mean_step, float(np.mean(solve)),
                       float(np.mean(dist)), float(np.mean(active)))


def run_bench(cfg: RunConfig | None = None, kinds=DEFAULT_KINDS, steps: int = 500) -> list[BenchResult]:
    """Run each geometry kind sequentially on the same stream."""
    if steps < MIN_STEPS:
        log.warning("bench needs at least %d steps for stable timing; using %d", MIN_STEPS, MIN_STEPS)
        steps = MIN_STEPS
    cfg = bench_config(cfg, steps)
    results = []
    for kind in kinds:
        res = run_one(cfg, kind)
        while res.mean_solve_s < TIMER_RESOLUTION and res.steps < 100 * MIN_STEPS:
            log.warning("%s: solve time below timer resolution; doubling steps", kind)
            res = run_one(cfg.with_(steps=2 * res.steps), kind)
        results.append(res)
    return results


def format_table(results: list[BenchResult]) -> str:
    """Text table with one column per geometry kind."""
    kinds = [r.kind for r in results]
    rows = [
        ("Rate (Hz)", [f"{r.mean_rate_hz:.0f}" for r in results]),
        ("# Constraints", [str(r.n_constraints) for r in results]),
        ("Solve Time (ms)", [f"{1e3 * r.mean_solve_s:.3f}" for r in results]),
        ("Distance Eval (ms)", [f"{1e3 * r.mean_distance_s:.3f}" for r in results]),
        ("Initial Compile Time", ["n/a" for _ in results]),
    ]
    width = max(12, *(len(k) for k in kinds))
    label_w = max(len(name) for name, _ in rows)
    lines = [" " * label_w + "  " + "  ".join(k.rjust(width) for k in kinds)]
    for name, cells in rows:
        lines.append(name.ljust(label_w) + "  " + "  ".join(c.rjust(width) for c in cells))
    return "\n".join(lines)


def write_bench_csv(results: list[BenchResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_HEADER + ["compile_time"])
        for r in results:
            w.writerow(r.row() + ["n/a"])
