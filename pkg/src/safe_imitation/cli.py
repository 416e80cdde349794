"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 ``run --check``
found a forward-invariance violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .bench import DEFAULT_KINDS, format_table, run_bench, write_bench_csv
from .config import ConfigError, RunConfig, load_config
from .pipeline import Pipeline, emit_plot_data, run_pipeline
from .scenarios import SCENARIOS, generate
from .skeleton_stream import serialize_stream, write_stream

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

# forward-invariance tolerance per control period
CHECK_TOLERANCE = {0.01: 1e-3, 0.005: 5e-4}
CHECK_SCENARIOS = ("cross-arm-reach", "side-by-side-arm-raise")


def _base_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if getattr(args, "scenario", None):
        changes.update(scenario=args.scenario, input_path=None)
    if getattr(args, "input", None):
        changes["input_path"] = args.input
    if getattr(args, "no_safety", False):
        changes["safety"] = False
    if getattr(args, "steps", None) is not None:
        changes["steps"] = args.steps
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "no_calibrate", False):
        changes["calibrate"] = False
    if getattr(args, "geometry", None):
        changes["geometry"] = args.geometry
    if getattr(args, "dt", None) is not None:
        changes["barrier"] = replace(cfg.barrier, dt=args.dt)
    try:
        return cfg.with_(**changes) if changes else cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _check(cfg: RunConfig) -> list[str]:
    """Re-run the built-in scenarios with safety on at both check periods."""
    failures = []
    for name in CHECK_SCENARIOS:
        for dt, tol in CHECK_TOLERANCE.items():
            run_cfg = cfg.with_(scenario=name, input_path=None, safety=True, steps=None,
                                barrier=replace(cfg.barrier, dt=dt))
            result = Pipeline(run_cfg).run()
            ok = result.min_h >= -tol
            print(f"check {name} dt={dt}: min_h={result.min_h:.6f} (bound {-tol}) "
                  f"{'PASS' if ok else 'FAIL'}")
            if not ok:
                failures.append(f"{name}@{dt}")
    return failures


def cmd_run(args) -> int:
    cfg = _base_config(args)
    result = run_pipeline(cfg, args.out)
    summary = result.summary()
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.out:
        emit_plot_data(args.out)
    if args.check:
        return EXIT_CHECK if _check(cfg) else EXIT_OK
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _base_config(args)
    if not args.scenario and not args.config:
        cfg = cfg.with_(scenario="side-by-side-arm-raise")
    results = run_bench(cfg, kinds=args.kinds or DEFAULT_KINDS, steps=args.steps or 500)
    print(format_table(results))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_bench_csv(results, os.path.join(args.out, "bench.csv"))
    return EXIT_OK


def cmd_gen(args) -> int:
    frames = generate(args.scenario, args.duration, args.rate, noise=args.noise,
                      outlier_rate=args.outlier_rate, seed=args.seed or 0)
    if args.out in (None, "-"):
        sys.stdout.write(serialize_stream(frames))
    else:
        parent = os.path.dirname(args.out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        write_stream(args.out, frames)
    return EXIT_OK


def cmd_plot_data(args) -> int:
    paths = emit_plot_data(args.run_dir, args.out)
    for p in paths.values():
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safe-imitation", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--scenario", choices=sorted(SCENARIOS))
        p.add_argument("--steps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--dt", type=float, help="control period in seconds")
        p.add_argument("--out", help="output directory")

    run = sub.add_parser("run", help="closed-loop simulation")
    common(run)
    run.add_argument("--input", help="skeleton stream file (JSON lines)")
    run.add_argument("--no-safety", action="store_true", help="command q_nom directly")
    run.add_argument("--no-calibrate", action="store_true",
                     help="use retarget.theta_home from the config instead of the neutral prefix")
    run.add_argument("--geometry", help="capsules | boxes | spheres-k<N>")
    run.add_argument("--check", action="store_true",
                     help="also re-check forward invariance on the built-in scenarios")
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="collision geometry benchmark")
    common(bench)
    bench.add_argument("--kinds", nargs="+", help=f"default: {' '.join(DEFAULT_KINDS)}")
    bench.set_defaults(func=cmd_bench)

    gen = sub.add_parser("gen", help="write a synthetic scenario stream")
    gen.add_argument("--scenario", choices=sorted(SCENARIOS), required=True)
    gen.add_argument("--duration", type=float, default=5.0)
    gen.add_argument("--rate", type=float, default=100.0)
    gen.add_argument("--noise", type=float, default=0.0)
    gen.add_argument("--outlier-rate", type=float, default=0.0)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out", help="output file (default stdout)")
    gen.set_defaults(func=cmd_gen)

    plot = sub.add_parser("plot-data", help="plot-ready CSVs from a run directory")
    plot.add_argument("run_dir")
    plot.add_argument("--out", help="output directory (default: the run directory)")
    plot.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors with status 2; those are configuration errors here
        return EXIT_CONFIG if exc.code == 2 else int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
