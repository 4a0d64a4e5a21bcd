"""Command line interface: run, validate, bench-transfer, experiment."""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import __version__
from .experiments import EXPERIMENTS, run_experiment
from .outputs import StatsCollector
from .scene import SceneError, load_scene
from .simulate import run_simulation
from .transfer import build_sort_plan, scatter_naive, scatter_reduce


def _cmd_run(args) -> int:
    try:
        config = load_scene(args.scene)
    except SceneError as exc:
        print(exc, file=sys.stderr)
        return 2
    deterministic = True if args.deterministic else (False if args.fast else None)
    result = run_simulation(config, duration=args.duration, out_dir=args.out,
                            deterministic=deterministic, workers=args.workers)
    print(StatsCollector.table_row(result.stats))
    if result.exit_code != 0:
        print(f"run aborted at step {result.diverged_at} (non-finite state); "
              f"see manifest for the last good frame", file=sys.stderr)
    return result.exit_code


def _cmd_validate(args) -> int:
    try:
        config = load_scene(args.scene)
    except SceneError as exc:
        print(exc, file=sys.stderr)
        return 2
    print(f"{args.scene}: OK ({config.name}: {len(config.volumes)} volumes, "
          f"{len(config.bodies)} bodies, dt={config.step.dt}, "
          f"substeps={config.step.substeps})")
    return 0


def _bench_payload(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    h = 0.01
    positions = rng.uniform(0.0, 64 * h, size=(n, 3))
    # synthetic 27-node stencil targets with a 7-channel P2G-like payload
    from .grid import SparseGrid
    from .mpm import build_stencil
    grid = SparseGrid.allocate(positions, h)
    stencil = build_stencil(positions, grid)
    values = rng.standard_normal((n, 27, 7))
    return grid, stencil, values, positions, h


def _cmd_bench_transfer(args) -> int:
    n = args.particles
    grid, stencil, values, positions, h = _bench_payload(n)
    plan = build_sort_plan(positions, h, epoch=0)
    modes = ["deterministic", "fast", "naive"] if args.mode == "all" else [args.mode]
    print("mode,particles,workers,ms_per_scatter,rel_diff_vs_deterministic")
    reference = scatter_reduce(stencil.nodes, values, grid.n_nodes, plan, 0,
                               mode="deterministic")
    scale = np.max(np.abs(reference))
    for mode in modes:
        reps = max(1, args.repeats)
        t0 = time.perf_counter()
        for _ in range(reps):
            if mode == "naive":
                out = scatter_naive(stencil.nodes, values, grid.n_nodes)
            else:
                out = scatter_reduce(stencil.nodes, values, grid.n_nodes, plan, 0,
                                     mode=mode, workers=args.workers)
        ms = (time.perf_counter() - t0) * 1e3 / reps
        rel = np.max(np.abs(out - reference)) / scale
        print(f"{mode},{n},{args.workers or 'auto'},{ms:.3f},{rel:.3e}")
    return 0


def _cmd_experiment(args) -> int:
    result, analysis = run_experiment(args.name, args.out, duration=args.duration)
    print(StatsCollector.table_row(result.stats))
    for key, val in analysis.items():
        print(f"{key}: {val}")
    return result.exit_code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mpmrb",
        description="MPM + rigid body simulator with convex lagged contact")
    parser.add_argument("--version", action="version", version=f"mpmrb {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scene file")
    p_run.add_argument("scene")
    p_run.add_argument("--duration", type=float, default=None,
                       help="override the scene duration [s]")
    p_run.add_argument("--out", default=None, help="output directory")
    group = p_run.add_mutually_exclusive_group()
    group.add_argument("--deterministic", action="store_true",
                       help="force bitwise-reproducible mode")
    group.add_argument("--fast", action="store_true", help="force fast scatter mode")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a scene file")
    p_val.add_argument("scene")
    p_val.set_defaults(func=_cmd_validate)

    p_bench = sub.add_parser("bench-transfer", help="benchmark the scatter engine")
    p_bench.add_argument("--particles", type=int, default=100_000)
    p_bench.add_argument("--mode", default="all",
                         choices=["all", "deterministic", "fast", "naive"])
    p_bench.add_argument("--workers", type=int, default=None)
    p_bench.add_argument("--repeats", type=int, default=3)
    p_bench.set_defaults(func=_cmd_bench_transfer)

    p_exp = sub.add_parser("experiment", help="run a named reference experiment")
    p_exp.add_argument("name", choices=sorted(EXPERIMENTS))
    p_exp.add_argument("--out", default=None)
    p_exp.add_argument("--duration", type=float, default=None)
    p_exp.set_defaults(func=_cmd_experiment)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
