"""Command-line entry point: optimize | sweep | converge | validate."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .channel import fpa_grid_layout
from .ergodic import mc_ergodic_rate
from .experiments import (
    DEFAULT_CONFIG,
    Scenario,
    converge,
    generate_scenario,
    run,
    validate,
)
from .mrt_optimizer import optimize_mrt
from .zf_optimizer import optimize_zf


def _load_scenario(args: argparse.Namespace) -> Scenario:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            conf = json.load(fh)
    else:
        conf = dict(DEFAULT_CONFIG)
    return generate_scenario(conf, seed=args.seed)


def _cmd_optimize(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args)
    cfg, users = scenario.cfg, list(scenario.users[: scenario.cfg.n_users])
    base = fpa_grid_layout(cfg)
    wanted = [s for s in scenario.schemes if s.startswith("ma_")]
    if not wanted:
        wanted = ["ma_zf"]
    for scheme in wanted:
        optimizer = optimize_zf if scheme == "ma_zf" else optimize_mrt
        layout, trace = optimizer(base, users, cfg)
        print(f"[{scheme}] converged={trace.converged} sweeps={trace.n_sweeps}")
        print(f"[{scheme}] objective {trace.initial_value:.6f} -> {trace.final_value:.6f}")
        for n, (x, y) in enumerate(layout.positions):
            print(f"[{scheme}] antenna {n}: ({x:+.6f}, {y:+.6f})")
        beamformer = "zf" if scheme == "ma_zf" else "mrt"
        mc = mc_ergodic_rate(
            layout,
            users,
            cfg,
            beamformer,
            scenario.mc_samples,
            np.random.default_rng(scenario.seed),
            n_threads=args.threads,
        )
        print(f"[{scheme}] monte-carlo sum rate {mc.sum:.6f} +/- {mc.sum_std_err:.6f}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args)
    rows = run(scenario, out_dir=args.out, n_threads=args.threads)
    print(f"wrote {len(rows)} rows to {os.path.join(args.out, 'sweep.csv')}")
    return 0


def _cmd_converge(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args)
    traces = converge(scenario, out_dir=args.out)
    for scheme, trace in traces.items():
        print(
            f"[{scheme}] steps={len(trace.steps)} sweeps={trace.n_sweeps} "
            f"converged={trace.converged} final={trace.final_value:.6f}"
        )
    print(f"wrote trace to {os.path.join(args.out, 'converge.csv')}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args)
    out_path = os.path.join(args.out, "validation.json") if args.out else None
    report = validate(scenario, out_path=out_path, quick=args.quick)
    for check in report["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(
            f"{status} {check['name']}: residual {check['residual']:.3g} "
            f"(threshold {check['threshold']:.3g}) {check['detail']}"
        )
    print("all checks passed" if report["all_passed"] else "validation FAILED")
    return 0 if report["all_passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ma-mimo",
        description="Two-timescale movable-antenna MU-MIMO simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "optimize": (_cmd_optimize, "optimize antenna positions for one scenario"),
        "sweep": (_cmd_sweep, "run a parameter sweep and write sweep.csv"),
        "converge": (_cmd_converge, "emit per-iteration optimizer traces"),
        "validate": (_cmd_validate, "run the numerical oracle suite"),
    }
    for name, (fn, help_text) in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None, help="JSON scenario file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=str, default="results", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="Monte-Carlo worker threads")
        if name == "validate":
            p.add_argument(
                "--quick", action="store_true", help="reduced sampling budgets"
            )
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
