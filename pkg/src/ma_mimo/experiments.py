"""Scenario generation, sweep execution, convergence traces, and validation.

A scenario is described by a JSON document (or equivalent dict) with keys
``seed``, ``system``, ``users`` or ``user_gen``, optional ``sweep``,
``schemes``, ``mc_samples``, and ``output``.  All physical quantities are in
SI units; any numeric key may instead carry a ``_db`` or ``_dbm`` suffix and
is converted to linear units by the loader.

Sweep results are persisted as CSV with the header

    scenario,scheme,sweep_var,sweep_value,sum_rate,stderr,closed_form,iters,
    wall_ms,rate_user_1,...

where ``sum_rate``/``stderr`` come from the Monte-Carlo estimator and
``closed_form`` carries the matching analytic value where one exists.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, replace

import numpy as np

from .ao import OptimizerTrace
from .channel import (
    AntennaLayout,
    Region,
    SystemConfig,
    UserStats,
    fpa_grid_layout,
    large_scale_fading,
    random_feasible_layout,
    region_half_widths,
)
from .checks import (
    CheckResult,
    check_curvature_bounds,
    check_gradients,
    check_jensen_bound,
    check_moment_identities,
    check_mrt_approx,
    check_mrt_minorization,
    check_position_invariance,
    check_woodbury,
    check_zf_minorization,
)
from .ergodic import mc_ergodic_rate, mrt_ergodic_approx, zf_ergodic_lower_bound
from .mrt_optimizer import optimize_mrt
from .zf_optimizer import optimize_zf

SCHEMES = ("ma_zf", "ma_mrt", "fpa_zf", "fpa_mrt", "fpa_zf_wf", "fpa_wmmse")

# scheme -> (layout source, Monte-Carlo beamformer)
_SCHEME_TABLE = {
    "ma_zf": ("ma_zf", "zf"),
    "ma_mrt": ("ma_mrt", "mrt"),
    "fpa_zf": ("fpa", "zf"),
    "fpa_mrt": ("fpa", "mrt_popt"),
    "fpa_zf_wf": ("fpa", "zf_wf"),
    "fpa_wmmse": ("fpa", "wmmse"),
}

SWEEP_VARIABLES = ("p_tot", "kappa", "region_A", "n_users")


@dataclass(frozen=True)
class Sweep:
    variable: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep variable {self.variable!r}")
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0 or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep values must be strictly increasing")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class Scenario:
    seed: int
    cfg: SystemConfig
    users: tuple[UserStats, ...]
    schemes: tuple[str, ...]
    sweep: Sweep | None = None
    mc_samples: int = 20_000
    name: str = ""

    def __post_init__(self):
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        if not self.name:
            object.__setattr__(self, "name", f"seed{self.seed}")


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    scheme: str
    sweep_var: str
    sweep_value: float
    sum_rate: float
    stderr: float
    closed_form: float | None
    iters: int
    wall_ms: float
    per_user: tuple[float, ...]


DEFAULT_CONFIG: dict = {
    "seed": 1,
    "system": {
        "n_antennas": 6,
        "n_users": 5,
        "wavelength": 1.0,
        "p_tot": 1.0,
        "d_min": 0.5,
        "region_size": 2.0,
        "beta0_db": -40.0,
        "alpha": 2.8,
    },
    "user_gen": {
        "kappa": 100.0,
        "noise_power_dbm": -80.0,
        "dist_range": [50.0, 70.0],
    },
    "schemes": ["ma_zf", "ma_mrt", "fpa_zf"],
    "mc_samples": 20_000,
}


def _convert_db(obj):
    """Recursively convert *_db / *_dbm keys to linear SI values."""
    if isinstance(obj, dict):
        out = {}
        for key, val in obj.items():
            if isinstance(val, (dict, list)):
                out[key] = _convert_db(val)
            elif key.endswith("_dbm"):
                out[key[:-4]] = 10.0 ** ((float(val) - 30.0) / 10.0)
            elif key.endswith("_db"):
                out[key[:-3]] = 10.0 ** (float(val) / 10.0)
            else:
                out[key] = val
        return out
    if isinstance(obj, list):
        return [_convert_db(v) for v in obj]
    return obj


def generate_users(
    n_users: int,
    kappa: float,
    noise_power: float,
    cfg: SystemConfig,
    dist_range: tuple[float, float],
    rng: np.random.Generator,
) -> list[UserStats]:
    """Draw user statistics: uniform angles, uniform distances, power-law gains."""
    users = []
    lo, hi = dist_range
    for _ in range(n_users):
        theta = rng.uniform(-math.pi / 2, math.pi / 2)
        phi = rng.uniform(-math.pi / 2, math.pi / 2)
        d = rng.uniform(lo, hi)
        users.append(
            UserStats(
                theta=theta,
                phi=phi,
                kappa=kappa,
                beta=large_scale_fading(d, cfg.beta0, cfg.alpha),
                noise_power=noise_power,
                distance=d,
            )
        )
    return users


def generate_scenario(config: dict | None = None, seed: int | None = None) -> Scenario:
    """Build a scenario from a config dict; identical inputs give identical output."""
    raw = dict(DEFAULT_CONFIG if config is None else config)
    conf = _convert_db(raw)
    if seed is not None:
        conf["seed"] = seed
    seed_val = int(conf.get("seed", 0))

    sys_conf = dict(conf.get("system", {}))
    n_antennas = int(sys_conf.pop("n_antennas", 6))
    n_users = int(sys_conf.pop("n_users", 5))
    wavelength = float(sys_conf.pop("wavelength", 1.0))
    if "region" in sys_conf:
        reg = sys_conf.pop("region")
        region = Region(float(reg["x_half"]), float(reg["y_half"]))
        sys_conf.pop("region_size", None)
    else:
        size = float(sys_conf.pop("region_size", 2.0))
        region = Region(*region_half_widths(n_antennas, size, wavelength))
    cfg = SystemConfig(
        n_antennas=n_antennas,
        n_users=n_users,
        region=region,
        wavelength=wavelength,
        **{k: float(v) for k, v in sys_conf.items()},
    )

    sweep = None
    if conf.get("sweep"):
        sweep = Sweep(conf["sweep"]["variable"], tuple(conf["sweep"]["values"]))

    if "users" in conf:
        users = tuple(UserStats(**u) for u in conf["users"])
    else:
        gen = dict(conf.get("user_gen", {}))
        count = n_users
        if sweep is not None and sweep.variable == "n_users":
            count = max(count, int(max(sweep.values)))
        rng = np.random.default_rng(seed_val)
        users = tuple(
            generate_users(
                count,
                float(gen.get("kappa", 100.0)),
                float(gen.get("noise_power", 1e-11)),
                cfg,
                tuple(gen.get("dist_range", (50.0, 70.0))),
                rng,
            )
        )

    return Scenario(
        seed=seed_val,
        cfg=cfg,
        users=users,
        schemes=tuple(conf.get("schemes", ["ma_zf", "ma_mrt", "fpa_zf"])),
        sweep=sweep,
        mc_samples=int(conf.get("mc_samples", 20_000)),
        name=str(conf.get("name", "")),
    )


def load_config(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return generate_scenario(json.load(fh))


def _apply_sweep(
    scenario: Scenario, value: float | None
) -> tuple[SystemConfig, list[UserStats]]:
    """System config and user list at one sweep point."""
    cfg = scenario.cfg
    users = list(scenario.users[: cfg.n_users])
    if value is None or scenario.sweep is None:
        return cfg, users
    var = scenario.sweep.variable
    if var == "p_tot":
        return replace(cfg, p_tot=float(value)), users
    if var == "kappa":
        return cfg, [replace(u, kappa=float(value)) for u in users]
    if var == "region_A":
        region = Region(*region_half_widths(cfg.n_antennas, float(value), cfg.wavelength))
        return replace(cfg, region=region), users
    if var == "n_users":
        m = int(value)
        if m > len(scenario.users):
            raise ValueError("scenario does not carry enough users for the sweep")
        return replace(cfg, n_users=m), list(scenario.users[:m])
    raise ValueError(f"unknown sweep variable {var!r}")


def _layout_for(
    kind: str, cfg: SystemConfig, users: list[UserStats]
) -> tuple[AntennaLayout, OptimizerTrace | None]:
    base = fpa_grid_layout(cfg)
    if kind == "fpa":
        return base, None
    if kind == "ma_mrt":
        layout, trace = optimize_mrt(base, users, cfg)
        return layout, trace
    if kind == "ma_zf":
        layout, trace = optimize_zf(base, users, cfg)
        return layout, trace
    raise ValueError(kind)


def _closed_form(
    scheme: str, layout: AntennaLayout, users: list[UserStats], cfg: SystemConfig
) -> float | None:
    if scheme in ("ma_mrt",):
        return mrt_ergodic_approx(layout, users, cfg).sum
    if scheme in ("ma_zf", "fpa_zf"):
        return zf_ergodic_lower_bound(layout, users, cfg).sum
    return None


def run(
    scenario: Scenario, out_dir: str | None = None, n_threads: int = 1
) -> list[ResultRow]:
    """Execute the scenario's sweep and persist rows to ``sweep.csv``.

    The Monte-Carlo stream of each scheme is fixed by (seed, scheme), so the
    channel draws are shared across sweep points and rates inherit the exact
    per-draw monotonicity in transmit power.
    """
    points: list[float | None]
    sweep_var = scenario.sweep.variable if scenario.sweep else ""
    points = list(scenario.sweep.values) if scenario.sweep else [None]
    rows: list[ResultRow] = []
    for value in points:
        cfg_v, users_v = _apply_sweep(scenario, value)
        layouts: dict[str, tuple[AntennaLayout, OptimizerTrace | None]] = {}
        for scheme in scenario.schemes:
            kind, beamformer = _SCHEME_TABLE[scheme]
            t0 = time.perf_counter()
            if kind not in layouts:
                layouts[kind] = _layout_for(kind, cfg_v, users_v)
            layout, trace = layouts[kind]
            mc_rng = np.random.default_rng(
                np.random.SeedSequence([scenario.seed, SCHEMES.index(scheme), 91])
            )
            mc = mc_ergodic_rate(
                layout, users_v, cfg_v, beamformer, scenario.mc_samples, mc_rng, n_threads
            )
            wall_ms = (time.perf_counter() - t0) * 1e3
            rows.append(
                ResultRow(
                    scenario=scenario.name,
                    scheme=scheme,
                    sweep_var=sweep_var,
                    sweep_value=float("nan") if value is None else float(value),
                    sum_rate=mc.sum,
                    stderr=mc.sum_std_err or 0.0,
                    closed_form=_closed_form(scheme, layout, users_v, cfg_v),
                    iters=0 if trace is None else len(trace.steps),
                    wall_ms=wall_ms,
                    per_user=tuple(float(r) for r in mc.per_user),
                )
            )
    if out_dir is not None:
        write_rows_csv(rows, os.path.join(out_dir, "sweep.csv"))
    return rows


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_rows_csv(rows: list[ResultRow], path: str) -> None:
    """Write result rows atomically (write-then-replace)."""
    max_users = max((len(r.per_user) for r in rows), default=0)
    header = [
        "scenario",
        "scheme",
        "sweep_var",
        "sweep_value",
        "sum_rate",
        "stderr",
        "closed_form",
        "iters",
        "wall_ms",
    ] + [f"rate_user_{k + 1}" for k in range(max_users)]
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for r in rows:
                record = [
                    r.scenario,
                    r.scheme,
                    r.sweep_var,
                    "" if math.isnan(r.sweep_value) else _fmt(r.sweep_value),
                    _fmt(r.sum_rate),
                    _fmt(r.stderr),
                    "" if r.closed_form is None else _fmt(r.closed_form),
                    str(r.iters),
                    f"{r.wall_ms:.3f}",
                ]
                record += [_fmt(v) for v in r.per_user]
                record += [""] * (max_users - len(r.per_user))
                writer.writerow(record)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def converge(scenario: Scenario, out_dir: str | None = None) -> dict[str, OptimizerTrace]:
    """Run the position optimizers and persist their per-step traces."""
    cfg, users = _apply_sweep(scenario, None)
    base = fpa_grid_layout(cfg)
    traces: dict[str, OptimizerTrace] = {}
    if "ma_mrt" in scenario.schemes:
        _, traces["ma_mrt"] = optimize_mrt(base, users, cfg)
    if "ma_zf" in scenario.schemes:
        _, traces["ma_zf"] = optimize_zf(base, users, cfg)
    if out_dir is not None:
        path = os.path.join(out_dir, "converge.csv")
        os.makedirs(out_dir, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".csv")
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["scenario", "scheme", "iter", "sweep", "antenna", "surrogate", "objective"]
            )
            for scheme, trace in traces.items():
                for i, step in enumerate(trace.steps):
                    writer.writerow(
                        [
                            scenario.name,
                            scheme,
                            str(i),
                            str(step.sweep),
                            str(step.antenna),
                            _fmt(step.surrogate_value),
                            _fmt(step.objective_value),
                        ]
                    )
        os.replace(tmp, path)
    return traces


def validate(
    scenario: Scenario, out_path: str | None = None, quick: bool = False
) -> dict:
    """Run the oracle suite against the scenario; report machine-readable results.

    ``quick`` shrinks the sampling budgets for smoke runs; the defaults match
    the acceptance gate.
    """
    cfg, users = _apply_sweep(scenario, None)
    layout = fpa_grid_layout(cfg)
    n_mc = 2_000 if quick else max(scenario.mc_samples, 10_000)
    n_moment = 10_000 if quick else 100_000
    n_pairs = 100 if quick else 1_000
    n_points = 100 if quick else 1_000
    n_grad = 20 if quick else 100

    def rng(tag: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([scenario.seed, 7919, tag]))

    # the surrogate checks sample the linearized feasible set, which needs a
    # layout with positive spacing slack (the reference grid has none)
    loose = random_feasible_layout(cfg, rng(0))
    results: list[CheckResult] = [
        check_moment_identities(layout, users, cfg, n_moment, rng(1)),
        check_woodbury(users, cfg, n_pairs, rng(2)),
        check_mrt_minorization(loose, users, cfg, n_points, rng(3)),
        check_zf_minorization(loose, users, cfg, n_points, rng(4)),
        check_gradients(loose, users, cfg, n_grad, rng(5)),
        check_curvature_bounds(loose, users, cfg, n_points, rng(6)),
        check_jensen_bound(layout, users, cfg, n_mc, rng(7)),
        check_mrt_approx(layout, users, cfg, n_mc, rng(8)),
        check_position_invariance(cfg, rng(9)),
    ]
    report = {
        "scenario": scenario.name,
        "all_passed": all(r.passed for r in results),
        "checks": [r.as_dict() for r in results],
    }
    if out_path is not None:
        os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return report
