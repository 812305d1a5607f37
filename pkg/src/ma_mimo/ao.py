"""Alternating per-antenna position optimization shared by both beamforming schemes.

One sweep visits every antenna in ascending order, builds the antenna's
concave surrogate subproblem, solves it, and accepts the new position only
if the true objective does not decrease; the loop stops when the fractional
objective increase over a full sweep falls below the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import AntennaLayout, SystemConfig, check_layout
from .subsolver import Subproblem2D, maximize


@dataclass(frozen=True)
class TraceStep:
    """State after one per-antenna update."""

    sweep: int
    antenna: int
    surrogate_value: float  # subproblem objective at the solver output
    objective_value: float  # true objective after the accept/reject decision
    positions: np.ndarray  # layout snapshot, (N, 2)


@dataclass
class OptimizerTrace:
    steps: list[TraceStep]
    converged: bool
    threshold: float

    @property
    def objective_values(self) -> np.ndarray:
        return np.array([s.objective_value for s in self.steps])

    @property
    def n_sweeps(self) -> int:
        return 0 if not self.steps else self.steps[-1].sweep + 1

    @property
    def initial_value(self) -> float:
        return self.steps[0].objective_value if self.steps else float("nan")

    @property
    def final_value(self) -> float:
        return self.steps[-1].objective_value if self.steps else float("nan")


def optimize_positions(
    layout0: AntennaLayout,
    cfg: SystemConfig,
    build_subproblem: Callable[[AntennaLayout, int], Subproblem2D],
    objective: Callable[[AntennaLayout], float],
    zeta: float = 0.5e-4,
    max_sweeps: int = 200,
    subsolver_tol: float = 1e-8,
    inner_iters: int = 50,
    subsolver_max_iters: int = 120,
) -> tuple[AntennaLayout, OptimizerTrace]:
    """Run the alternating position optimization from a feasible layout.

    Within one sweep each antenna's surrogate is rebuilt and re-solved at the
    freshly accepted position until it stops making strict progress
    (``inner_iters`` cap), so a sweep leaves every antenna at a coordinate
    optimum; the surrogate refresh supersedes a high-precision subsolve, so
    the per-solve iteration budget is kept small.  The acceptance guard keeps
    the recorded true-objective trace non-decreasing bit for bit even in the
    presence of solver tolerance.
    """
    check_layout(layout0, cfg)
    layout = layout0
    value = objective(layout)
    steps: list[TraceStep] = []
    converged = False
    move_tol = 1e-9 * max(1.0, cfg.wavelength)
    # refresh rounds making gains far below the sweep threshold are plateau noise
    gain_floor = lambda v: max(1e-2 * zeta * abs(v), 1e-13)
    for sweep in range(max_sweeps):
        sweep_start = value
        for n in range(cfg.n_antennas):
            surrogate_value = value
            for _ in range(inner_iters):
                sub = build_subproblem(layout, n)
                result = maximize(sub, tol=subsolver_tol, max_iters=subsolver_max_iters)
                surrogate_value = result.value
                if np.linalg.norm(result.point - layout.positions[n]) <= move_tol:
                    break
                candidate = layout.replace_antenna(n, result.point)
                try:
                    check_layout(candidate, cfg)
                except ValueError:
                    break  # solver tolerance pushed the point infeasible
                new_value = objective(candidate)
                if new_value < value:
                    break
                gain = new_value - value
                layout = candidate
                value = new_value
                if gain <= gain_floor(value):
                    break
            steps.append(
                TraceStep(sweep, n, surrogate_value, value, layout.positions.copy())
            )
        denom = max(abs(sweep_start), 1e-300)
        if (value - sweep_start) / denom < zeta:
            converged = True
            break
    return layout, OptimizerTrace(steps, converged, zeta)
