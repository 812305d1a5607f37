"""Maximizer for smooth concave objectives of one 2-D antenna position.

The feasible set is the movable-region box intersected with half-planes that
linearize the pairwise spacing constraints.  Because the variable is 2-D the
Euclidean projection onto this polygon is computed exactly (faces plus
precomputed vertices), and the outer loop is projected gradient ascent with
a Barzilai-Borwein seeded Armijo backtracking line search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import AntennaLayout, Region

Halfplane = tuple[np.ndarray, float]  # (normal a, offset b) meaning a @ x >= b


@dataclass
class Subproblem2D:
    """One concave 2-D maximization over a box intersected with half-planes.

    ``objective`` returns (value, gradient); a value of -inf marks points
    outside the objective's domain and is rejected by the line search.
    ``value_batch`` evaluates many points at once and exists for grid-search
    verification.
    """

    objective: Callable[[np.ndarray], tuple[float, np.ndarray]]
    halfplanes: list[Halfplane]
    box: Region
    start: np.ndarray
    value_batch: Callable[[np.ndarray], np.ndarray] | None = None
    step_hint: float | None = None  # curvature-scale seed for the line search
    hessian: Callable[[np.ndarray], np.ndarray] | None = None  # 2x2, enables Newton steps


@dataclass
class SubsolveResult:
    point: np.ndarray
    value: float
    converged: bool
    n_iters: int


def linearize_distance_constraints(
    layout: AntennaLayout, n: int, d_min: float
) -> list[Halfplane]:
    """Half-planes whose intersection under-approximates the spacing constraints.

    For each other antenna i the convex quadratic ||t - t_i||^2 is replaced by
    its tangent at the current position of antenna n, which keeps every
    half-plane-feasible point truly feasible.  The current position satisfies
    each half-plane with slack ||t_n - t_i||^2 - d_min^2 >= 0.
    """
    t_n = layout.positions[n]
    planes: list[Halfplane] = []
    for i in range(layout.n_antennas):
        if i == n:
            continue
        diff = t_n - layout.positions[i]
        normal = 2.0 * diff
        offset = d_min**2 - float(diff @ diff) + float(normal @ t_n)
        planes.append((normal, offset))
    return planes


class _Polygon:
    """Feasible polygon with a vectorized exact Euclidean projection."""

    def __init__(self, halfplanes: list[Halfplane], box: Region, tol: float = 1e-9):
        xh, yh = box.x_half, box.y_half
        rows = [
            (np.array([1.0, 0.0]), -xh),
            (np.array([-1.0, 0.0]), -xh),
            (np.array([0.0, 1.0]), -yh),
            (np.array([0.0, -1.0]), -yh),
        ] + list(halfplanes)
        self.A = np.array([a for a, _ in rows])  # (K, 2)
        self.b = np.array([b for _, b in rows])  # (K,)
        self.tol = tol * np.maximum(1.0, np.abs(self.b))
        self.row_norm2 = np.sum(self.A * self.A, axis=1)
        self.vertices = self._feasible_vertices()

    def _feasible_vertices(self) -> np.ndarray:
        a, b = self.A, self.b
        k = a.shape[0]
        ii, jj = np.triu_indices(k, 1)
        det = a[ii, 0] * a[jj, 1] - a[ii, 1] * a[jj, 0]
        scale = np.abs(a[ii]).max(axis=1) * np.abs(a[jj]).max(axis=1)
        ok = np.abs(det) > 1e-14 * np.maximum(scale, 1e-300)
        ii, jj, det = ii[ok], jj[ok], det[ok]
        vx = (b[ii] * a[jj, 1] - b[jj] * a[ii, 1]) / det
        vy = (a[ii, 0] * b[jj] - a[jj, 0] * b[ii]) / det
        verts = np.column_stack([vx, vy])
        feas = np.all(verts @ self.A.T >= self.b - self.tol, axis=1)
        return verts[feas]

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(self.A @ x >= self.b - self.tol))

    def project(self, z: np.ndarray) -> np.ndarray:
        """Exact projection: the point itself, a face foot, or a vertex."""
        if self.contains(z):
            return np.array(z, dtype=float)
        feet = z[None, :] + self.A * ((self.b - self.A @ z) / self.row_norm2)[:, None]
        feas = np.all(feet @ self.A.T >= self.b[None, :] - self.tol[None, :], axis=1)
        cands = feet[feas]
        if self.vertices.size:
            cands = np.vstack([cands, self.vertices]) if cands.size else self.vertices
        if cands.size == 0:
            raise RuntimeError("projection failed: empty feasible polygon")
        d2 = np.sum((cands - z) ** 2, axis=1)
        return cands[int(np.argmin(d2))].copy()


def project_to_constraints(z: np.ndarray, sub: Subproblem2D) -> np.ndarray:
    """Exact Euclidean projection onto the subproblem's feasible polygon."""
    return _Polygon(sub.halfplanes, sub.box).project(np.asarray(z, dtype=float))


def feasible_mask(
    points: np.ndarray, halfplanes: list[Halfplane], box: Region, tol: float = 1e-9
) -> np.ndarray:
    """Boolean mask of points inside the box and every half-plane."""
    p = np.atleast_2d(points)
    pad = tol * max(1.0, box.x_half, box.y_half)
    ok = (np.abs(p[:, 0]) <= box.x_half + pad) & (np.abs(p[:, 1]) <= box.y_half + pad)
    for normal, offset in halfplanes:
        slack_tol = tol * max(1.0, abs(offset))
        ok &= p @ normal >= offset - slack_tol
    return ok


def maximize(
    sub: Subproblem2D, tol: float = 1e-8, max_iters: int = 10_000
) -> SubsolveResult:
    """Projected ascent with backtracking: Newton steps when a Hessian oracle
    is available, otherwise Barzilai-Borwein seeded gradient steps.

    Terminates when the unit-step gradient mapping ||x - P(x + g)|| drops
    below ``tol``, or earlier when no Armijo step makes numerical progress;
    if the iteration cap is hit the best feasible iterate is returned with
    ``converged=False``.  The objective never decreases along the iterates.
    """
    poly = _Polygon(sub.halfplanes, sub.box)
    x = poly.project(np.asarray(sub.start, dtype=float))
    fx, gx = sub.objective(x)
    if not np.isfinite(fx):
        raise ValueError("objective is not finite at the start point")
    converged = False
    step = sub.step_hint if sub.step_hint and sub.step_hint > 0.0 else 1.0
    prev: tuple[np.ndarray, np.ndarray] | None = None
    it = 0
    for it in range(1, max_iters + 1):
        probe = poly.project(x + gx)
        if float(np.linalg.norm(probe - x)) <= tol:
            converged = True
            break
        # opportunistic full Newton step when it stays feasible (fast on
        # interior optima); boundary-active iterations use gradient steps
        if sub.hessian is not None:
            hess = sub.hessian(x)
            neg = -hess
            det = neg[0, 0] * neg[1, 1] - neg[0, 1] * neg[1, 0]
            if det > 1e-30 and neg[0, 0] + neg[1, 1] > 0.0:
                newton = np.array(
                    [
                        (neg[1, 1] * gx[0] - neg[0, 1] * gx[1]) / det,
                        (neg[0, 0] * gx[1] - neg[1, 0] * gx[0]) / det,
                    ]
                )
                cand = x + newton
                if poly.contains(cand):
                    fc, gc = sub.objective(cand)
                    if np.isfinite(fc) and fc > fx:
                        prev = (x, gx)
                        x, fx, gx = cand, fc, gc
                        continue
        if prev is not None:
            dx = x - prev[0]
            dg = gx - prev[1]
            curve = -float(dx @ dg)  # nonnegative for concave objectives
            if curve > 0.0:
                step = min(max(float(dx @ dx) / curve, 1e-14), 1e12)
        s = step
        accepted = False
        for _ in range(60):
            cand = poly.project(x + s * gx)
            d = cand - x
            fc, gc = sub.objective(cand)
            # strict improvement required: float-flat steps terminate the solve
            if np.isfinite(fc) and fc > fx and fc >= fx + 1e-4 * float(gx @ d):
                prev = (x, gx)
                x, fx, gx = cand, fc, gc
                step = s
                accepted = True
                break
            s *= 0.5
        if not accepted:
            # no numerically useful ascent step remains
            converged = float(np.linalg.norm(probe - x)) <= tol
            break
    return SubsolveResult(x, fx, converged, it)


def spot_check_concavity(
    sub: Subproblem2D, rng: np.random.Generator, n_segments: int = 100, tol: float = 1e-9
) -> float:
    """Largest midpoint-concavity violation over random feasible segments.

    Returns max over segments of (f(a) + f(b)) / 2 - f(midpoint); a concave
    objective keeps this below ``tol``.  Segments with an endpoint outside
    the objective's domain (value -inf) trivially satisfy the test.
    """
    poly = _Polygon(sub.halfplanes, sub.box)
    xh, yh = sub.box.x_half, sub.box.y_half

    def draw_feasible() -> np.ndarray:
        for _ in range(10_000):
            p = rng.uniform([-xh, -yh], [xh, yh])
            if poly.contains(p):
                return p
        raise RuntimeError("could not sample a feasible point")

    worst = -math.inf
    for _ in range(n_segments):
        a, b = draw_feasible(), draw_feasible()
        fa, _ = sub.objective(a)
        fb, _ = sub.objective(b)
        if not (np.isfinite(fa) and np.isfinite(fb)):
            continue
        fm, _ = sub.objective(0.5 * (a + b))
        worst = max(worst, 0.5 * (fa + fb) - fm)
    return worst
