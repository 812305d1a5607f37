"""Per-antenna position optimization for the zero-forcing ergodic-rate bound.

A rank-one update isolates the free antenna's contribution to the LoS
correlation matrix, so the per-user bound becomes a ratio of quadratic forms
in the antenna's conjugate steering row.  A fractional-programming minorizer
linearizes that ratio into a cosine sum over positions, which a second
quadratic minorization turns into the concave subproblem handed to the
subsolver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ao import OptimizerTrace, optimize_positions
from .channel import AntennaLayout, SystemConfig, UserStats, los_matrix, user_directions
from .ergodic import zf_ergodic_lower_bound
from .subsolver import Subproblem2D, linearize_distance_constraints

LOG2E = math.log2(math.e)


@dataclass(frozen=True)
class ZfPerAntennaCache:
    """Deterministic matrices of the bound with one antenna singled out."""

    antenna: int
    wavelength: float
    t_ref: np.ndarray  # (2,)
    directions: np.ndarray  # (M, 2)
    gbar: np.ndarray  # (M,) conjugate steering row of the free antenna
    theta1: np.ndarray  # (M, M) frozen-antenna steering correlations
    theta2_inv: np.ndarray  # (M, M) Hermitian positive definite
    Y: np.ndarray  # (M, M) Hermitian positive definite denominator matrix
    L: np.ndarray  # (M, M), row m is the vector l_m
    X: np.ndarray  # (M, M, M), X[m] is Hermitian
    lam_max_X: np.ndarray  # (M,)
    eta: np.ndarray  # (M,) per-user SNR scale (p_m / sigma_m^2) beta_m (N - M)


@dataclass(frozen=True)
class ZfSurrogateTerms:
    """Constants of the cosine-sum minorizer expanded at the cached position."""

    antenna: int
    wavelength: float
    t_ref: np.ndarray  # (2,)
    directions: np.ndarray  # (M, 2)
    eta: np.ndarray  # (M,)
    chi: np.ndarray  # (M,) constant offsets
    q: np.ndarray  # (M, M) complex; row m holds the per-user phasor weights
    F0: np.ndarray  # (M,) cosine sum evaluated at t_ref
    F_grad: np.ndarray  # (M, 2) gradient of the cosine sum at t_ref
    xi: np.ndarray  # (M,) isotropic curvature bounds


def conj_steering_row(
    point: np.ndarray, directions: np.ndarray, wavelength: float
) -> np.ndarray:
    """Conjugated steering entries of one antenna position toward every user."""
    k = 2.0 * math.pi / wavelength
    return np.exp(-1j * k * (directions @ np.asarray(point, dtype=float)))


def _zf_statics(
    others_hbar: np.ndarray, users: list[UserStats], cfg: SystemConfig
) -> dict:
    """Matrices that depend only on the frozen antennas' steering rows."""
    n_ant, m_users = cfg.n_antennas, len(users)
    kappa = np.array([u.kappa for u in users])
    beta = np.array([u.beta for u in users])
    noise = np.array([u.noise_power for u in users])
    lam1 = 1.0 / (kappa + 1.0)
    lam2 = np.sqrt(kappa / (kappa + 1.0))
    theta1 = others_hbar.conj().T @ others_hbar
    theta2 = np.diag(lam1).astype(complex) + np.outer(lam2, lam2) * theta1 / n_ant
    theta2 = 0.5 * (theta2 + theta2.conj().T)
    eigs = np.linalg.eigvalsh(theta2)
    if eigs[0] <= 1e-12 * max(eigs[-1], 1e-300):
        raise ValueError(
            "numerically singular frozen-antenna correlation matrix "
            f"(condition estimate {eigs[-1] / max(eigs[0], 1e-300):.3g})"
        )
    theta2_inv = np.linalg.inv(theta2)
    theta2_inv = 0.5 * (theta2_inv + theta2_inv.conj().T)

    Y = (n_ant / m_users) * np.eye(m_users) + np.outer(lam2, lam2) * theta2_inv
    Y = 0.5 * (Y + Y.conj().T)
    L = (theta2_inv * lam2[None, :]).conj()  # row m = l_m
    diag_t2inv = np.diagonal(theta2_inv).real
    X = diag_t2inv[:, None, None] * Y[None, :, :] - np.einsum(
        "mu,mv->muv", L, L.conj()
    )
    lam_max = np.linalg.eigvalsh(X)[:, -1]
    p_m = cfg.p_tot / m_users
    eta = (p_m / noise) * beta * (n_ant - m_users)
    return {
        "theta1": theta1,
        "theta2": theta2,
        "theta2_inv": theta2_inv,
        "Y": Y,
        "L": L,
        "X": X,
        "lam_max": lam_max,
        "eta": eta,
        "lam2": lam2,
    }


def _assemble_cache(
    statics: dict,
    layout: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    n: int,
    gbar: np.ndarray,
    verify: bool = True,
) -> ZfPerAntennaCache:
    if verify:
        # rank-one inverse update vs dense inversion
        u2 = statics["lam2"] * gbar
        sigma_n = statics["theta2"] + np.outer(u2, u2.conj()) / cfg.n_antennas
        direct = np.linalg.inv(sigma_n)
        w = statics["theta2_inv"] @ u2
        wood = statics["theta2_inv"] - np.outer(w, w.conj()) / (
            cfg.n_antennas + float((u2.conj() @ w).real)
        )
        rel = np.linalg.norm(wood - direct) / np.linalg.norm(direct)
        if rel > 1e-9:
            raise ValueError(f"rank-one inverse update residual too large: {rel:.3g}")
    return ZfPerAntennaCache(
        antenna=n,
        wavelength=cfg.wavelength,
        t_ref=layout.positions[n].copy(),
        directions=user_directions(users),
        gbar=gbar,
        theta1=statics["theta1"],
        theta2_inv=statics["theta2_inv"],
        Y=statics["Y"],
        L=statics["L"],
        X=statics["X"],
        lam_max_X=statics["lam_max"],
        eta=statics["eta"],
    )


def per_antenna_cache(
    layout: AntennaLayout, users: list[UserStats], cfg: SystemConfig, n: int
) -> ZfPerAntennaCache:
    """Build and verify the rank-one-update matrices for antenna n.

    The rank-one inverse update is checked against dense inversion on every
    build; a relative residual above 1e-9 raises.
    """
    if cfg.n_antennas <= len(users):
        raise ValueError("the bound needs more antennas than users")
    hbar = los_matrix(layout, users, cfg.wavelength)
    statics = _zf_statics(np.delete(hbar, n, axis=0), users, cfg)
    return _assemble_cache(statics, layout, users, cfg, n, hbar[n].conj())


def sigma_inv_diag(cache: ZfPerAntennaCache, gbar: np.ndarray | None = None) -> np.ndarray:
    """Diagonal of the inverse correlation matrix via the quadratic-form ratio."""
    g = cache.gbar if gbar is None else gbar
    den = float((g.conj() @ cache.Y @ g).real)
    nums = np.einsum("u,muv,v->m", g.conj(), cache.X, g).real
    return nums / den


def rate_bound_from_cache(
    cache: ZfPerAntennaCache, m: int, gbar: np.ndarray | None = None
) -> float:
    """Per-user rate bound as a function of the free antenna's steering row."""
    g = cache.gbar if gbar is None else gbar
    num = float((g.conj() @ cache.Y @ g).real)
    den = float((g.conj() @ cache.X[m] @ g).real)
    if den <= 0.0:
        raise ValueError("nonpositive quadratic form; cache invariant violated")
    return float(np.log2(1.0 + cache.eta[m] * num / den))


def mm_minorizer(
    cache: ZfPerAntennaCache,
    m: int,
    g_at: np.ndarray,
    g_ref: np.ndarray | None = None,
) -> float:
    """Fractional-programming minorizer of the quadratic-form ratio.

    Tangent to (g^H Y g) / (g^H X_m g) at ``g_ref`` and below it for every
    unit-modulus steering row, combining the convexity tangent of the ratio
    with the largest-eigenvalue majorization of the denominator form.
    """
    g0 = cache.gbar if g_ref is None else g_ref
    m_users = g0.size
    r = float((g0.conj() @ cache.X[m] @ g0).real)
    y0 = float((g0.conj() @ cache.Y @ g0).real)
    lam = float(cache.lam_max_X[m])
    lead = 2.0 * float((g0.conj() @ cache.Y @ g_at).real) / r
    inner = 2.0 * float(
        (g0.conj() @ (cache.X[m] - lam * np.eye(m_users)) @ g_at).real
    )
    return lead - (y0 / r**2) * (2.0 * lam * m_users - r + inner)


def zf_surrogate_terms(cache: ZfPerAntennaCache) -> ZfSurrogateTerms:
    """Expand the bound into constants, phasor weights, and curvature bounds.

    Raises if the minorizer fails to touch the exact ratio at the expansion
    point, which would indicate a broken cache.
    """
    g0 = cache.gbar
    m_users = g0.size
    y0 = float((g0.conj() @ cache.Y @ g0).real)
    g0c_x = np.einsum("u,muv->mv", g0.conj(), cache.X)  # row m = g0^H X_m
    r = np.einsum("mv,v->m", g0c_x, g0).real  # (M,)
    lam = cache.lam_max_X
    chi = -(y0 / r**2) * (2.0 * lam * m_users - r)
    g0c_y = g0.conj() @ cache.Y
    q = (2.0 / r)[:, None] * (
        g0c_y[None, :] - (y0 / r)[:, None] * (g0c_x - lam[:, None] * g0.conj()[None, :])
    )

    k = 2.0 * math.pi / cache.wavelength
    qabs = np.abs(q)
    phases = k * (cache.directions @ cache.t_ref)  # (U,)
    arg = phases[None, :] - np.angle(q)  # (M, U)
    f0 = np.einsum("mu,mu->m", qabs, np.cos(arg))
    grad = -k * np.einsum("mu,ud->md", qabs * np.sin(arg), cache.directions)
    ax, ay = cache.directions[:, 0], cache.directions[:, 1]
    x11 = qabs @ (ax**2)
    x22 = qabs @ (ay**2)
    x12 = qabs @ np.abs(ax * ay)
    xi = (2.0 * math.pi**2 / cache.wavelength**2) * (
        x11 + x22 + np.hypot(x11 - x22, 2.0 * x12)
    )

    ratio = y0 / r
    if np.any(np.abs(chi + f0 - ratio) > 1e-9 * np.maximum(1.0, np.abs(ratio))):
        raise ValueError("minorizer does not touch the ratio at the expansion point")
    return ZfSurrogateTerms(
        antenna=cache.antenna,
        wavelength=cache.wavelength,
        t_ref=cache.t_ref,
        directions=cache.directions,
        eta=cache.eta,
        chi=chi,
        q=q,
        F0=f0,
        F_grad=grad,
        xi=xi,
    )


def cosine_sum_batch(terms: ZfSurrogateTerms, points: np.ndarray) -> np.ndarray:
    """F_m at stacked positions: sum_u |q[m,u]| cos(k t^T a_u - ang q[m,u])."""
    k = 2.0 * math.pi / terms.wavelength
    phases = k * (np.atleast_2d(points) @ terms.directions.T)  # (P, U)
    arg = phases[:, None, :] - np.angle(terms.q)[None, :, :]
    return np.einsum("mu,pmu->pm", np.abs(terms.q), np.cos(arg))


def cosine_sum_value(terms: ZfSurrogateTerms, m: int, point: np.ndarray) -> float:
    return float(cosine_sum_batch(terms, point[None, :])[0, m])


def cosine_sum_gradient(
    terms: ZfSurrogateTerms, m: int, point: np.ndarray
) -> np.ndarray:
    """Analytic gradient of F_m with respect to the free position."""
    k = 2.0 * math.pi / terms.wavelength
    phases = k * (terms.directions @ np.asarray(point, dtype=float))
    arg = phases - np.angle(terms.q[m])
    return -k * np.einsum("u,u,ud->d", np.abs(terms.q[m]), np.sin(arg), terms.directions)


def xi_bound(terms: ZfSurrogateTerms, m: int) -> float:
    """Scalar bound with xi * I >= Hessian of F_m everywhere."""
    w = np.abs(terms.q[m])
    ax = terms.directions[:, 0]
    ay = terms.directions[:, 1]
    x11 = float(np.sum(w * ax**2))
    x22 = float(np.sum(w * ay**2))
    x12 = float(np.sum(w * np.abs(ax * ay)))
    lam_max = 0.5 * (x11 + x22 + math.hypot(x11 - x22, 2.0 * x12))
    return (4.0 * math.pi**2 / terms.wavelength**2) * lam_max


def zf_subproblem(
    layout: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    n: int,
    xi_scale: float = 1.0,
    cache: ZfPerAntennaCache | None = None,
) -> Subproblem2D:
    """Concave minorant of the per-antenna bound sum around the current position.

    The objective is sum_m log2(1 + eta_m (chi_m + F_m(t_ref) + grad F_m^T d
    - xi_m/2 ||d||^2)); positions where any log argument turns nonpositive
    are outside the surrogate's domain and evaluate to -inf, which the
    subsolver's line search rejects.  ``xi_scale`` rescales the curvature
    bounds and exists for negative verification runs.
    """
    cache = cache if cache is not None else per_antenna_cache(layout, users, cfg, n)
    terms = zf_surrogate_terms(cache)
    t_ref = terms.t_ref
    base = terms.chi + terms.F0  # (M,)
    eta = terms.eta
    grads = terms.F_grad  # (M, 2)
    xi = xi_scale * terms.xi

    def objective(t: np.ndarray) -> tuple[float, np.ndarray]:
        d = t - t_ref
        v = base + grads @ d - 0.5 * xi * float(d @ d)
        arg = 1.0 + eta * v
        if np.any(arg <= 0.0):
            return float("-inf"), np.zeros(2)
        val = float(np.sum(np.log2(arg)))
        weight = LOG2E * eta / arg
        grad = weight @ (grads - np.outer(xi, d))
        return val, grad

    def value_batch(points: np.ndarray) -> np.ndarray:
        d = np.atleast_2d(points) - t_ref
        v = base[None, :] + d @ grads.T - 0.5 * np.sum(d * d, axis=1)[:, None] * xi
        arg = 1.0 + eta[None, :] * v
        ok = np.all(arg > 0.0, axis=1)
        vals = np.full(d.shape[0], -np.inf)
        if np.any(ok):
            vals[ok] = np.sum(np.log2(arg[ok]), axis=1)
        return vals

    def hessian(t: np.ndarray) -> np.ndarray:
        d = t - t_ref
        v = base + grads @ d - 0.5 * xi * float(d @ d)
        arg = 1.0 + eta * v
        if np.any(arg <= 0.0):
            return -np.eye(2)
        slopes = grads - np.outer(xi, d)  # rows: gradient of the inner terms
        w1 = LOG2E * eta * xi / arg
        w2 = LOG2E * (eta / arg) ** 2
        return -float(w1.sum()) * np.eye(2) - (slopes.T * w2) @ slopes

    arg0 = 1.0 + eta * base
    curv0 = float(np.sum(LOG2E * eta * xi / arg0))
    return Subproblem2D(
        objective=objective,
        halfplanes=linearize_distance_constraints(layout, n, cfg.d_min),
        box=cfg.region,
        start=t_ref.copy(),
        value_batch=value_batch,
        step_hint=1.0 / curv0 if curv0 > 0.0 else None,
        hessian=hessian,
    )


def zf_objective(
    layout: AntennaLayout, users: list[UserStats], cfg: SystemConfig
) -> float:
    """True large-timescale objective: the ergodic-rate lower bound sum."""
    return zf_ergodic_lower_bound(layout, users, cfg).sum


def optimize_zf(
    layout0: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    zeta: float = 0.5e-4,
    max_sweeps: int = 200,
    subsolver_tol: float = 1e-8,
) -> tuple[AntennaLayout, OptimizerTrace]:
    """Alternating antenna-position ascent on the zero-forcing rate bound.

    The frozen-antenna matrices are reused across the surrogate refreshes of
    one antenna visit (only the free antenna's steering row changes), with
    the rank-one-update verification run once per rebuild.
    """
    if cfg.n_antennas <= cfg.n_users:
        raise ValueError("the bound needs more antennas than users")
    kappa = np.array([u.kappa for u in users])
    beta = np.array([u.beta for u in users])
    noise = np.array([u.noise_power for u in users])
    lam1 = 1.0 / (kappa + 1.0)
    lam2 = np.sqrt(kappa / (kappa + 1.0))
    dirs = user_directions(users)
    n_ant, m_users = cfg.n_antennas, len(users)
    p_m = cfg.p_tot / m_users
    k_wave = 2.0 * math.pi / cfg.wavelength
    memo: dict[int, tuple[bytes, dict]] = {}

    sigma_base = np.diag(lam1).astype(complex)
    lam2_outer = np.outer(lam2, lam2) / n_ant
    snr_scale = (p_m / noise) * beta * (n_ant - m_users)

    def fast_objective(layout: AntennaLayout) -> float:
        hbar = np.exp(1j * k_wave * (layout.positions @ dirs.T))
        sigma = sigma_base + lam2_outer * (hbar.conj().T @ hbar)
        inv_diag = np.diagonal(np.linalg.inv(sigma)).real
        return float(np.sum(np.log2(1.0 + snr_scale / inv_diag)))

    def build(layout: AntennaLayout, n: int) -> Subproblem2D:
        others = np.delete(layout.positions, n, axis=0)
        key = others.tobytes()
        fresh = n not in memo or memo[n][0] != key
        if fresh:
            others_hbar = np.exp(1j * k_wave * (others @ dirs.T))
            memo[n] = (key, _zf_statics(others_hbar, users, cfg))
        gbar = np.exp(-1j * k_wave * (dirs @ layout.positions[n]))
        cache = _assemble_cache(memo[n][1], layout, users, cfg, n, gbar, verify=fresh)
        return zf_subproblem(layout, users, cfg, n, cache=cache)

    return optimize_positions(
        layout0,
        cfg,
        build_subproblem=build,
        objective=fast_objective,
        zeta=zeta,
        max_sweeps=max_sweeps,
        subsolver_tol=subsolver_tol,
    )
