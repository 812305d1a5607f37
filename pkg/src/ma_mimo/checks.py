"""Numerical oracle suite: every closed form checked against an independent route.

Each check returns a :class:`CheckResult` with the worst residual it saw, so
the experiment runner can emit a machine-readable pass/fail report and the
test suite can assert on the same numbers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import mrt_optimizer as mrt
from . import zf_optimizer as zf
from .channel import (
    AntennaLayout,
    SystemConfig,
    UserStats,
    fpa_grid_layout,
    random_feasible_layout,
    sample_channels,
)
from .ergodic import mc_ergodic_rate, mrt_ergodic_approx, zf_ergodic_lower_bound
from .mrt_optimizer import (
    approx_rates_from_b,
    b_gradient,
    b_hessian,
    b_value_batch,
    mrt_subproblem,
    mrt_terms,
    psi_bound,
)
from .subsolver import feasible_mask
from .zf_optimizer import (
    cosine_sum_gradient,
    per_antenna_cache,
    rate_bound_from_cache,
    zf_subproblem,
    zf_surrogate_terms,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    residual: float
    threshold: float
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "residual", float(self.residual))

    def as_dict(self) -> dict:
        return asdict(self)


def _sample_feasible_positions(
    layout: AntennaLayout,
    cfg: SystemConfig,
    n: int,
    rng: np.random.Generator,
    count: int,
) -> np.ndarray:
    """Random free-antenna positions satisfying the linearized constraints.

    Requires a layout with positive spacing slack; at zero slack the
    linearized polygon can degenerate to measure zero and sampling fails.
    """
    from .subsolver import linearize_distance_constraints

    planes = linearize_distance_constraints(layout, n, cfg.d_min)
    xh, yh = cfg.region.x_half, cfg.region.y_half
    points: list[np.ndarray] = []
    for _ in range(500):
        if len(points) >= count:
            break
        batch = rng.uniform([-xh, -yh], [xh, yh], size=(4 * count, 2))
        ok = feasible_mask(batch, planes, cfg.region)
        points.extend(batch[ok][: count - len(points)])
    else:
        raise RuntimeError(
            "could not sample the linearized feasible set; layout slack too small"
        )
    return np.array(points)


def check_moment_identities(
    layout: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    n_draws: int,
    rng: np.random.Generator,
) -> CheckResult:
    """Monte-Carlo fourth moments and pairwise cross moments vs closed forms.

    Residual is the worst deviation in units of Monte-Carlo standard errors.
    """
    n = cfg.n_antennas
    kappa = np.array([u.kappa for u in users])
    beta = np.array([u.beta for u in users])
    hbar_cross = None
    H = sample_channels(layout, users, cfg.wavelength, rng, n_draws)
    gram = np.einsum("snm,snj->smj", H.conj(), H)
    norms = np.einsum("smm->sm", gram).real
    fourth_samples = norms**2
    cross_samples = np.abs(gram) ** 2  # (S, j, m)

    fourth_closed = beta**2 * ((2.0 * n * kappa + n) / (kappa + 1.0) ** 2 + n**2)
    from .channel import los_matrix

    hbar = los_matrix(layout, users, cfg.wavelength)
    hbar_cross = np.abs(hbar.conj().T @ hbar) ** 2
    pair_closed = beta[None, :] * beta[:, None] * (
        kappa[None, :] * kappa[:, None] * hbar_cross
        + n * (kappa[None, :] + kappa[:, None] + 1.0)
    ) / ((kappa[None, :] + 1.0) * (kappa[:, None] + 1.0))

    worst = 0.0
    m_users = len(users)
    for m in range(m_users):
        se = fourth_samples[:, m].std(ddof=1) / math.sqrt(n_draws)
        dev = abs(fourth_samples[:, m].mean() - fourth_closed[m]) / se
        worst = max(worst, dev)
    for m in range(m_users):
        for j in range(m + 1, m_users):
            se = cross_samples[:, j, m].std(ddof=1) / math.sqrt(n_draws)
            dev = abs(cross_samples[:, j, m].mean() - pair_closed[j, m]) / se
            worst = max(worst, dev)
    return CheckResult(
        "moment_identities",
        worst <= 3.0,
        worst,
        3.0,
        f"{n_draws} draws, worst deviation {worst:.2f} standard errors",
    )


def check_woodbury(
    users: list[UserStats],
    cfg: SystemConfig,
    n_pairs: int,
    rng: np.random.Generator,
) -> CheckResult:
    """Rank-one inverse update vs dense inversion on random (layout, antenna) pairs."""
    worst = 0.0
    for _ in range(n_pairs):
        layout = random_feasible_layout(cfg, rng)
        n = int(rng.integers(cfg.n_antennas))
        cache = per_antenna_cache(layout, users, cfg, n)
        # reconstruct both inverse routes explicitly
        kappa = np.array([u.kappa for u in users])
        l2 = np.sqrt(kappa / (kappa + 1.0))
        u2 = l2 * cache.gbar
        theta2 = np.linalg.inv(cache.theta2_inv)
        sigma_n = theta2 + np.outer(u2, u2.conj()) / cfg.n_antennas
        direct = np.linalg.inv(sigma_n)
        w = cache.theta2_inv @ u2
        wood = cache.theta2_inv - np.outer(w, w.conj()) / (
            cfg.n_antennas + float((u2.conj() @ w).real)
        )
        rel = float(np.linalg.norm(wood - direct) / np.linalg.norm(direct))
        worst = max(worst, rel)
    return CheckResult(
        "woodbury_consistency",
        worst < 1e-9,
        worst,
        1e-9,
        f"{n_pairs} random (layout, antenna) pairs",
    )


def check_mrt_minorization(
    layout: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    n_points: int,
    rng: np.random.Generator,
    psi_scale: float = 1.0,
) -> CheckResult:
    """Quadratic surrogate must minorize the true rate sum, touching at t_ref."""
    worst = -math.inf
    eq_worst = 0.0
    for n in range(cfg.n_antennas):
        sub = mrt_subproblem(layout, users, cfg, n, psi_scale=psi_scale)
        terms = mrt_terms(layout, users, cfg, n)
        t_ref = layout.positions[n]
        truth_ref = float(
            np.sum(approx_rates_from_b(terms, b_value_batch(terms, t_ref[None])[0]))
        )
        eq_worst = max(eq_worst, abs(sub.objective(t_ref)[0] - truth_ref))
        pts = _sample_feasible_positions(layout, cfg, n, rng, n_points)
        sur = sub.value_batch(pts)
        truth = approx_rates_from_b(terms, b_value_batch(terms, pts)).sum(axis=1)
        worst = max(worst, float(np.max(sur - truth)))
    passed = worst <= 1e-9 and eq_worst <= 1e-9
    return CheckResult(
        "mrt_minorization",
        passed,
        max(worst, eq_worst),
        1e-9,
        f"max surrogate excess {worst:.3g}, expansion mismatch {eq_worst:.3g}",
    )


def check_zf_minorization(
    layout: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    n_points: int,
    rng: np.random.Generator,
    xi_scale: float = 1.0,
) -> CheckResult:
    """Log surrogate must minorize the per-antenna bound sum, touching at t_ref."""
    worst = -math.inf
    eq_worst = 0.0
    for n in range(cfg.n_antennas):
        sub = zf_subproblem(layout, users, cfg, n, xi_scale=xi_scale)
        cache = per_antenna_cache(layout, users, cfg, n)
        t_ref = layout.positions[n]
        truth_ref = sum(rate_bound_from_cache(cache, m) for m in range(len(users)))
        eq_worst = max(eq_worst, abs(sub.objective(t_ref)[0] - truth_ref))
        pts = _sample_feasible_positions(layout, cfg, n, rng, n_points)
        sur = sub.value_batch(pts)
        finite = np.isfinite(sur)
        truth = np.empty(pts.shape[0])
        for i in np.flatnonzero(finite):
            g = zf.conj_steering_row(pts[i], cache.directions, cfg.wavelength)
            truth[i] = sum(
                rate_bound_from_cache(cache, m, g) for m in range(len(users))
            )
        if np.any(finite):
            worst = max(worst, float(np.max(sur[finite] - truth[finite])))
    passed = worst <= 1e-9 and eq_worst <= 1e-9
    return CheckResult(
        "zf_minorization",
        passed,
        max(worst, eq_worst),
        1e-9,
        f"max surrogate excess {worst:.3g}, expansion mismatch {eq_worst:.3g}",
    )


def _fd_gradient(f, x: np.ndarray, h: float) -> np.ndarray:
    g = np.zeros(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def _fd_hessian(f, x: np.ndarray, h: float) -> np.ndarray:
    hess = np.zeros((2, 2))
    for a in range(2):
        ea = np.zeros(2)
        ea[a] = h
        hess[a, a] = (f(x + ea) - 2.0 * f(x) + f(x - ea)) / h**2
    eb = np.array([0.0, h])
    ea = np.array([h, 0.0])
    hess[0, 1] = hess[1, 0] = (
        f(x + ea + eb) - f(x + ea - eb) - f(x - ea + eb) + f(x - ea - eb)
    ) / (4.0 * h**2)
    return hess


def check_gradients(
    layout: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    n_points: int,
    rng: np.random.Generator,
) -> CheckResult:
    """Analytic gradients vs central finite differences (relative error)."""
    h = 1e-6 * cfg.wavelength
    xh, yh = cfg.region.x_half, cfg.region.y_half
    worst = 0.0
    m_users = len(users)
    for idx in range(n_points):
        n = idx % cfg.n_antennas
        terms = mrt_terms(layout, users, cfg, n)
        cache = per_antenna_cache(layout, users, cfg, n)
        zterms = zf_surrogate_terms(cache)
        t = rng.uniform([-xh, -yh], [xh, yh])
        for m in range(m_users):
            g = b_gradient(terms, m, t)
            fd = _fd_gradient(lambda x, m=m: mrt.b_value(terms, m, x), t, h)
            scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
            worst = max(worst, float(np.linalg.norm(fd - g) / scale))
            gz = cosine_sum_gradient(zterms, m, t)
            fdz = _fd_gradient(lambda x, m=m: zf.cosine_sum_value(zterms, m, x), t, h)
            scale = max(np.linalg.norm(gz), np.linalg.norm(fdz), 1e-12)
            worst = max(worst, float(np.linalg.norm(fdz - gz) / scale))
    return CheckResult(
        "gradient_checks",
        worst < 1e-4,
        worst,
        1e-4,
        f"{n_points} positions, both beamforming surrogates",
    )


def check_curvature_bounds(
    layout: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    n_points: int,
    rng: np.random.Generator,
) -> CheckResult:
    """Sampled Hessian spectra must stay below the scalar curvature bounds."""
    xh, yh = cfg.region.x_half, cfg.region.y_half
    worst = -math.inf
    m_users = len(users)
    for n in range(cfg.n_antennas):
        terms = mrt_terms(layout, users, cfg, n)
        cache = per_antenna_cache(layout, users, cfg, n)
        zterms = zf_surrogate_terms(cache)
        psis = [psi_bound(terms, m) for m in range(m_users)]
        xis = [zf.xi_bound(zterms, m) for m in range(m_users)]
        pts = rng.uniform([-xh, -yh], [xh, yh], size=(n_points // cfg.n_antennas, 2))
        for t in pts:
            for m in range(m_users):
                lam = float(np.linalg.eigvalsh(b_hessian(terms, m, t))[-1])
                worst = max(worst, lam - psis[m])
                fd_h = _fd_hessian(
                    lambda x, m=m: zf.cosine_sum_value(zterms, m, x), t, 1e-5
                )
                lam = float(np.linalg.eigvalsh(fd_h)[-1])
                worst = max(worst, lam - xis[m])
    return CheckResult(
        "curvature_bounds",
        worst <= 1e-6,
        worst,
        1e-6,
        "largest sampled Hessian eigenvalue minus its bound",
    )


def check_jensen_bound(
    layout: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    n_draws: int,
    rng: np.random.Generator,
) -> CheckResult:
    """Zero-forcing bound must sit below the Monte-Carlo rate, per user."""
    bound = zf_ergodic_lower_bound(layout, users, cfg)
    mc = mc_ergodic_rate(layout, users, cfg, "zf", n_draws, rng)
    excess = float(np.max(bound.per_user - (mc.per_user + 3.0 * mc.mc_std_err)))
    return CheckResult(
        "jensen_bound",
        excess <= 0.0,
        excess,
        0.0,
        f"bound sum {bound.sum:.4f} vs Monte-Carlo {mc.sum:.4f}",
    )


def check_mrt_approx(
    layout: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    n_draws: int,
    rng: np.random.Generator,
) -> CheckResult:
    """Closed-form matched-filter rate vs Monte-Carlo, 5% plus noise slack."""
    approx = mrt_ergodic_approx(layout, users, cfg)
    mc = mc_ergodic_rate(layout, users, cfg, "mrt", n_draws, rng)
    slack = 0.05 * mc.per_user + 3.0 * mc.mc_std_err
    excess = float(np.max(np.abs(approx.per_user - mc.per_user) - slack))
    return CheckResult(
        "mrt_approx_quality",
        excess <= 0.0,
        excess,
        0.0,
        f"approx sum {approx.sum:.4f} vs Monte-Carlo {mc.sum:.4f}",
    )


def check_position_invariance(cfg: SystemConfig, rng: np.random.Generator) -> CheckResult:
    """Single-user and no-LoS scenarios must leave both optimizers' objectives flat."""
    from .mrt_optimizer import optimize_mrt
    from .zf_optimizer import optimize_zf

    worst = 0.0
    noise = 1e-11

    def users_for(m_users: int, kappa: float) -> list[UserStats]:
        return [
            UserStats(
                theta=rng.uniform(-np.pi / 2, np.pi / 2),
                phi=rng.uniform(-np.pi / 2, np.pi / 2),
                kappa=kappa,
                beta=1.5e-9,
                noise_power=noise,
            )
            for _ in range(m_users)
        ]

    # single user
    cfg1 = SystemConfig(
        n_antennas=cfg.n_antennas,
        n_users=1,
        region=cfg.region,
        wavelength=cfg.wavelength,
        p_tot=cfg.p_tot,
        d_min=cfg.d_min,
    )
    lay0 = fpa_grid_layout(cfg1)
    for optimizer in (optimize_mrt, optimize_zf):
        _, trace = optimizer(lay0, users_for(1, 6.0), cfg1)
        vals = trace.objective_values
        worst = max(worst, float(np.max(np.abs(vals - vals[0]))))

    # all Rician factors zero
    cfg0 = SystemConfig(
        n_antennas=cfg.n_antennas,
        n_users=cfg.n_users,
        region=cfg.region,
        wavelength=cfg.wavelength,
        p_tot=cfg.p_tot,
        d_min=cfg.d_min,
    )
    lay0 = fpa_grid_layout(cfg0)
    for optimizer in (optimize_mrt, optimize_zf):
        _, trace = optimizer(lay0, users_for(cfg.n_users, 0.0), cfg0)
        vals = trace.objective_values
        worst = max(worst, float(np.max(np.abs(vals - vals[0]))))
    return CheckResult(
        "position_invariance",
        worst <= 1e-12,
        worst,
        1e-12,
        "single-user and zero-Rician objective drift across sweeps",
    )
