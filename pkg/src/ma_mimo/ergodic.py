"""Closed-form ergodic-rate expressions and the Monte-Carlo reference estimator.

The matched-filter (MRT) scheme admits a closed-form ergodic-rate
approximation built from the second and fourth moments of the Rician
channel; zero forcing admits a Jensen lower bound driven by the LoS
correlation matrix.  ``mc_ergodic_rate`` estimates the true expectation by
simulation and is the reference both closed forms are validated against.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import beamforming as bf
from .channel import AntennaLayout, SystemConfig, UserStats, los_matrix, sample_channels

MC_CHUNK = 4096

MC_BEAMFORMERS = ("mrt", "zf", "wmmse", "zf_wf", "mrt_popt")


@dataclass(frozen=True)
class ErgodicReport:
    """Per-user and total ergodic rates from one evaluation route."""

    per_user: np.ndarray  # (M,) bits/s/Hz
    sum: float  # bits/s/Hz
    kind: str  # mrt_approx | zf_lower_bound | monte_carlo
    mc_std_err: np.ndarray | None = None  # (M,), Monte-Carlo only
    sum_std_err: float | None = None  # Monte-Carlo only
    n_resampled: int = 0  # draws replaced after beamformer failures


@dataclass(frozen=True)
class ZfStatsCache:
    """Deterministic statistics shared by the zero-forcing rate bound.

    ``lambda1`` and ``lambda2`` store the diagonals of the Rician weighting
    matrices; ``sigma`` is the Hermitian positive-definite LoS correlation
    matrix with unit diagonal.
    """

    omega: np.ndarray  # (M,) Rician factors
    lambda1: np.ndarray  # (M,) = 1 / (kappa + 1)
    lambda2: np.ndarray  # (M,) = sqrt(kappa / (kappa + 1))
    hbar: np.ndarray  # (N, M) LoS steering matrix
    sigma: np.ndarray  # (M, M) Hermitian positive definite


def mrt_ergodic_approx(
    layout: AntennaLayout, users: list[UserStats], cfg: SystemConfig
) -> ErgodicReport:
    """Closed-form ergodic-rate approximation under matched-filter beams.

    Per user the rate is log2(1 + E||h_m||^4 / (sum_j E|h_j^H h_m|^2 +
    expected noise-over-power)), with every expectation evaluated in closed
    form from the statistical CSI and the LoS steering correlations.
    """
    n = cfg.n_antennas
    kappa = np.array([u.kappa for u in users])
    beta = np.array([u.beta for u in users])
    noise = np.array([u.noise_power for u in users])
    hbar = los_matrix(layout, users, cfg.wavelength)
    cross = np.abs(hbar.conj().T @ hbar) ** 2  # cross[j, m] = |hbar_j^H hbar_m|^2

    numerator = beta**2 * ((2.0 * n * kappa + n) / (kappa + 1.0) ** 2 + n**2)
    pair = beta[None, :] * beta[:, None] * (
        kappa[None, :] * kappa[:, None] * cross
        + n * (kappa[None, :] + kappa[:, None] + 1.0)
    ) / ((kappa[None, :] + 1.0) * (kappa[:, None] + 1.0))
    np.fill_diagonal(pair, 0.0)
    interference = pair.sum(axis=0)  # sum over j != m for each column m

    if cfg.p_tot > 0.0:
        noise_term = noise * n * beta.sum() / cfg.p_tot
        per_user = np.log2(1.0 + numerator / (interference + noise_term))
    else:
        per_user = np.zeros_like(beta)
    return ErgodicReport(per_user, float(per_user.sum()), "mrt_approx")


def zf_sigma(
    layout: AntennaLayout, users: list[UserStats], wavelength: float
) -> ZfStatsCache:
    """LoS correlation statistics feeding the zero-forcing rate bound."""
    kappa = np.array([u.kappa for u in users])
    lam1 = 1.0 / (kappa + 1.0)
    lam2 = np.sqrt(kappa / (kappa + 1.0))
    hbar = los_matrix(layout, users, wavelength)
    n = layout.n_antennas
    gram = hbar.conj().T @ hbar
    sigma = np.diag(lam1).astype(complex)
    sigma += np.outer(lam2, lam2) * gram / n
    sigma = 0.5 * (sigma + sigma.conj().T)  # enforce exact Hermitian symmetry
    eigmin = float(np.linalg.eigvalsh(sigma)[0])
    if eigmin <= 0.0:
        raise ValueError(f"correlation matrix not positive definite (min eig {eigmin:g})")
    return ZfStatsCache(kappa, lam1, lam2, hbar, sigma)


def zf_ergodic_lower_bound(
    layout: AntennaLayout, users: list[UserStats], cfg: SystemConfig
) -> ErgodicReport:
    """Jensen lower bound on the ergodic rate under equal-power zero forcing."""
    n, m = cfg.n_antennas, cfg.n_users
    if n <= m:
        raise ValueError("the bound needs more antennas than users")
    stats = zf_sigma(layout, users, cfg.wavelength)
    inv_diag = np.diagonal(np.linalg.inv(stats.sigma)).real
    beta = np.array([u.beta for u in users])
    noise = np.array([u.noise_power for u in users])
    p_m = cfg.p_tot / m
    per_user = np.log2(1.0 + (p_m / noise) * beta * (n - m) / inv_diag)
    return ErgodicReport(per_user, float(per_user.sum()), "zf_lower_bound")


def _chunk_rates(
    layout: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    beamformer: str,
    size: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """Per-user rates for one chunk of channel draws, resampling failed draws."""
    noise = np.array([u.noise_power for u in users])
    evaluate = {
        "mrt": lambda H: bf._mrt_fixed_power_rates(H, cfg.p_tot, noise),
        "zf": lambda H: bf._zf_equal_power_rates(H, cfg.p_tot, noise),
        "zf_wf": lambda H: bf._zf_waterfilled_rates(H, cfg.p_tot, noise),
        "wmmse": lambda H: bf._wmmse_rates(H, cfg.p_tot, noise),
        "mrt_popt": lambda H: bf._mrt_optimized_power_rates(H, cfg.p_tot, noise),
    }[beamformer]
    H = sample_channels(layout, users, cfg.wavelength, rng, size)
    rates, bad = evaluate(H)
    resampled = 0
    for _ in range(50):
        n_bad = int(bad.sum())
        if n_bad == 0:
            break
        resampled += n_bad
        H_new = sample_channels(layout, users, cfg.wavelength, rng, n_bad)
        new_rates, new_bad = evaluate(H_new)
        idx = np.flatnonzero(bad)
        rates[idx] = new_rates
        still_bad = np.zeros_like(bad)
        still_bad[idx] = new_bad
        bad = still_bad
    else:
        raise RuntimeError("beamformer kept failing on resampled channel draws")
    return rates, resampled


def mc_ergodic_rate(
    layout: AntennaLayout,
    users: list[UserStats],
    cfg: SystemConfig,
    beamformer: str,
    n_samples: int,
    rng: np.random.Generator,
    n_threads: int = 1,
) -> ErgodicReport:
    """Monte-Carlo ergodic-rate estimate over i.i.d. channel draws.

    Draws are generated in fixed-size chunks, each from an independent child
    stream of ``rng``, so the result is identical for any thread count.
    Failed beamformer draws (e.g. a rank-deficient zero-forcing instance)
    are resampled and counted in ``n_resampled``.
    """
    if beamformer not in MC_BEAMFORMERS:
        raise ValueError(f"unknown beamformer {beamformer!r}")
    if n_samples < 100:
        raise ValueError("need at least 100 Monte-Carlo draws")
    sizes = [MC_CHUNK] * (n_samples // MC_CHUNK)
    if n_samples % MC_CHUNK:
        sizes.append(n_samples % MC_CHUNK)
    streams = rng.spawn(len(sizes))

    def work(args):
        size, stream = args
        return _chunk_rates(layout, users, cfg, beamformer, size, stream)

    if n_threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(work, zip(sizes, streams)))
    else:
        results = [work(a) for a in zip(sizes, streams)]

    rates = np.concatenate([r for r, _ in results], axis=0)
    resampled = sum(c for _, c in results)
    per_user = rates.mean(axis=0)
    se = rates.std(axis=0, ddof=1) / math.sqrt(n_samples)
    sums = rates.sum(axis=1)
    sum_se = float(sums.std(ddof=1) / math.sqrt(n_samples))
    return ErgodicReport(
        per_user,
        float(per_user.sum()),
        "monte_carlo",
        mc_std_err=se,
        sum_std_err=sum_se,
        n_resampled=resampled,
    )
