"""Small-timescale beamformers and instantaneous SINR / sum-rate evaluation.

All beamformers return an (n_antennas, n_users) complex matrix whose columns
are the per-user precoding vectors; total power never exceeds the budget.
Batched variants operate on stacks of channels with shape (draws, N, M) and
back the Monte-Carlo estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG2E = math.log2(math.e)


@dataclass(frozen=True)
class RateReport:
    """Per-user SINRs and achievable rates for one channel/beamformer pair."""

    sinr: np.ndarray  # (M,)
    per_user_rate: np.ndarray  # (M,) bits/s/Hz
    sum_rate: float  # bits/s/Hz


def rate_report(H: np.ndarray, W: np.ndarray, noise: np.ndarray) -> RateReport:
    """Evaluate per-user SINR and rates of beamformer W on channel H.

    The SINR of user m is its own beam power |h_m^H w_m|^2 over the sum of
    the other beams' leakage into h_m plus the receiver noise power.
    """
    noise = np.asarray(noise, dtype=float)
    cross = H.conj().T @ W  # cross[m, j] = h_m^H w_j
    power = np.abs(cross) ** 2
    signal = np.diagonal(power)
    interference = power.sum(axis=1) - signal
    sinr = signal / (interference + noise)
    rates = np.log2(1.0 + sinr)
    return RateReport(sinr, rates, float(rates.sum()))


def _batch_rates(H: np.ndarray, W: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Per-user rates for stacked channels/beamformers, shape (draws, M)."""
    cross = np.einsum("snm,snj->smj", H.conj(), W)  # cross[s, m, j] = h_m^H w_j
    power = np.abs(cross) ** 2
    signal = np.einsum("smm->sm", power)
    interference = power.sum(axis=2) - signal
    sinr = signal / (interference + noise[None, :])
    return np.log2(1.0 + sinr)


def mrt_beamformer(H: np.ndarray, p_tot: float) -> np.ndarray:
    """Matched-filter beams with one common power factor.

    Each beam is the user's channel vector scaled by sqrt(p) where the shared
    p spends the full budget: p = p_tot / sum_m ||h_m||^2.
    """
    total = float(np.sum(np.abs(H) ** 2))
    if total <= 0.0:
        raise ValueError("degenerate channel: all entries zero")
    return math.sqrt(p_tot / total) * H


def zf_directions(H: np.ndarray) -> np.ndarray:
    """Unit-norm zero-forcing beam directions via the channel pseudo-inverse.

    Column m is proportional to the projection of h_m onto the orthogonal
    complement of the other users' channels; requires N > M and full column
    rank.
    """
    n, m = H.shape
    if n <= m:
        raise ValueError("zero forcing needs more antennas than users")
    s = np.linalg.svd(H, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= 1e-10 * s[0]:
        raise ValueError("rank-deficient channel matrix")
    gram = H.conj().T @ H
    dirs = H @ np.linalg.inv(gram)
    return dirs / np.linalg.norm(dirs, axis=0)


def zf_beamformer(
    H: np.ndarray, p_tot: float, powers: np.ndarray | None = None
) -> np.ndarray:
    """Zero-forcing beamformer, equal power split unless powers are given."""
    dirs = zf_directions(H)
    m = H.shape[1]
    if powers is None:
        powers = np.full(m, p_tot / m)
    else:
        powers = np.asarray(powers, dtype=float)
        if powers.sum() > p_tot * (1.0 + 1e-9):
            raise ValueError("per-user powers exceed the budget")
    return dirs * np.sqrt(powers)


def water_fill(levels: np.ndarray, budget: float) -> np.ndarray:
    """Classic water-filling: maximize sum log(1 + p_i / levels_i), sum p = budget."""
    levels = np.asarray(levels, dtype=float)
    order = np.argsort(levels)
    lv = levels[order]
    k = lv.size
    while k > 0:
        mu = (budget + lv[:k].sum()) / k
        if mu >= lv[k - 1]:
            break
        k -= 1
    p_sorted = np.zeros_like(lv)
    p_sorted[:k] = mu - lv[:k]
    p = np.empty_like(p_sorted)
    p[order] = p_sorted
    return p


def zf_waterfilling_power(
    H: np.ndarray, p_tot: float, noise: np.ndarray
) -> np.ndarray:
    """Sum-rate-optimal power split across zero-forced streams.

    With interference nulled, user m sees an AWGN channel of gain
    g_m = 1 / [(H^H H)^{-1}]_mm, so the optimum is water-filling against the
    inverse SNR levels noise_m / g_m.
    """
    n, m = H.shape
    if n <= m:
        raise ValueError("zero forcing needs more antennas than users")
    gram = H.conj().T @ H
    inv_diag = np.diagonal(np.linalg.inv(gram)).real
    if np.any(inv_diag <= 0.0):
        raise ValueError("rank-deficient channel matrix")
    levels = np.asarray(noise, dtype=float) * inv_diag
    return water_fill(levels, p_tot)


def _zf_equal_power_rates(
    H: np.ndarray, p_tot: float, noise: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batched equal-power ZF rates from the Gram spectrum, plus a bad-draw mask."""
    gram = np.einsum("snm,snj->smj", H.conj(), H)
    w, v = np.linalg.eigh(gram)
    bad = (w[:, 0] <= 0.0) | (w[:, 0] <= 1e-14 * w[:, -1])
    w_safe = np.where(w > 0.0, w, 1.0)
    inv_diag = np.einsum("smk,sk->sm", np.abs(v) ** 2, 1.0 / w_safe)
    m = H.shape[2]
    sinr = (p_tot / m) / (noise[None, :] * inv_diag)
    rates = np.log2(1.0 + sinr)
    bad |= ~np.all(np.isfinite(rates), axis=1)
    return rates, bad


def _zf_waterfilled_rates(
    H: np.ndarray, p_tot: float, noise: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batched ZF rates with per-draw water-filled powers."""
    gram = np.einsum("snm,snj->smj", H.conj(), H)
    w, v = np.linalg.eigh(gram)
    bad = (w[:, 0] <= 0.0) | (w[:, 0] <= 1e-14 * w[:, -1])
    w_safe = np.where(w > 0.0, w, 1.0)
    inv_diag = np.einsum("smk,sk->sm", np.abs(v) ** 2, 1.0 / w_safe)
    levels = noise[None, :] * inv_diag
    powers = _water_fill_batch(levels, p_tot)
    rates = np.log2(1.0 + powers / levels)
    bad |= ~np.all(np.isfinite(rates), axis=1)
    return rates, bad


def _water_fill_batch(levels: np.ndarray, budget: float) -> np.ndarray:
    """Row-wise water-filling over (draws, M) inverse-SNR levels."""
    lv = np.sort(levels, axis=1)
    s, m = lv.shape
    csum = np.cumsum(lv, axis=1)
    ks = np.arange(1, m + 1)
    mu_candidates = (budget + csum) / ks  # water level if the k best streams are active
    active = mu_candidates >= lv  # stream k-1 still above water
    k_star = m - np.argmax(active[:, ::-1], axis=1) - 1  # largest valid k index
    mu = mu_candidates[np.arange(s), k_star]
    return np.maximum(mu[:, None] - levels, 0.0)


def _mrt_fixed_power_rates(
    H: np.ndarray, p_tot: float, noise: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batched matched-filter rates under the shared power factor."""
    gram = np.einsum("snm,snj->smj", H.conj(), H)
    norms = np.einsum("smm->sm", gram).real
    p = p_tot / norms.sum(axis=1)
    cross = np.abs(gram) ** 2  # cross[s, j, m] = |h_j^H h_m|^2
    interference = cross.sum(axis=1) - norms**2
    sinr = (p[:, None] * norms**2) / (p[:, None] * interference + noise[None, :])
    rates = np.log2(1.0 + sinr)
    bad = ~np.all(np.isfinite(rates), axis=1)
    return rates, bad


def project_simplex_batch(v: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection of each row onto {p >= 0, sum p = budget}."""
    u = np.sort(v, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - budget
    ks = np.arange(1, v.shape[1] + 1)
    cond = u - css / ks > 0.0
    rho = np.count_nonzero(cond, axis=1)
    theta = css[np.arange(v.shape[0]), rho - 1] / rho
    return np.maximum(v - theta[:, None], 0.0)


def _mrt_power_rates_from_gains(
    gains: np.ndarray, powers: np.ndarray, noise: np.ndarray
) -> np.ndarray:
    """Per-user rates given beam gain table gains[s, m, j] = |h_m^H u_j|^2."""
    signal_gain = np.einsum("smm->sm", gains)
    interference = (
        np.einsum("smj,sj->sm", gains, powers) - signal_gain * powers
    )
    sinr = powers * signal_gain / (interference + noise[None, :])
    return np.log2(1.0 + sinr)


def mrt_power_gains(H: np.ndarray) -> np.ndarray:
    """Gain table of unit-norm matched-filter beams, gains[s, m, j] = |h_m^H u_j|^2."""
    gram = np.einsum("snm,snj->smj", H.conj(), H)
    norms = np.einsum("smm->sm", gram).real
    return np.abs(gram) ** 2 / norms[:, None, :]


def _mrt_optimized_power_rates(
    H: np.ndarray, p_tot: float, noise: np.ndarray, n_steps: int = 500
) -> tuple[np.ndarray, np.ndarray]:
    """Batched matched-filter rates with per-draw power search on the simplex.

    Projected gradient ascent on the instantaneous sum rate with backtracked
    steps; a heuristic reference scheme, not a claimed optimum.
    """
    s, _, m = H.shape
    gains = mrt_power_gains(H)
    noise_b = np.asarray(noise, dtype=float)
    p = np.full((s, m), p_tot / m)
    rate = _mrt_power_rates_from_gains(gains, p, noise_b).sum(axis=1)
    step = np.full(s, p_tot)
    for _ in range(n_steps):
        grad = _mrt_power_gradient(gains, p, noise_b)
        cand = project_simplex_batch(p + step[:, None] * grad, p_tot)
        cand_rate = _mrt_power_rates_from_gains(gains, cand, noise_b).sum(axis=1)
        improved = cand_rate >= rate
        p = np.where(improved[:, None], cand, p)
        rate = np.where(improved, cand_rate, rate)
        step = np.where(improved, step * 1.2, step * 0.5)
    rates = _mrt_power_rates_from_gains(gains, p, noise_b)
    bad = ~np.all(np.isfinite(rates), axis=1)
    return rates, bad


def _mrt_power_gradient(
    gains: np.ndarray, powers: np.ndarray, noise: np.ndarray
) -> np.ndarray:
    signal_gain = np.einsum("smm->sm", gains)
    interference = (
        np.einsum("smj,sj->sm", gains, powers) - signal_gain * powers
    )
    den = interference + noise[None, :]
    num = den + powers * signal_gain
    # d(sum rate)/dp_k = log2(e) * [g_kk / num_k + sum_{m != k} g_mk (1/num_m - 1/den_m)]
    delta = 1.0 / num - 1.0 / den
    grad = np.einsum("smk,sm->sk", gains, delta)
    grad -= signal_gain * delta  # remove the m == k term from the sum
    grad += signal_gain / num
    return LOG2E * grad


def mrt_optimized_power(
    H: np.ndarray, p_tot: float, noise: np.ndarray, n_steps: int = 500
) -> np.ndarray:
    """Matched-filter beamformer with the heuristic simplex power search."""
    gains = mrt_power_gains(H[None])
    noise_b = np.asarray(noise, dtype=float)
    m = H.shape[1]
    p = np.full((1, m), p_tot / m)
    rate = _mrt_power_rates_from_gains(gains, p, noise_b).sum(axis=1)
    step = np.full(1, p_tot)
    for _ in range(n_steps):
        grad = _mrt_power_gradient(gains, p, noise_b)
        cand = project_simplex_batch(p + step[:, None] * grad, p_tot)
        cand_rate = _mrt_power_rates_from_gains(gains, cand, noise_b).sum(axis=1)
        improved = cand_rate >= rate
        p = np.where(improved[:, None], cand, p)
        rate = np.where(improved, cand_rate, rate)
        step = np.where(improved, step * 1.2, step * 0.5)
    dirs = H / np.linalg.norm(H, axis=0)
    return dirs * np.sqrt(p[0])


def wmmse_baseline(
    H: np.ndarray,
    p_tot: float,
    noise: np.ndarray,
    iters: int = 200,
    w_init: np.ndarray | None = None,
    return_trace: bool = False,
):
    """Weighted-MMSE sum-rate beamformer, the adaptive-beamforming reference.

    Initialized from the better of the matched-filter and zero-forcing
    precoders (or from ``w_init``), so the converged sum rate can never fall
    below either classical scheme.  Returns the beamforming matrix, plus the
    per-iteration sum-rate trace when ``return_trace`` is set.
    """
    noise_b = np.asarray(noise, dtype=float)
    if w_init is not None:
        w_init = np.asarray(w_init, dtype=complex)
        if not np.any(w_init):
            raise ValueError("all-zero beamformer initialization")
        w0 = w_init
    else:
        w0 = mrt_beamformer(H, p_tot)
        n, m = H.shape
        if n > m:
            try:
                w_zf = zf_beamformer(H, p_tot)
            except ValueError:
                w_zf = None
            if w_zf is not None:
                if (
                    rate_report(H, w_zf, noise_b).sum_rate
                    > rate_report(H, w0, noise_b).sum_rate
                ):
                    w0 = w_zf
    W, trace = _wmmse_batch(H[None], p_tot, noise_b, iters, w0[None])
    if return_trace:
        return W[0], trace[:, 0]
    return W[0]


def _wmmse_rates(H: np.ndarray, p_tot: float, noise: np.ndarray, iters: int = 200):
    """Batched WMMSE rates for the Monte-Carlo estimator."""
    s, n, m = H.shape
    total = np.sum(np.abs(H) ** 2, axis=(1, 2))
    W0 = np.sqrt(p_tot / total)[:, None, None] * H
    if n > m:
        zf_rates, zf_bad = _zf_equal_power_rates(H, p_tot, noise)
        mrt_rates, _ = _mrt_fixed_power_rates(H, p_tot, noise)
        use_zf = (~zf_bad) & (zf_rates.sum(axis=1) > mrt_rates.sum(axis=1))
        if np.any(use_zf):
            gram = np.einsum("snm,snj->smj", H.conj(), H)
            dirs = np.linalg.solve(gram, np.swapaxes(H.conj(), 1, 2))
            dirs = np.swapaxes(dirs.conj(), 1, 2)
            dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
            W_zf = math.sqrt(p_tot / m) * dirs
            W0 = np.where(use_zf[:, None, None], W_zf, W0)
    W, _ = _wmmse_batch(H, p_tot, noise, iters, W0)
    rates = _batch_rates(H, W, noise)
    bad = ~np.all(np.isfinite(rates), axis=1)
    return rates, bad


def _wmmse_batch(
    H: np.ndarray,
    p_tot: float,
    noise: np.ndarray,
    iters: int,
    W: np.ndarray,
    rel_tol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray]:
    """Run WMMSE block updates on stacked instances; returns (W, rate trace)."""
    s, n, m = H.shape
    eye = np.eye(n)
    trace = [_batch_rates(H, W, noise).sum(axis=1)]
    for _ in range(iters):
        cross = np.einsum("snm,snj->smj", H.conj(), W)
        power = np.abs(cross) ** 2
        total = power.sum(axis=2) + noise[None, :]
        diag = np.einsum("smm->sm", cross)
        u = diag / total  # MMSE receive coefficients
        mse = 1.0 - np.abs(diag) ** 2 / total
        mse = np.maximum(mse, 1e-15)
        weight = 1.0 / mse
        coeff = weight * np.abs(u) ** 2
        A = np.einsum("sm,snm,skm->snk", coeff, H, H.conj())
        d, V = np.linalg.eigh(A)
        d = np.maximum(d, 0.0)
        # beams in the eigenbasis: w_m = V diag(1/(d + mu)) V^H h_m * (weight u)*
        B = np.einsum("skn,skm->snm", V.conj(), H) * (weight * u.conj())[:, None, :]
        b2 = np.abs(B) ** 2
        tol_d = 1e-12 * np.maximum(d[:, -1:], 1e-300)
        live = d > tol_d
        b2_live = np.where(live[:, :, None], b2, 0.0)
        d_safe = np.where(live, d, 1.0)
        power0 = np.sum(b2_live / d_safe[:, :, None] ** 2, axis=(1, 2))
        mu = np.zeros(s)
        need = power0 > p_tot
        if np.any(need):
            hi = np.sqrt(np.sum(b2, axis=(1, 2))[need] / p_tot)
            lo = np.zeros_like(hi)
            d_n = d[need]
            b2_n = b2[need]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                pw = np.sum(b2_n / (d_n[:, :, None] + mid[:, None, None]) ** 2, axis=(1, 2))
                over = pw > p_tot
                lo = np.where(over, mid, lo)
                hi = np.where(over, hi, mid)
            mu[need] = 0.5 * (lo + hi)
        den = d[:, :, None] + mu[:, None, None]
        dead = (~live[:, :, None]) & (mu[:, None, None] <= 0.0)
        gain = np.where(dead, 0.0, 1.0 / np.where(dead, 1.0, den))
        W = np.einsum("snk,skm->snm", V, gain * B)
        # guard against float overshoot of the power budget
        pw = np.sum(np.abs(W) ** 2, axis=(1, 2))
        scale = np.minimum(1.0, np.sqrt(p_tot / np.maximum(pw, 1e-300)))
        W = W * scale[:, None, None]
        rate = _batch_rates(H, W, noise).sum(axis=1)
        trace.append(rate)
        if np.all(np.abs(rate - trace[-2]) <= rel_tol * np.maximum(np.abs(rate), 1.0)):
            break
    return W, np.array(trace)
