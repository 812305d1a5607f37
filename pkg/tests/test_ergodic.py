import math
from dataclasses import replace

import numpy as np
import pytest

from ma_mimo import (
    SystemConfig,
    fpa_grid_layout,
    mc_ergodic_rate,
    mrt_ergodic_approx,
    random_feasible_layout,
    zf_ergodic_lower_bound,
    zf_sigma,
)
from conftest import make_users


class TestMrtApprox:
    def test_single_user_layout_independent(self, cfg65):
        cfg = replace(cfg65, n_users=1)
        users = make_users(1, 6.0, n_users=1)
        rng = np.random.default_rng(2)
        a = mrt_ergodic_approx(random_feasible_layout(cfg, rng), users, cfg)
        b = mrt_ergodic_approx(random_feasible_layout(cfg, rng), users, cfg)
        assert a.sum == pytest.approx(b.sum, abs=1e-12)

    def test_no_los_layout_independent(self, cfg65):
        users = make_users(2, 0.0)
        rng = np.random.default_rng(3)
        a = mrt_ergodic_approx(random_feasible_layout(cfg65, rng), users, cfg65)
        b = mrt_ergodic_approx(random_feasible_layout(cfg65, rng), users, cfg65)
        assert np.allclose(a.per_user, b.per_user, atol=1e-12)

    def test_against_monte_carlo(self, cfg65, grid65, users_k6):
        approx = mrt_ergodic_approx(grid65, users_k6, cfg65)
        mc = mc_ergodic_rate(
            grid65, users_k6, cfg65, "mrt", 20_000, np.random.default_rng(4)
        )
        slack = 0.05 * mc.per_user + 3 * mc.mc_std_err
        assert np.all(np.abs(approx.per_user - mc.per_user) <= slack)


class TestZfSigma:
    def test_single_user(self, cfg65):
        cfg = replace(cfg65, n_users=1)
        users = make_users(5, 6.0, n_users=1)
        layout = random_feasible_layout(cfg, np.random.default_rng(6))
        stats = zf_sigma(layout, users, cfg.wavelength)
        assert stats.sigma.shape == (1, 1)
        assert stats.sigma[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_no_los_identity(self, cfg65, grid65):
        users = make_users(7, 0.0)
        stats = zf_sigma(grid65, users, cfg65.wavelength)
        assert np.allclose(stats.sigma, np.eye(5), atol=1e-14)

    def test_unit_diagonal_everywhere(self, cfg65, users_k100):
        rng = np.random.default_rng(8)
        for _ in range(10):
            layout = random_feasible_layout(cfg65, rng)
            stats = zf_sigma(layout, users_k100, cfg65.wavelength)
            assert np.allclose(np.diagonal(stats.sigma).real, 1.0, atol=1e-12)
            assert np.allclose(np.diagonal(stats.sigma).imag, 0.0, atol=1e-14)

    def test_matches_independent_arithmetic(self, cfg65, users_k6):
        from ma_mimo import los_steering

        layout = random_feasible_layout(cfg65, np.random.default_rng(9))
        stats = zf_sigma(layout, users_k6, cfg65.wavelength)
        m = len(users_k6)
        n = cfg65.n_antennas
        manual = np.zeros((m, m), dtype=complex)
        for a in range(m):
            for b in range(m):
                ka, kb = users_k6[a].kappa, users_k6[b].kappa
                va = los_steering(layout, users_k6[a], cfg65.wavelength)
                vb = los_steering(layout, users_k6[b], cfg65.wavelength)
                lam2a = math.sqrt(ka / (ka + 1.0))
                lam2b = math.sqrt(kb / (kb + 1.0))
                manual[a, b] = lam2a * lam2b * np.vdot(va, vb) / n
                if a == b:
                    manual[a, b] += 1.0 / (ka + 1.0)
        assert np.allclose(stats.sigma, manual, atol=1e-12)


class TestZfBound:
    def test_single_user_closed_form(self, cfg65):
        cfg = replace(cfg65, n_users=1)
        users = make_users(10, 6.0, n_users=1)
        rng = np.random.default_rng(11)
        u = users[0]
        expected = math.log2(
            1 + (cfg.p_tot / u.noise_power) * u.beta * (cfg.n_antennas - 1)
        )
        for _ in range(2):
            rep = zf_ergodic_lower_bound(random_feasible_layout(cfg, rng), users, cfg)
            assert rep.sum == pytest.approx(expected, rel=1e-12)

    def test_no_los_user_sees_unit_inverse(self, cfg65):
        users = make_users(12, 6.0)
        users[2] = replace(users[2], kappa=0.0)
        rng = np.random.default_rng(13)
        vals = []
        for _ in range(3):
            layout = random_feasible_layout(cfg65, rng)
            stats = zf_sigma(layout, users, cfg65.wavelength)
            inv_diag = np.diagonal(np.linalg.inv(stats.sigma)).real
            vals.append(inv_diag[2])
        assert np.allclose(vals, 1.0, atol=1e-10)

    def test_needs_excess_antennas(self, cfg65):
        cfg = replace(cfg65, n_users=6)
        users = make_users(14, 6.0, n_users=6)
        with pytest.raises(ValueError):
            zf_ergodic_lower_bound(fpa_grid_layout(cfg), users, cfg)

    def test_below_monte_carlo(self, cfg65, grid65, users_k6):
        bound = zf_ergodic_lower_bound(grid65, users_k6, cfg65)
        mc = mc_ergodic_rate(
            grid65, users_k6, cfg65, "zf", 20_000, np.random.default_rng(15)
        )
        assert np.all(bound.per_user <= mc.per_user + 3 * mc.mc_std_err)


class TestMonteCarlo:
    def test_deterministic_and_thread_invariant(self, cfg65, grid65, users_k6):
        a = mc_ergodic_rate(
            grid65, users_k6, cfg65, "zf", 9000, np.random.default_rng(16)
        )
        b = mc_ergodic_rate(
            grid65, users_k6, cfg65, "zf", 9000, np.random.default_rng(16), n_threads=4
        )
        assert a.sum == b.sum
        assert np.array_equal(a.per_user, b.per_user)

    def test_strong_los_variance_vanishes(self, cfg65, grid65):
        users = make_users(17, 1e12)
        mc = mc_ergodic_rate(
            grid65, users, cfg65, "mrt", 1000, np.random.default_rng(18)
        )
        assert mc.sum_std_err < 1e-3 * mc.sum

    def test_zero_power(self, cfg65, grid65, users_k6):
        cfg = replace(cfg65, p_tot=0.0)
        mc = mc_ergodic_rate(grid65, users_k6, cfg, "mrt", 500, np.random.default_rng(19))
        assert mc.sum == 0.0

    def test_stderr_scaling(self, cfg65, grid65, users_k6):
        reps = [
            mc_ergodic_rate(
                grid65, users_k6, cfg65, "mrt", n, np.random.default_rng(20)
            )
            for n in (5000, 10000)
        ]
        ratio = reps[1].sum_std_err / reps[0].sum_std_err
        assert abs(ratio - 1 / math.sqrt(2)) < 0.2 / math.sqrt(2)

    def test_cross_moment_identity(self, cfg65, grid65, users_k6):
        # pairwise moment of the channel inner product vs its closed form
        from ma_mimo import sample_channels

        n_draws = 100_000
        h = sample_channels(grid65, users_k6, 1.0, np.random.default_rng(21), n_draws)
        gram = np.einsum("snm,snj->smj", h.conj(), h)
        from ma_mimo import los_matrix

        hbar = los_matrix(grid65, users_k6, 1.0)
        n = cfg65.n_antennas
        for m in range(2):
            for j in range(m + 1, 3):
                um, uj = users_k6[m], users_k6[j]
                cross = abs(np.vdot(hbar[:, j], hbar[:, m])) ** 2
                closed = (
                    um.beta
                    * uj.beta
                    * (um.kappa * uj.kappa * cross + n * (um.kappa + uj.kappa + 1))
                    / ((um.kappa + 1) * (uj.kappa + 1))
                )
                samples = np.abs(gram[:, j, m]) ** 2
                se = samples.std(ddof=1) / math.sqrt(n_draws)
                assert abs(samples.mean() - closed) < 3 * se

    def test_monotone_in_power(self, cfg65, grid65, users_k6):
        prev = {"mrt": -1.0, "zf": -1.0, "approx": -1.0, "bound": -1.0}
        for p in (0.1, 0.5, 1.0):
            cfg = replace(cfg65, p_tot=p)
            approx = mrt_ergodic_approx(grid65, users_k6, cfg).sum
            bound = zf_ergodic_lower_bound(grid65, users_k6, cfg).sum
            mc_m = mc_ergodic_rate(
                grid65, users_k6, cfg, "mrt", 2000, np.random.default_rng(22)
            ).sum
            mc_z = mc_ergodic_rate(
                grid65, users_k6, cfg, "zf", 2000, np.random.default_rng(23)
            ).sum
            assert approx > prev["approx"] and bound > prev["bound"]
            assert mc_m > prev["mrt"] and mc_z > prev["zf"]
            prev = {"mrt": mc_m, "zf": mc_z, "approx": approx, "bound": bound}

    def test_input_validation(self, cfg65, grid65, users_k6):
        with pytest.raises(ValueError):
            mc_ergodic_rate(grid65, users_k6, cfg65, "mrt", 50, np.random.default_rng(0))
        with pytest.raises(ValueError):
            mc_ergodic_rate(
                grid65, users_k6, cfg65, "dirty", 500, np.random.default_rng(0)
            )
