import csv
import json
import math
import os

import numpy as np
import pytest

from ma_mimo import experiments as ex
from ma_mimo import fpa_grid_layout, random_feasible_layout
from ma_mimo.checks import check_mrt_minorization, check_zf_minorization
from ma_mimo.cli import main as cli_main


def small_conf(**overrides):
    conf = {
        "seed": 5,
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
            "kappa": 6.0,
            "noise_power_dbm": -80.0,
            "dist_range": [50.0, 70.0],
        },
        "schemes": ["fpa_zf"],
        "mc_samples": 2000,
    }
    conf.update(overrides)
    return conf


class TestScenarioGeneration:
    def test_deterministic(self):
        a = ex.generate_scenario(small_conf())
        b = ex.generate_scenario(small_conf())
        assert a.users == b.users
        assert a.cfg == b.cfg

    def test_db_conversion(self):
        sc = ex.generate_scenario(small_conf())
        assert sc.cfg.beta0 == pytest.approx(1e-4)
        assert sc.users[0].noise_power == pytest.approx(1e-11)

    def test_region_formula(self):
        sc = ex.generate_scenario(small_conf())
        assert (sc.cfg.region.x_half, sc.cfg.region.y_half) == (2.0, 3.0)

    def test_distance_moments(self):
        rng = np.random.default_rng(0)
        users = ex.generate_users(10_000, 6.0, 1e-11, ex.generate_scenario().cfg, (50, 70), rng)
        d = np.array([u.distance for u in users])
        se = d.std(ddof=1) / math.sqrt(d.size)
        assert abs(d.mean() - 60.0) < 3 * se

    def test_validation_errors(self):
        with pytest.raises(ValueError):
            ex.generate_scenario(small_conf(schemes=[]))
        with pytest.raises(ValueError):
            ex.generate_scenario(small_conf(schemes=["nonsense"]))
        with pytest.raises(ValueError):
            ex.generate_scenario(
                small_conf(sweep={"variable": "p_tot", "values": [1.0, 0.5]})
            )
        with pytest.raises(ValueError):
            ex.generate_scenario(
                small_conf(sweep={"variable": "bandwidth", "values": [1.0]})
            )


class TestRun:
    def test_single_point_jensen(self, tmp_path):
        sc = ex.generate_scenario(small_conf())
        rows = ex.run(sc, out_dir=str(tmp_path))
        assert len(rows) == 1
        row = rows[0]
        assert row.scheme == "fpa_zf"
        assert row.closed_form is not None
        assert row.closed_form <= row.sum_rate + 3 * row.stderr
        assert os.path.exists(tmp_path / "sweep.csv")

    def test_csv_schema_and_reproducibility(self, tmp_path):
        sc = ex.generate_scenario(small_conf())
        ex.run(sc, out_dir=str(tmp_path / "a"))
        ex.run(sc, out_dir=str(tmp_path / "b"))

        def strip_wall(path):
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
            idx = rows[0].index("wall_ms")
            return [[c for i, c in enumerate(r) if i != idx] for r in rows]

        a = strip_wall(tmp_path / "a" / "sweep.csv")
        b = strip_wall(tmp_path / "b" / "sweep.csv")
        assert a == b
        assert a[0][:9] == [
            "scenario",
            "scheme",
            "sweep_var",
            "sweep_value",
            "sum_rate",
            "stderr",
            "closed_form",
            "iters",
            "wall_ms",
        ][:8] + ["rate_user_1"]

    def test_power_sweep_monotone(self, tmp_path):
        sc = ex.generate_scenario(
            small_conf(sweep={"variable": "p_tot", "values": [0.1, 0.5, 1.0]})
        )
        rows = ex.run(sc, out_dir=str(tmp_path))
        rates = [r.sum_rate for r in rows]
        assert rates[0] < rates[1] < rates[2]

    def test_wall_time_is_recorded(self, tmp_path):
        sc = ex.generate_scenario(small_conf())
        rows = ex.run(sc, out_dir=str(tmp_path))
        assert rows[0].wall_ms > 0.0


class TestConverge:
    def test_trace_csv_monotone(self, tmp_path):
        sc = ex.generate_scenario(small_conf(schemes=["ma_mrt"], mc_samples=500))
        traces = ex.converge(sc, out_dir=str(tmp_path))
        assert "ma_mrt" in traces
        with open(tmp_path / "converge.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        objs = [float(r["objective"]) for r in rows if r["scheme"] == "ma_mrt"]
        assert len(objs) == len(traces["ma_mrt"].steps)
        assert all(b >= a for a, b in zip(objs, objs[1:]))


class TestValidate:
    def test_quick_suite_passes(self, tmp_path):
        sc = ex.generate_scenario(small_conf(seed=3))
        report = ex.validate(sc, out_path=str(tmp_path / "v.json"), quick=True)
        assert report["all_passed"]
        with open(tmp_path / "v.json") as fh:
            on_disk = json.load(fh)
        assert on_disk["all_passed"]
        names = {c["name"] for c in on_disk["checks"]}
        assert {"moment_identities", "woodbury_consistency", "mrt_minorization"} <= names

    def test_corrupted_curvature_fails_minorization(self, cfg65, users_k6):
        # the curvature envelopes carry slack, so the corruption must be
        # substantial before sampled minorization trips
        rng = np.random.default_rng(1)
        layout = random_feasible_layout(cfg65, rng)
        good = check_mrt_minorization(layout, users_k6, cfg65, 1000, np.random.default_rng(2))
        assert good.passed
        bad = check_mrt_minorization(
            layout, users_k6, cfg65, 1000, np.random.default_rng(2), psi_scale=0.05
        )
        assert not bad.passed
        bad_zf = check_zf_minorization(
            layout, users_k6, cfg65, 300, np.random.default_rng(3), xi_scale=0.05
        )
        assert not bad_zf.passed


class TestCli:
    def test_validate_quick(self, tmp_path, capsys):
        conf_path = tmp_path / "conf.json"
        conf_path.write_text(json.dumps(small_conf(seed=3)))
        code = cli_main(
            [
                "validate",
                "--config",
                str(conf_path),
                "--out",
                str(tmp_path / "out"),
                "--quick",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "all checks passed" in out
        assert os.path.exists(tmp_path / "out" / "validation.json")

    def test_sweep_writes_csv(self, tmp_path, capsys):
        conf_path = tmp_path / "conf.json"
        conf_path.write_text(json.dumps(small_conf(mc_samples=1000)))
        code = cli_main(
            ["sweep", "--config", str(conf_path), "--out", str(tmp_path / "res")]
        )
        assert code == 0
        assert os.path.exists(tmp_path / "res" / "sweep.csv")

    def test_seed_override_changes_users(self):
        a = ex.generate_scenario(small_conf(), seed=1)
        b = ex.generate_scenario(small_conf(), seed=2)
        assert a.users != b.users

    def test_optimize_verb(self, tmp_path, capsys):
        conf = small_conf(schemes=["ma_mrt"], mc_samples=500)
        conf["system"].update({"n_antennas": 4, "n_users": 3})
        conf_path = tmp_path / "conf.json"
        conf_path.write_text(json.dumps(conf))
        code = cli_main(["optimize", "--config", str(conf_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "converged=True" in out
        assert "monte-carlo sum rate" in out


class TestMcResampling:
    def test_failed_draws_are_resampled_and_counted(self, cfg65, users_k6, grid65, monkeypatch):
        import ma_mimo.beamforming as bf
        from ma_mimo.ergodic import mc_ergodic_rate

        original = bf._zf_equal_power_rates
        calls = {"n": 0}

        def flaky(H, p_tot, noise):
            rates, bad = original(H, p_tot, noise)
            if calls["n"] == 0:
                bad = bad.copy()
                bad[:3] = True  # pretend the first three draws failed
            calls["n"] += 1
            return rates, bad

        monkeypatch.setattr(bf, "_zf_equal_power_rates", flaky)
        rep = mc_ergodic_rate(grid65, users_k6, cfg65, "zf", 500, np.random.default_rng(0))
        assert rep.n_resampled == 3
        assert np.all(np.isfinite(rep.per_user))
