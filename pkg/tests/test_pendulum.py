import csv
import math

import numpy as np
import pytest

from oracles import pendulum_energy
from tdegnn.errors import ConfigError
from tdegnn.pendulum import (PendulumConfig, contiguous_splits, default_train_config, leapfrog, make_dataset,
                             naive_predict, run_experiment, simulate, sliding_windows)


class TestSimulate:
    def test_fixed_point(self):
        traj = simulate(PendulumConfig(theta0=0.0, omega_dot0=0.0, steps=200))
        np.testing.assert_array_equal(traj.theta, 0.0)

    def test_rigid_rod(self):
        traj = simulate(PendulumConfig(length=1.7))
        np.testing.assert_allclose(np.hypot(traj.x1, traj.y1), 1.7, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(traj.positions()[:, 0], 0.0)

    def test_small_angle_period(self):
        cfg = PendulumConfig(theta0=0.1, epsilon=0.0, dt=0.01, steps=int(10 * 2 * math.pi / 0.01) + 200)
        traj = simulate(cfg)
        up = np.flatnonzero((traj.theta[:-1] < 0) & (traj.theta[1:] >= 0))
        crossings = traj.times[up] - traj.theta[up] * cfg.dt / (traj.theta[up + 1] - traj.theta[up])
        period = np.mean(np.diff(crossings[:11]))
        assert abs(period - 2 * math.pi) < 0.02 * 2 * math.pi

    def test_energy_drift(self):
        cfg = PendulumConfig(theta0=1.0, epsilon=0.0, dt=0.01, steps=10_001)
        traj = simulate(cfg)
        energy = pendulum_energy(traj.theta, traj.velocity)
        assert np.max(np.abs(energy - energy[0])) / energy[0] < 0.01

    def test_time_reversal(self):
        cfg = PendulumConfig(epsilon=0.0, dt=0.01)
        theta, vel = leapfrog(cfg, 1.0, 0.3, 0.0, 5000)
        back, _ = leapfrog(cfg, theta[-1], -vel[-1], 0.0, 5000)
        assert abs(back[-1] - 1.0) < 1e-8

    def test_time_varying_frequency(self):
        cfg = PendulumConfig()
        assert cfg.frequency(math.pi / 2) == pytest.approx(0.96)

    def test_positive_forcing_sign_reachable(self):
        traj = simulate(PendulumConfig(theta0=0.1, forcing_sign=1, steps=50))
        assert traj.theta[-1] > traj.theta[0]

    @pytest.mark.parametrize("bad", [dict(dt=0.0), dict(steps=1), dict(epsilon=1.0), dict(forcing_sign=0)])
    def test_invalid_config(self, bad):
        with pytest.raises(ConfigError):
            PendulumConfig(**bad)

    def test_csv(self, tmp_path):
        path = tmp_path / "traj.csv"
        simulate(PendulumConfig(steps=10)).write_csv(path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["t", "theta", "x1", "y1"]
        assert len(rows) == 11


class TestDataset:
    def test_window_count_and_shape(self):
        ds = make_dataset(simulate(PendulumConfig(steps=10)), r=4, a=1, split=(1.0, 0.0, 0.0))
        assert len(ds) == 6
        assert ds.inputs.shape == (6, 2, 8) and ds.targets.shape == (6, 2, 2)

    def test_window_contents(self):
        traj = simulate(PendulumConfig(steps=12))
        ds = make_dataset(traj, r=3, a=2)
        pos = traj.positions()
        np.testing.assert_array_equal(ds.inputs[4, 1], pos[4:7, 1].reshape(-1))
        np.testing.assert_array_equal(ds.targets[4, 1], pos[7:9, 1].reshape(-1))
        np.testing.assert_array_equal(ds.times[4], traj.times[4:7])

    def test_no_leakage(self):
        ds = make_dataset(simulate(PendulumConfig()), r=4, a=1)
        train_last = ds.splits["train"].max() + 4
        assert train_last < ds.splits["val"].min() < ds.splits["test"].min()
        assert ds.splits["val"].max() + 4 < ds.splits["test"].min()

    def test_insufficient_steps(self):
        with pytest.raises(ConfigError):
            make_dataset(simulate(PendulumConfig(steps=4)), r=4, a=1)

    def test_bad_fractions(self):
        with pytest.raises(ConfigError):
            contiguous_splits(100, 4, 1, (0.5, 0.2, 0.2))


class TestNaive:
    def test_constant_zero_mse(self):
        x = np.full((5, 2, 8), 0.3)
        assert np.mean((naive_predict(x) - 0.3) ** 2) == 0.0

    def test_repeats_last_frame(self, rng):
        x = rng.normal(size=(5, 2, 8))
        pred = naive_predict(x, 2, 3)
        for j in range(3):
            np.testing.assert_array_equal(pred[..., 2 * j:2 * j + 2], x[..., -2:])

    def test_linear_signal_closed_form(self):
        s, dt = 0.7, 0.1
        t = dt * np.arange(30)
        series = np.stack([s * t, -s * t], axis=-1)[:, None, :]
        inputs, targets, _ = sliding_windows(series, t, 4, 1)
        mse = np.mean((naive_predict(inputs, 2, 1) - targets) ** 2)
        assert mse == pytest.approx((s * dt) ** 2, rel=1e-12)

    def test_positive_on_pendulum(self):
        ds = make_dataset(simulate(PendulumConfig()))
        idx = ds.splits["test"]
        assert np.mean((naive_predict(ds.inputs[idx]) - ds.targets[idx]) ** 2) > 0


class TestExperiment:
    def test_untrained_rows(self, tmp_path):
        res = run_experiment([2], train_cfg=default_train_config(epochs=0))
        assert [r.model for r in res.rows] == ["naive", "tde-gnn"]
        assert res.row("tde-gnn", 2).test_mse > 0
        assert len(res.row("tde-gnn", 2).learned_coefficients) == 2
        res.write_csv(tmp_path / "exp.csv")
        rows = list(csv.reader(open(tmp_path / "exp.csv")))
        assert rows[0] == ["model", "order", "test_mse", "learned_coefficients"]
        assert rows[1][1] == "" and rows[1][3] == ""
        assert rows[2][3].count(";") == 1

    def test_divergence_marked_failed(self, tmp_path, monkeypatch):
        import tdegnn.pendulum as pend
        from tdegnn.errors import DivergenceError

        def explode(*a, **k):
            raise DivergenceError("non-finite training loss at epoch 1", epoch=1)

        monkeypatch.setattr(pend, "train_loop", explode)
        res = pend.run_experiment([1], train_cfg=default_train_config(epochs=1))
        row = res.row("tde-gnn", 1)
        assert row.status == "failed" and "epoch 1" in row.error
        res.write_csv(tmp_path / "exp.csv")
        assert list(csv.reader(open(tmp_path / "exp.csv")))[2][2] == "failed"
