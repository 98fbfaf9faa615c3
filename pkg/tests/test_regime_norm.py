"""Regime clustering, ratio normalization, and normalizer persistence."""

import io

import numpy as np
import pytest

import rulrl.regime_norm as rn
from rulrl.regime_norm import (
    RegimeNormalizer,
    fit_regimes,
    load_normalizer,
    normalize,
    save_normalizer,
)
from rulrl.trajdata import (
    SynthConfig,
    Trajectory,
    regime_op_centers,
    synth_generate,
    synth_generate_with_truth,
)

from conftest import make_traj


def traj_with_ops(ops, sensors, unit_id=1):
    ops = np.asarray(ops, dtype=float)
    n = len(ops)
    return Trajectory(
        unit_id=unit_id,
        cycle_index=np.arange(1, n + 1),
        op_settings=ops,
        sensors=np.asarray(sensors, dtype=float),
        ends_in_failure=True,
    )


class TestFit:
    def test_k1_gives_global_means(self):
        trajs = [make_traj(10, unit_id=1, sensor_value=2.0), make_traj(4, unit_id=2, sensor_value=6.0)]
        norm = fit_regimes(trajs, k=1, seed=0)
        stacked = np.concatenate([t.sensors for t in trajs])
        assert np.allclose(norm.regime_sensor_means[0], stacked.mean(axis=0), rtol=1e-12)

    def test_two_points_two_regimes_exact(self):
        ops = [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]
        sensors = np.stack([np.full(21, 3.0), np.full(21, 7.0)])
        norm = fit_regimes([traj_with_ops(ops, sensors)], k=2, seed=0)
        order = np.argsort(norm.centroids[:, 0])
        assert np.array_equal(norm.centroids[order], np.array(ops))
        assert np.array_equal(norm.regime_sensor_means[order], sensors)

    def test_recovers_synthetic_regime_centers(self):
        cfg = SynthConfig(n_units=20, n_regimes=6, noise_scale=0.05, seed=4)
        trajs = synth_generate(cfg)
        norm = fit_regimes(trajs, k=6, seed=0)
        true_centers = regime_op_centers(6)
        # Match each true center to its nearest recovered centroid.
        matched = set()
        for center in true_centers:
            d = np.linalg.norm(norm.centroids - center, axis=1)
            j = int(np.argmin(d))
            assert d[j] < cfg.noise_scale
            matched.add(j)
        assert len(matched) == 6  # a bijection, not a collapsed fit

    def test_deterministic_given_seed(self):
        trajs = synth_generate(SynthConfig(n_units=5, seed=9))
        a = fit_regimes(trajs, k=6, seed=3)
        b = fit_regimes(trajs, k=6, seed=3)
        assert np.array_equal(a.centroids, b.centroids)
        assert np.array_equal(a.regime_sensor_means, b.regime_sensor_means)

    def test_fewer_distinct_settings_than_k(self):
        trajs = [make_traj(5)]  # all op settings identical
        with pytest.raises(ValueError, match="distinct"):
            fit_regimes(trajs, k=2, seed=0)

    def test_empty_regime_reseeded_from_farthest_point(self, monkeypatch):
        ops = np.array([[0.0, 0, 0], [0.1, 0, 0], [5.0, 0, 0], [5.1, 0, 0], [9.0, 0, 0]])
        sensors = np.ones((5, 21))
        # Duplicate seeds leave regime 1 empty on the first assignment.
        rigged = np.array([ops[0], ops[0], ops[4]])
        monkeypatch.setattr(rn, "_kmeans_pp_init", lambda points, k, rng: rigged.copy())
        norm = fit_regimes([traj_with_ops(ops, sensors)], k=3, seed=0)
        counts = np.bincount(norm.assign(ops), minlength=3)
        assert (counts > 0).all()

    def test_near_zero_sensor_mean_rejected(self):
        trajs = [make_traj(5, sensor_value=0.0)]
        with pytest.raises(ValueError, match="sensor"):
            fit_regimes(trajs, k=1, seed=0)


class TestNormalize:
    def test_single_member_regime_fixed_point(self):
        ops = [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]
        sensors = np.stack([np.full(21, 3.0), np.full(21, 7.0)])
        traj = traj_with_ops(ops, sensors)
        norm = fit_regimes([traj], k=2, seed=0)
        out = normalize(traj, norm)
        assert np.array_equal(out.sensors, np.ones((2, 21)))

    def test_constant_sensor_everywhere_is_one(self):
        # Dyadic constant keeps the mean exact, so the ratio is exactly 1.0.
        trajs = [make_traj(8, unit_id=1, sensor_value=2.0, op=[0, 0, 0]),
                 make_traj(8, unit_id=2, sensor_value=2.0, op=[1, 1, 1])]
        norm = fit_regimes(trajs, k=2, seed=0)
        for traj in trajs:
            assert np.array_equal(normalize(traj, norm).sensors, np.ones((8, 21)))

    def test_multiplicative_drift_closed_form(self):
        # sensor = offset * (1 + 0.001*k); oracle recomputes per-regime means
        # from the generator's true regime labels.
        cfg = SynthConfig(
            n_units=4,
            n_regimes=3,
            noise_scale=0.0,
            wear_rate_range=(0.001, 0.001),
            failure_threshold=0.9,
            initial_health_range=(1.0, 1.0),
            seed=8,
        )
        trajs, truths = synth_generate_with_truth(cfg)
        norm = fit_regimes(trajs, k=3, seed=0)
        drift = [1.0 + 0.001 * np.arange(1, len(t) + 1) for t in trajs]
        regime_mean_drift = np.zeros(3)
        for r in range(3):
            members = np.concatenate(
                [d[tr.regimes == r] for d, tr in zip(drift, truths)]
            )
            regime_mean_drift[r] = members.mean()
        for traj, truth, d in zip(trajs, truths, drift):
            expected = d[:, None] / regime_mean_drift[truth.regimes][:, None]
            out = normalize(traj, norm)
            assert np.allclose(out.sensors, np.tile(expected, (1, 21)), rtol=1e-9)
            # Raw series is regime-dominated; normalized tracks the drift.
            assert out.sensors[:, 0].std() < 0.05 * traj.sensors[:, 0].std()

    def test_preserves_everything_but_sensors(self):
        traj = synth_generate(SynthConfig(n_units=1, seed=1))[0]
        norm = fit_regimes([traj], k=2, seed=0)
        out = normalize(traj, norm)
        assert len(out) == len(traj)
        assert np.array_equal(out.cycle_index, traj.cycle_index)
        assert np.array_equal(out.op_settings, traj.op_settings)
        assert out.ends_in_failure == traj.ends_in_failure

    def test_tie_breaks_to_lowest_regime(self):
        norm = RegimeNormalizer(
            centroids=np.array([[0.0, 0, 0], [2.0, 0, 0]]),
            regime_sensor_means=np.vstack([np.full(21, 5.0), np.full(21, 10.0)]),
        )
        assert norm.assign(np.array([[1.0, 0.0, 0.0]]))[0] == 0

    def test_every_cycle_gets_exactly_one_regime(self):
        trajs = synth_generate(SynthConfig(n_units=3, seed=6))
        norm = fit_regimes(trajs, k=6, seed=0)
        for traj in trajs:
            regimes = norm.assign(traj.op_settings)
            assert regimes.shape == (len(traj),)
            assert ((regimes >= 0) & (regimes < 6)).all()

    def test_near_zero_mean_guard_names_sensor_and_regime(self):
        means = np.full((1, 21), 5.0)
        means[0, 7] = 1e-12
        norm = RegimeNormalizer(centroids=np.zeros((1, 3)), regime_sensor_means=means)
        with pytest.raises(ValueError, match=r"sensor 7 in regime 0"):
            normalize(make_traj(3), norm)

    def test_across_regime_variance_collapse(self):
        # Same wear everywhere: at a fixed cycle all units share one health
        # level, so sensor spread across units is purely regime-driven.
        cfg = SynthConfig(
            n_units=120,
            n_regimes=6,
            noise_scale=0.0,
            wear_rate_range=(0.01, 0.01),
            initial_health_range=(1.0, 1.0),
            seed=13,
        )
        trajs = synth_generate(cfg)
        norm = fit_regimes(trajs, k=6, seed=0)
        normalized = [normalize(t, norm) for t in trajs]
        k = 40  # mid-life cycle present in every unit
        raw = np.stack([t.sensors[k] for t in trajs])
        cooked = np.stack([t.sensors[k] for t in normalized])
        raw_var = raw.var(axis=0)
        cooked_var = cooked.var(axis=0)
        assert (cooked_var < 0.01 * raw_var).all()


class TestPersistence:
    def test_roundtrip_exact(self):
        trajs = synth_generate(SynthConfig(n_units=3, seed=21))
        norm = fit_regimes(trajs, k=4, seed=7)
        buf = io.StringIO()
        save_normalizer(norm, buf)
        buf.seek(0)
        again = load_normalizer(buf)
        assert np.array_equal(again.centroids, norm.centroids)
        assert np.array_equal(again.regime_sensor_means, norm.regime_sensor_means)

    def test_file_roundtrip(self, tmp_path):
        trajs = synth_generate(SynthConfig(n_units=2, seed=3))
        norm = fit_regimes(trajs, k=2, seed=0)
        path = tmp_path / "norm.txt"
        save_normalizer(norm, path)
        again = load_normalizer(path)
        assert np.array_equal(again.centroids, norm.centroids)

    def test_malformed_file(self):
        with pytest.raises(ValueError, match="lines"):
            load_normalizer(io.StringIO("2\n1 2 3\n"))

    def test_coinciding_centroids_rejected(self):
        with pytest.raises(ValueError, match="coincide"):
            RegimeNormalizer(
                centroids=np.zeros((2, 3)), regime_sensor_means=np.ones((2, 21))
            )
