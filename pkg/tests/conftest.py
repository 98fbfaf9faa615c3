"""Shared fixtures: hand-built trajectories and the desk-scale policy setup."""

import numpy as np
import pytest

from rulrl.labeling import CostModel, build_training_set
from rulrl.neural import TrainConfig
from rulrl.policy import train_policy
from rulrl.regime_norm import fit_regimes, normalize
from rulrl.trajdata import N_SENSORS, SynthConfig, Trajectory, synth_generate


def make_traj(length, unit_id=1, ends_in_failure=True, sensor_value=2.0, op=None, seed=None):
    """Minimal valid trajectory; sensors constant unless a seed asks for noise."""
    if seed is None:
        sensors = np.full((length, N_SENSORS), float(sensor_value))
    else:
        rng = np.random.default_rng(seed)
        sensors = sensor_value + rng.normal(0, 0.1, size=(length, N_SENSORS))
    ops = np.tile(np.zeros(3) if op is None else np.asarray(op, dtype=float), (length, 1))
    return Trajectory(
        unit_id=unit_id,
        cycle_index=np.arange(1, length + 1),
        op_settings=ops,
        sensors=sensors,
        ends_in_failure=ends_in_failure,
    )


# Desk-scale fleet: lifetimes ~79..95 so a fixed repair time can sit safely
# inside every unit's lead-time margin.
DESK_SYNTH = dict(
    n_regimes=6,
    wear_rate_range=(0.0105, 0.0125),
    noise_scale=0.02,
    failure_threshold=0.02,
    initial_health_range=(1.0, 1.02),
)
DESK_WINDOW = 10
DESK_HORIZON = 150


@pytest.fixture(scope="session")
def desk_policy_setup():
    """200 train / 20 test failing units, normalized, with a trained policy.

    Built once per session; used by the policy-quality and conditioning
    acceptance criteria and by sweep structure tests.
    """
    import time

    t0 = time.monotonic()
    cfg = SynthConfig(n_units=220, seed=11, **DESK_SYNTH)
    fleet = synth_generate(cfg)
    norm = fit_regimes(fleet[:200], k=6, seed=1)
    train = [normalize(t, norm) for t in fleet[:200]]
    test = [normalize(t, norm) for t in fleet[200:]]
    cost = CostModel(seed=5)
    samples, meta = build_training_set(
        train,
        cost,
        repair_prob=0.02,
        window=DESK_WINDOW,
        horizon=DESK_HORIZON,
        injection_seed=3,
    )
    policy = train_policy(
        samples, TrainConfig(epochs=40, seed=2), horizon=DESK_HORIZON
    )
    return {
        "train": train,
        "test": test,
        "policy": policy,
        "cost_train": cost,
        "cost_eval": CostModel.zero_jitter(seed=5),
        "meta": meta,
        "build_seconds": time.monotonic() - t0,
    }
