"""Remaining-useful-life regression on windowed normalized sensors.

A feed-forward regressor over flattened T-cycle sensor windows, trained
against the true cycles-to-failure of run-to-failure trajectories.
Predictions are clamped to be nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import neural
from .labeling import label_rul, left_pad_window
from .trajdata import N_SENSORS, Trajectory

RUL_HIDDEN = 100


@dataclass
class RulModel:
    """Windowed RUL regressor: window length plus the trained net."""

    window_length: int
    net: neural.MlpModel

    def __post_init__(self):
        if self.net.n_inputs != self.window_length * N_SENSORS:
            raise ValueError("net input size does not match window_length")
        if self.net.output_head != neural.HEAD_LINEAR:
            raise ValueError("RUL net must have a linear head")


def _window_features(traj: Trajectory, window: int) -> np.ndarray:
    return np.stack(
        [left_pad_window(traj.sensors, k, window).ravel() for k in range(len(traj))]
    )


def train_rul(
    train: list[Trajectory],
    window: int,
    cap: float | None,
    config: neural.TrainConfig,
    hidden: int = RUL_HIDDEN,
) -> RulModel:
    """Fit the regressor on every cycle of every failing trajectory."""
    if not train:
        raise ValueError("no trajectories to train on")
    for traj in train:
        if not traj.ends_in_failure:
            raise ValueError(f"unit {traj.unit_id}: RUL training needs failing trajectories")
    xs, ys = [], []
    for traj in train:
        xs.append(_window_features(traj, window))
        ys.append(label_rul(traj, cap))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    net = neural.mlp_init([window * N_SENSORS, hidden, 1], neural.HEAD_LINEAR, config.seed)
    net, _ = neural.train(net, list(zip(x, y)), config, neural.LOSS_SQUARED_ERROR)
    return RulModel(window_length=window, net=net)


def predict_rul(model: RulModel, traj: Trajectory) -> np.ndarray:
    """One nonnegative RUL estimate per cycle, using only past observations."""
    feats = _window_features(traj, model.window_length)
    raw = neural.predict(model.net, feats)[:, 0]
    return np.maximum(raw, 0.0)


def predict_rul_at(model: RulModel, sensor_history: np.ndarray) -> float:
    """RUL estimate at the newest cycle of a partial sensor history."""
    history = np.atleast_2d(np.asarray(sensor_history, dtype=float))
    feats = left_pad_window(history, len(history) - 1, model.window_length).ravel()
    raw = float(neural.predict(model.net, feats)[0])
    return max(raw, 0.0)


def rul_r_squared(model: RulModel, trajs: list[Trajectory], cap: float | None = None) -> float:
    """R^2 of predictions against true RUL pooled over all cycles."""
    preds, targets = [], []
    for traj in trajs:
        preds.append(predict_rul(model, traj))
        targets.append(label_rul(traj, cap))
    return neural.r_squared(np.concatenate(preds), np.concatenate(targets))


def save_rul_model(model: RulModel, path) -> None:
    neural.save_model(
        model.net, path, extra={"role": "rul", "window_length": str(model.window_length)}
    )


def load_rul_model(path) -> RulModel:
    net, extra = neural.load_model(path)
    if extra.get("role") != "rul":
        raise ValueError("model file does not carry the rul role tag")
    return RulModel(window_length=int(extra["window_length"]), net=net)
