"""Return-conditioned action classifier.

Maps (observation window, previous-action window, return-to-go window,
optional RUL) to continue/repair. At decision time the return channel is
filled with the caller's target return, so the same network serves any
conditioning level.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import neural
from .labeling import Action, TransitionSample
from .trajdata import N_SENSORS

POLICY_HIDDEN = 100


@dataclass
class PolicyModel:
    """Trained classifier plus the feature layout it was trained with.

    ``layout`` lists (block name, width) in feature order; ``rtg_min`` and
    ``rtg_max`` record the training support of the return-to-go channel
    (used for sweep grids and as the conditioning floor).
    """

    net: neural.MlpModel
    window: int
    horizon: int
    uses_rul: bool
    layout: list[tuple[str, int]]
    rtg_min: float
    rtg_max: float
    data_fingerprint: str = ""

    def __post_init__(self):
        expected = self.window * N_SENSORS + self.window * 2 + self.window + (
            1 if self.uses_rul else 0
        )
        if self.net.n_inputs != expected:
            raise ValueError(f"net expects {self.net.n_inputs} inputs, layout implies {expected}")
        if [w for _, w in self.layout] != self._block_widths():
            raise ValueError("layout widths disagree with window/uses_rul")

    def _block_widths(self) -> list[int]:
        widths = [self.window * N_SENSORS, self.window * 2, self.window]
        if self.uses_rul:
            widths.append(1)
        return widths


def _default_layout(window: int, uses_rul: bool) -> list[tuple[str, int]]:
    layout = [("obs", window * N_SENSORS), ("action", window * 2), ("rtg", window)]
    if uses_rul:
        layout.append(("rul", 1))
    return layout


def assemble_features(
    obs_window: np.ndarray,
    action_window: np.ndarray,
    rtg_window: np.ndarray,
    rul: float | None,
    uses_rul: bool,
) -> np.ndarray:
    obs_window = np.asarray(obs_window, dtype=float)
    action_window = np.asarray(action_window, dtype=float)
    rtg_window = np.asarray(rtg_window, dtype=float)
    t = len(rtg_window)
    if obs_window.shape != (t, N_SENSORS):
        raise ValueError(f"obs_window must be ({t}, {N_SENSORS}), got {obs_window.shape}")
    if action_window.shape != (t, 2):
        raise ValueError(f"action_window must be ({t}, 2), got {action_window.shape}")
    parts = [obs_window.ravel(), action_window.ravel(), rtg_window]
    if uses_rul:
        if rul is None:
            raise ValueError("policy expects a rul input")
        parts.append(np.array([float(rul)]))
    return np.concatenate(parts)


def _sample_features(sample: TransitionSample, uses_rul: bool) -> np.ndarray:
    return assemble_features(
        sample.obs_window, sample.action_window, sample.rtg_window, sample.rul, uses_rul
    )


def train_policy(
    dataset: list[TransitionSample],
    config: neural.TrainConfig,
    use_rul: bool | None = None,
    horizon: int = -1,
    hidden: int = POLICY_HIDDEN,
) -> PolicyModel:
    """Cross-entropy training with inverse-frequency class weights.

    Repairs are rare under random injection, so each class is weighted by
    n_total / (2 * n_class); uniform duplication of the dataset leaves the
    weighting unchanged. Deterministic given the config seed.
    """
    if not dataset:
        raise ValueError("empty dataset")
    if use_rul is None:
        use_rul = dataset[0].rul is not None
    window = len(dataset[0].rtg_window)
    labels = np.array([int(s.label) for s in dataset])
    n_repair = int((labels == Action.REPAIR).sum())
    n_continue = len(labels) - n_repair
    if n_repair == 0:
        raise ValueError("no repair examples; raise repair_prob")
    if n_continue == 0:
        raise ValueError("no continue examples; lower repair_prob")
    class_weight = {
        int(Action.CONTINUE): len(labels) / (2.0 * n_continue),
        int(Action.REPAIR): len(labels) / (2.0 * n_repair),
    }
    weights = np.array([class_weight[int(v)] for v in labels])
    x = np.stack([_sample_features(s, use_rul) for s in dataset])
    rtg_all = np.stack([s.rtg_window for s in dataset])
    net = neural.mlp_init([x.shape[1], hidden, 2], neural.HEAD_LOGITS, config.seed)
    net, _ = neural.train(
        net, list(zip(x, labels)), config, neural.LOSS_CROSS_ENTROPY, sample_weights=weights
    )
    digest = hashlib.sha256()
    digest.update(x.tobytes())
    digest.update(labels.tobytes())
    return PolicyModel(
        net=net,
        window=window,
        horizon=horizon,
        uses_rul=use_rul,
        layout=_default_layout(window, use_rul),
        rtg_min=float(rtg_all.min()),
        rtg_max=float(rtg_all.max()),
        data_fingerprint=digest.hexdigest(),
    )


def action_probabilities(
    policy: PolicyModel,
    obs_window: np.ndarray,
    action_window: np.ndarray,
    rtg_window: np.ndarray,
    rul: float | None = None,
) -> np.ndarray:
    """Class probabilities for an explicit return-to-go window."""
    rtg_window = np.asarray(rtg_window, dtype=float)
    if len(rtg_window) != policy.window:
        raise ValueError(f"rtg_window must have length {policy.window}")
    feats = assemble_features(obs_window, action_window, rtg_window, rul, policy.uses_rul)
    return neural.softmax(neural.predict(policy.net, feats))


def select_action(
    policy: PolicyModel,
    obs_window: np.ndarray,
    action_window: np.ndarray,
    target_return: float,
    rul: float | None = None,
) -> tuple[Action, np.ndarray]:
    """Pick continue/repair for a target return replicated across the window.

    Returns the argmax action and the softmax probabilities; exact ties go to
    CONTINUE (never trigger a repair on a coin flip).
    """
    rtg = np.full(policy.window, float(target_return))
    probs = action_probabilities(policy, obs_window, action_window, rtg, rul)
    action = Action.REPAIR if probs[Action.REPAIR] > probs[Action.CONTINUE] else Action.CONTINUE
    return action, probs


def save_policy(policy: PolicyModel, path) -> None:
    """Model in the neural text format plus a <path>.json layout sidecar."""
    path = str(path)
    neural.save_model(policy.net, path, extra={"role": "policy"})
    sidecar = {
        "window": policy.window,
        "horizon": policy.horizon,
        "uses_rul": policy.uses_rul,
        "layout": [[name, width] for name, width in policy.layout],
        "rtg_min": policy.rtg_min,
        "rtg_max": policy.rtg_max,
        "data_fingerprint": policy.data_fingerprint,
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_policy(path) -> PolicyModel:
    path = str(path)
    net, extra = neural.load_model(path)
    if extra.get("role") != "policy":
        raise ValueError("model file does not carry the policy role tag")
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    return PolicyModel(
        net=net,
        window=int(sidecar["window"]),
        horizon=int(sidecar["horizon"]),
        uses_rul=bool(sidecar["uses_rul"]),
        layout=[(name, int(width)) for name, width in sidecar["layout"]],
        rtg_min=float(sidecar["rtg_min"]),
        rtg_max=float(sidecar["rtg_max"]),
        data_fingerprint=sidecar.get("data_fingerprint", ""),
    )
