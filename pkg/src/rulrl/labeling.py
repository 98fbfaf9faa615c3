"""Turn run-to-failure trajectories into an action-labeled training set.

Random repairs are injected into the logs (one decision episode per source
trajectory), each step gets a profit/cost reward, returns-to-go are summed
over a fixed horizon, and fixed-length history windows become supervised
training samples for the action classifier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .trajdata import N_SENSORS, Trajectory


class Action(IntEnum):
    CONTINUE = 0
    REPAIR = 1


class Terminal(Enum):
    FAILURE = "failure"
    REPAIRED = "repaired"
    TRUNCATED_END = "truncated_end"
    LATE_REPAIR_FAILURE = "late_repair_failure"  # rollout-only outcome


@dataclass
class CostModel:
    """Stochastic costs: failure 250±50, repair 25±5, profit 1±0.2 per cycle.

    ``lead_time`` is the number of cycles before failure by which a repair
    must be issued to succeed. All jitter draws come from a stream seeded by
    (seed, unit id), so datasets are reproducible and rules can be compared
    on common cost realizations.
    """

    failure_base: float = 250.0
    failure_jitter: float = 50.0
    repair_base: float = 25.0
    repair_jitter: float = 5.0
    profit_base: float = 1.0
    profit_jitter: float = 0.2
    lead_time: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("failure", "repair", "profit"):
            base = getattr(self, f"{name}_base")
            jitter = getattr(self, f"{name}_jitter")
            if base <= 0:
                raise ValueError(f"{name}_base must be positive")
            if jitter < 0 or jitter >= base:
                raise ValueError(f"{name}_jitter must be in [0, {name}_base)")
        if self.lead_time < 0:
            raise ValueError("lead_time must be >= 0")

    @classmethod
    def zero_jitter(cls, seed: int = 0, **kwargs) -> "CostModel":
        """Deterministic variant used by exact-accounting tests."""
        return cls(
            failure_jitter=0.0, repair_jitter=0.0, profit_jitter=0.0, seed=seed, **kwargs
        )

    def to_dict(self) -> dict:
        return {
            "failure_base": self.failure_base,
            "failure_jitter": self.failure_jitter,
            "repair_base": self.repair_base,
            "repair_jitter": self.repair_jitter,
            "profit_base": self.profit_base,
            "profit_jitter": self.profit_jitter,
            "lead_time": self.lead_time,
            "seed": self.seed,
        }


@dataclass(eq=False)
class Episode:
    """One decision sequence: per-step observations, actions, and rewards.

    At most one REPAIR action is allowed and only at the final step. Rewards
    stay None until assign_rewards fills them.
    """

    unit_id: int
    observations: np.ndarray  # (n, 21) normalized sensors
    actions: np.ndarray       # (n,) Action values
    terminal: Terminal
    rewards: np.ndarray | None = None

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=float)
        self.actions = np.asarray(self.actions, dtype=np.int8)
        n = len(self.actions)
        if n == 0:
            raise ValueError("episode must have at least one step")
        if self.observations.shape != (n, N_SENSORS):
            raise ValueError("observations shape does not match actions")
        if self.terminal not in (Terminal.FAILURE, Terminal.REPAIRED, Terminal.TRUNCATED_END):
            raise ValueError(f"invalid episode terminal {self.terminal}")
        repairs = np.flatnonzero(self.actions == Action.REPAIR)
        if len(repairs) > 1 or (len(repairs) == 1 and repairs[0] != n - 1):
            raise ValueError("at most one REPAIR action is allowed, and only at the final step")
        if self.terminal == Terminal.REPAIRED and (n == 0 or self.actions[-1] != Action.REPAIR):
            raise ValueError("REPAIRED episode must end with a REPAIR action")
        if self.terminal != Terminal.REPAIRED and len(repairs):
            raise ValueError(f"{self.terminal} episode cannot contain a REPAIR action")
        if self.rewards is not None:
            self.rewards = np.asarray(self.rewards, dtype=float)
            if self.rewards.shape != (n,):
                raise ValueError("rewards shape does not match actions")

    def __len__(self):
        return len(self.actions)


@dataclass(eq=False)
class TransitionSample:
    """One training example: T-step history windows plus the target action."""

    obs_window: np.ndarray     # (T, 21)
    action_window: np.ndarray  # (T, 2) one-hot of the T previous actions
    rtg_window: np.ndarray     # (T,) horizon-limited returns-to-go
    label: Action
    rul: float | None = None

    def __post_init__(self):
        self.obs_window = np.asarray(self.obs_window, dtype=float)
        self.action_window = np.asarray(self.action_window, dtype=float)
        self.rtg_window = np.asarray(self.rtg_window, dtype=float)
        t = len(self.rtg_window)
        if self.obs_window.shape != (t, N_SENSORS) or self.action_window.shape != (t, 2):
            raise ValueError("window shapes disagree")
        if not np.isfinite(self.rtg_window).all():
            raise ValueError("non-finite return-to-go value")


def inject_repairs(traj: Trajectory, repair_prob: float, rng_seed: int) -> list[Episode]:
    """Walk the trajectory, firing a repair with fixed per-cycle probability.

    A repair ends the episode (terminal REPAIRED) and the rest of the
    trajectory is discarded: a repaired unit is as-new, and the fleet's other
    trajectories stand in for its post-repair life. Without a repair the
    episode runs to the end of the log (FAILURE or TRUNCATED_END).
    Deterministic given (rng_seed, unit id).
    """
    if not (0.0 <= repair_prob <= 1.0):
        raise ValueError(f"repair_prob must be in [0, 1], got {repair_prob}")
    rng = np.random.default_rng([rng_seed, traj.unit_id])
    n = len(traj)
    end = n
    terminal = Terminal.FAILURE if traj.ends_in_failure else Terminal.TRUNCATED_END
    actions = None
    if repair_prob > 0.0:
        fires = rng.random(n) < repair_prob
        hit = np.flatnonzero(fires)
        if len(hit):
            end = int(hit[0]) + 1
            terminal = Terminal.REPAIRED
            actions = np.full(end, Action.CONTINUE, dtype=np.int8)
            actions[-1] = Action.REPAIR
    if actions is None:
        actions = np.full(end, Action.CONTINUE, dtype=np.int8)
    return [
        Episode(
            unit_id=traj.unit_id,
            observations=traj.sensors[:end],
            actions=actions,
            terminal=terminal,
        )
    ]


def assign_rewards(episode: Episode, cost: CostModel) -> Episode:
    """Fill per-step rewards from the cost model's seeded stream.

    Every operated cycle (including the final repair/failure cycle) earns the
    per-cycle profit draw; a final REPAIR subtracts the repair cost from the
    last step, a FAILURE terminal subtracts the failure cost, and a truncated
    end adds nothing. With all jitters zero the rewards are exact.
    """
    if episode.rewards is not None:
        raise ValueError("episode already has rewards")
    rng = np.random.default_rng([cost.seed, episode.unit_id])
    n = len(episode)
    rewards = cost.profit_base + rng.uniform(-cost.profit_jitter, cost.profit_jitter, n)
    if episode.terminal == Terminal.REPAIRED:
        rewards[-1] -= cost.repair_base + rng.uniform(-cost.repair_jitter, cost.repair_jitter)
    elif episode.terminal == Terminal.FAILURE:
        rewards[-1] -= cost.failure_base + rng.uniform(-cost.failure_jitter, cost.failure_jitter)
    return Episode(
        unit_id=episode.unit_id,
        observations=episode.observations,
        actions=episode.actions,
        terminal=episode.terminal,
        rewards=rewards,
    )


def compute_rtg(rewards: np.ndarray, horizon: int) -> np.ndarray:
    """Return-to-go per step: out[k] = sum of rewards[k ..= min(k+H, end)].

    Accumulates one offset at a time so the result is bit-identical to a
    left-to-right double loop.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    rewards = np.asarray(rewards, dtype=float)
    n = len(rewards)
    out = rewards.copy()
    for off in range(1, min(horizon, n - 1) + 1):
        out[: n - off] += rewards[off:]
    return out


def label_rul(traj: Trajectory, cap: float | None = None) -> np.ndarray:
    """Remaining useful life per cycle: cycles left until the failure cycle."""
    if not traj.ends_in_failure:
        raise ValueError(f"unit {traj.unit_id}: RUL is undefined for a non-failing trajectory")
    rul = (traj.cycle_index[-1] - traj.cycle_index).astype(float)
    if cap is not None:
        if cap < 0:
            raise ValueError("cap must be >= 0")
        rul = np.minimum(rul, float(cap))
    return rul


def left_pad_window(values: np.ndarray, k: int, t: int) -> np.ndarray:
    """Rows k-t+1..k of ``values``, left-padded by repeating row 0."""
    start = k - t + 1
    if start >= 0:
        return values[start : k + 1]
    pad = np.repeat(values[0:1], -start, axis=0)
    return np.concatenate([pad, values[: k + 1]], axis=0)


def _one_hot_actions(actions: np.ndarray) -> np.ndarray:
    out = np.zeros((len(actions), 2))
    out[np.arange(len(actions)), actions] = 1.0
    return out


def build_windows(
    episode: Episode,
    rtg: np.ndarray,
    rul: np.ndarray | None,
    window: int,
) -> list[TransitionSample]:
    """One TransitionSample per episode step.

    Observation and return windows cover steps k-T+1..k (left-padded by
    repeating the first entry); the action window covers k-T..k-1 (padded
    with CONTINUE) since the step-k action is the prediction target.
    """
    if window < 1:
        raise ValueError("window length must be >= 1")
    n = len(episode)
    rtg = np.asarray(rtg, dtype=float)
    if len(rtg) != n:
        raise ValueError(f"rtg length {len(rtg)} != episode length {n}")
    if rul is not None:
        rul = np.asarray(rul, dtype=float)
        if len(rul) != n:
            raise ValueError(f"rul length {len(rul)} != episode length {n}")
    onehot = _one_hot_actions(episode.actions)
    continue_row = np.array([[1.0, 0.0]])
    # Previous-action sequence: CONTINUE stands in for the pre-episode step.
    prev = np.concatenate([continue_row, onehot[:-1]], axis=0)
    rtg_col = rtg[:, None]
    samples = []
    for k in range(n):
        samples.append(
            TransitionSample(
                obs_window=left_pad_window(episode.observations, k, window),
                action_window=left_pad_window(prev, k, window),
                rtg_window=left_pad_window(rtg_col, k, window)[:, 0],
                label=Action(int(episode.actions[k])),
                rul=None if rul is None else float(rul[k]),
            )
        )
    return samples


@dataclass
class DatasetMeta:
    """Sidecar metadata persisted next to a training-set table."""

    window: int
    horizon: int
    n_features: int
    has_rul: bool
    cost: dict
    repair_prob: float
    injection_seed: int
    n_samples: int
    n_repair: int
    rtg_min: float
    rtg_max: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetMeta":
        return cls(**d)


def build_training_set(
    trajectories: list[Trajectory],
    cost: CostModel,
    repair_prob: float,
    window: int,
    horizon: int,
    injection_seed: int,
    with_rul: bool = False,
    rul_cap: float | None = None,
) -> tuple[list[TransitionSample], DatasetMeta]:
    """Full labeling pipeline over normalized trajectories.

    Injects repairs, assigns rewards, computes returns-to-go, optionally
    attaches the true RUL (from the source trajectory's failure point), and
    windows everything into TransitionSamples.
    """
    samples: list[TransitionSample] = []
    rtg_lo, rtg_hi = np.inf, -np.inf
    for traj in trajectories:
        rul_full = label_rul(traj, rul_cap) if with_rul else None
        for episode in inject_repairs(traj, repair_prob, injection_seed):
            episode = assign_rewards(episode, cost)
            rtg = compute_rtg(episode.rewards, horizon)
            rtg_lo = min(rtg_lo, float(rtg.min()))
            rtg_hi = max(rtg_hi, float(rtg.max()))
            rul = None if rul_full is None else rul_full[: len(episode)]
            samples.extend(build_windows(episode, rtg, rul, window))
    if not samples:
        raise ValueError("no training samples produced")
    n_repair = sum(1 for s in samples if s.label == Action.REPAIR)
    meta = DatasetMeta(
        window=window,
        horizon=horizon,
        n_features=N_SENSORS,
        has_rul=with_rul,
        cost=cost.to_dict(),
        repair_prob=repair_prob,
        injection_seed=injection_seed,
        n_samples=len(samples),
        n_repair=n_repair,
        rtg_min=rtg_lo,
        rtg_max=rtg_hi,
    )
    return samples, meta


def save_dataset(samples: list[TransitionSample], meta: DatasetMeta, path) -> None:
    """Text table (one flattened sample per line) plus a JSON sidecar."""
    path = str(path)
    with open(path, "w") as fh:
        for s in samples:
            fields = (
                [f"{v:.17g}" for v in s.obs_window.ravel()]
                + [f"{v:.17g}" for v in s.action_window.ravel()]
                + [f"{v:.17g}" for v in s.rtg_window]
            )
            if meta.has_rul:
                fields.append(f"{s.rul:.17g}")
            fields.append(str(int(s.label)))
            fh.write(" ".join(fields) + "\n")
    with open(path + ".json", "w") as fh:
        json.dump(meta.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> tuple[list[TransitionSample], DatasetMeta]:
    path = str(path)
    with open(path + ".json") as fh:
        meta = DatasetMeta.from_dict(json.load(fh))
    t, d = meta.window, meta.n_features
    n_obs, n_act = t * d, t * 2
    expected = n_obs + n_act + t + (1 if meta.has_rul else 0) + 1
    samples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != expected:
                raise ValueError(f"line {lineno}: expected {expected} fields, got {len(fields)}")
            vals = np.array([float(v) for v in fields[:-1]])
            samples.append(
                TransitionSample(
                    obs_window=vals[:n_obs].reshape(t, d),
                    action_window=vals[n_obs : n_obs + n_act].reshape(t, 2),
                    rtg_window=vals[n_obs + n_act : n_obs + n_act + t],
                    rul=float(vals[-1]) if meta.has_rul else None,
                    label=Action(int(fields[-1])),
                )
            )
    return samples, meta
