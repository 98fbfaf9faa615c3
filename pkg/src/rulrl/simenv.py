"""Replay environment: profit accrual, repair lead time, terminal costs.

A rollout steps through one normalized trajectory, querying a decision rule
at every cycle except the last. Continuing accrues the per-cycle profit; a
repair ends the episode with the repair cost, unless it comes within
``lead_time`` cycles of the true failure, in which case the unit never
reaches the shop and pays the failure cost. Running a failing trajectory to
the end pays the failure cost; running a truncated one to the end pays
nothing. Jitter streams are keyed by (seed, unit, draw) so competing rules
see identical cost realizations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .labeling import Action, CostModel, Terminal, left_pad_window
from .policy import PolicyModel, action_probabilities
from .rul_estimator import RulModel, predict_rul
from .trajdata import Trajectory

CONDITION_CONSTANT = "constant"
CONDITION_DECREMENT = "decrement"


@dataclass(frozen=True)
class NoAction:
    """Never repair; run every unit to the end of its log."""


@dataclass(frozen=True)
class OracleRul:
    """Repair as soon as the true remaining life drops to the threshold."""

    threshold: float

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")


@dataclass(frozen=True)
class EstimatedRul:
    """Repair when the estimated remaining life drops to the threshold."""

    model: RulModel
    threshold: float

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")


@dataclass(frozen=True)
class Policy:
    """Query a trained policy conditioned on a target return.

    ``mode`` controls how the return channel is presented: "decrement"
    (default) feeds the running history target - realized-rewards-so-far,
    floored at the policy's training minimum; "constant" replicates the raw
    target at every window position.
    """

    model: PolicyModel
    target_return: float
    rul_model: RulModel | None = None
    mode: str = CONDITION_DECREMENT

    def __post_init__(self):
        if self.mode not in (CONDITION_CONSTANT, CONDITION_DECREMENT):
            raise ValueError(f"unknown conditioning mode {self.mode!r}")
        if self.model.uses_rul and self.rul_model is None:
            raise ValueError("policy was trained with a RUL input; supply rul_model")


DecisionRule = NoAction | OracleRul | EstimatedRul | Policy


@dataclass(frozen=True)
class ScheduledRepair:
    """Repair at a fixed operating cycle; test scaffolding for brute-force sweeps."""

    at_cycle: int

    def __post_init__(self):
        if self.at_cycle < 1:
            raise ValueError("at_cycle must be >= 1")


@dataclass
class RolloutOutcome:
    unit_id: int
    steps_operated: int
    terminal: Terminal
    total_return: float
    action_trace: np.ndarray

    def __post_init__(self):
        self.action_trace = np.asarray(self.action_trace, dtype=np.int8)
        if len(self.action_trace) != self.steps_operated:
            raise ValueError("action trace length must equal steps operated")


@dataclass
class EvalRecord:
    """Aggregate returns for one rule over trajectories x jitter draws."""

    rule: str
    target_return: float | None
    returns: np.ndarray | None
    mean: float
    std: float
    n_units: int
    n_draws: int
    outcomes: list[RolloutOutcome] = field(default_factory=list)

    @classmethod
    def from_returns(cls, rule, target_return, returns, n_units, n_draws, outcomes):
        returns = np.asarray(returns, dtype=float)
        return cls(
            rule=rule,
            target_return=target_return,
            returns=returns,
            mean=float(returns.mean()),
            std=float(returns.std()),
            n_units=n_units,
            n_draws=n_draws,
            outcomes=outcomes,
        )


def describe_rule(rule) -> str:
    if isinstance(rule, NoAction):
        return "no_action"
    if isinstance(rule, OracleRul):
        return f"oracle_rul({rule.threshold:g})"
    if isinstance(rule, EstimatedRul):
        return f"estimated_rul({rule.threshold:g})"
    if isinstance(rule, Policy):
        suffix = "+rul" if rule.model.uses_rul else ""
        return f"policy{suffix}[{rule.mode}]"
    if isinstance(rule, ScheduledRepair):
        return f"scheduled_repair({rule.at_cycle})"
    return type(rule).__name__


def _policy_decider(rule: Policy, traj: Trajectory, profits: np.ndarray):
    """Pre-computes per-cycle inputs and returns a decide(j) closure."""
    model = rule.model
    window = model.window
    rul_estimates = None
    if model.uses_rul:
        rul_estimates = predict_rul(rule.rul_model, traj)
    continue_row = np.array([[1.0, 0.0]])
    action_flat = np.repeat(continue_row, window, axis=0)
    floor = model.rtg_min
    if rule.mode == CONDITION_DECREMENT:
        # Conditioning history: target minus realized rewards before each step.
        cum_before = np.concatenate([[0.0], np.cumsum(profits[:-1])])
        rtg_hist = np.maximum(rule.target_return - cum_before, floor)[:, None]
    else:
        rtg_hist = np.full((len(traj), 1), float(rule.target_return))

    def decide(j: int) -> Action:
        obs_window = left_pad_window(traj.sensors, j, window)
        rtg_window = left_pad_window(rtg_hist, j, window)[:, 0]
        rul = None if rul_estimates is None else float(rul_estimates[j])
        probs = action_probabilities(model, obs_window, action_flat, rtg_window, rul)
        return Action.REPAIR if probs[Action.REPAIR] > probs[Action.CONTINUE] else Action.CONTINUE

    return decide


def rollout(traj: Trajectory, rule, cost: CostModel, draw: int = 0) -> RolloutOutcome:
    """Run one unit under a decision rule; deterministic given (cost.seed, unit, draw)."""
    n = len(traj)
    rng = np.random.default_rng([cost.seed, traj.unit_id, draw])
    # Fixed draw order gives common random numbers across rules.
    profits = cost.profit_base + rng.uniform(-cost.profit_jitter, cost.profit_jitter, n)
    failure_cost = cost.failure_base + rng.uniform(-cost.failure_jitter, cost.failure_jitter)
    repair_cost = cost.repair_base + rng.uniform(-cost.repair_jitter, cost.repair_jitter)

    if isinstance(rule, OracleRul):
        if not traj.ends_in_failure:
            raise ValueError("OracleRul needs the true failure point (ends_in_failure)")
        decide = lambda j: (
            Action.REPAIR if (n - 1 - j) <= rule.threshold else Action.CONTINUE
        )
    elif isinstance(rule, EstimatedRul):
        estimates = predict_rul(rule.model, traj)
        decide = lambda j: Action.REPAIR if estimates[j] <= rule.threshold else Action.CONTINUE
    elif isinstance(rule, Policy):
        decide = _policy_decider(rule, traj, profits)
    elif isinstance(rule, ScheduledRepair):
        decide = lambda j: Action.REPAIR if j + 1 == rule.at_cycle else Action.CONTINUE
    elif isinstance(rule, NoAction):
        decide = lambda j: Action.CONTINUE
    else:
        raise TypeError(f"unknown decision rule {type(rule).__name__}")

    # The rule is queried on every cycle except the trajectory's last one.
    for j in range(n - 1):
        if decide(j) == Action.REPAIR:
            steps = j + 1
            trace = np.full(steps, Action.CONTINUE, dtype=np.int8)
            trace[-1] = Action.REPAIR
            remaining = n - steps
            if traj.ends_in_failure and remaining < cost.lead_time:
                # Issued too late: the unit fails before reaching the shop.
                return RolloutOutcome(
                    unit_id=traj.unit_id,
                    steps_operated=steps,
                    terminal=Terminal.LATE_REPAIR_FAILURE,
                    total_return=float(profits[:steps].sum() - failure_cost),
                    action_trace=trace,
                )
            return RolloutOutcome(
                unit_id=traj.unit_id,
                steps_operated=steps,
                terminal=Terminal.REPAIRED,
                total_return=float(profits[:steps].sum() - repair_cost),
                action_trace=trace,
            )
    trace = np.full(n, Action.CONTINUE, dtype=np.int8)
    if traj.ends_in_failure:
        return RolloutOutcome(
            unit_id=traj.unit_id,
            steps_operated=n,
            terminal=Terminal.FAILURE,
            total_return=float(profits.sum() - failure_cost),
            action_trace=trace,
        )
    return RolloutOutcome(
        unit_id=traj.unit_id,
        steps_operated=n,
        terminal=Terminal.TRUNCATED_END,
        total_return=float(profits.sum()),
        action_trace=trace,
    )


def evaluate(
    trajs: list[Trajectory],
    rule,
    cost: CostModel,
    n_jitter_draws: int = 1,
) -> EvalRecord:
    """Mean/std of rollout returns over trajectories x seeded jitter draws."""
    if not trajs:
        raise ValueError("no trajectories to evaluate")
    if n_jitter_draws < 1:
        raise ValueError("n_jitter_draws must be >= 1")
    outcomes = []
    returns = []
    for traj in trajs:
        for draw in range(n_jitter_draws):
            outcome = rollout(traj, rule, cost, draw)
            outcomes.append(outcome)
            returns.append(outcome.total_return)
    target = rule.target_return if isinstance(rule, Policy) else None
    return EvalRecord.from_returns(
        describe_rule(rule), target, returns, len(trajs), n_jitter_draws, outcomes
    )


def outcomes_to_csv(records: list[EvalRecord], path_or_file) -> None:
    """Per-rollout outcome table: unit, rule, target, terminal, steps, return."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh)
        writer.writerow(
            ["unit_id", "rule", "target_return", "terminal", "steps_operated", "total_return"]
        )
        for record in records:
            target = "" if record.target_return is None else repr(float(record.target_return))
            for outcome in record.outcomes:
                writer.writerow(
                    [
                        outcome.unit_id,
                        record.rule,
                        target,
                        outcome.terminal.value,
                        outcome.steps_operated,
                        repr(float(outcome.total_return)),
                    ]
                )
    finally:
        if own:
            fh.close()
