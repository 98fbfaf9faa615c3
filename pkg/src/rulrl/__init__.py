"""Return-conditioned maintenance decision policies from run-to-failure logs.

Pipeline: load or synthesize multi-regime sensor trajectories, normalize out
operating-regime effects, inject random repairs and reward labels, train a
return-conditioned continue/repair classifier (optionally fed by a learned
remaining-useful-life regressor), then sweep the conditioning target against
no-action and repair-at-threshold baselines in a replay environment.
"""

from .labeling import (
    Action,
    CostModel,
    DatasetMeta,
    Episode,
    Terminal,
    TransitionSample,
    assign_rewards,
    build_training_set,
    build_windows,
    compute_rtg,
    inject_repairs,
    label_rul,
    load_dataset,
    save_dataset,
)
from .neural import MlpModel, TrainConfig, forward, grad_check, mlp_init, r_squared, train
from .policy import PolicyModel, load_policy, save_policy, select_action, train_policy
from .regime_norm import RegimeNormalizer, fit_regimes, load_normalizer, normalize, save_normalizer
from .rul_estimator import RulModel, load_rul_model, predict_rul, save_rul_model, train_rul
from .simenv import (
    EstimatedRul,
    EvalRecord,
    NoAction,
    OracleRul,
    Policy,
    RolloutOutcome,
    evaluate,
    outcomes_to_csv,
    rollout,
)
from .sweep_report import SweepCurve, correlation, emit_csv, emit_svg, sweep
from .trajdata import (
    CycleRecord,
    SynthConfig,
    Trajectory,
    parse_cmapss,
    split_train_test,
    synth_generate,
    synth_generate_with_truth,
    write_cmapss,
)

__version__ = "0.1.0"
