"""Command-line pipeline driver.

Wires the library end to end from a declarative JSON config: synthesize or
load trajectory files, fit the regime normalizer, build the labeled
training set, train the RUL regressor and the return-conditioned policy,
sweep conditioning targets against baselines, and render reports. Every
stage derives its seed from the master seed by hashing the stage name, so
reruns are byte-identical and stages cannot disturb each other's streams.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .labeling import CostModel, build_training_set, load_dataset, save_dataset
from .neural import TrainConfig
from .policy import load_policy, save_policy, train_policy
from .regime_norm import fit_regimes, load_normalizer, normalize, save_normalizer
from .rul_estimator import load_rul_model, save_rul_model, train_rul
from .simenv import EstimatedRul, NoAction, OracleRul, Policy, evaluate, outcomes_to_csv
from .sweep_report import curve_from_csv, default_grid, emit_csv, emit_svg, sweep
from .trajdata import SynthConfig, parse_cmapss, split_train_test, synth_generate, write_cmapss

DEFAULT_CONFIG: dict = {
    "out_dir": "rulrl_out",
    "master_seed": 0,
    "use_rul": True,
    "k_regimes": 6,
    "window": 10,
    "horizon": 150,
    "repair_prob": 0.02,
    "rul_cap": None,
    "synth": {
        "n_units": 26,
        "n_regimes": 6,
        "wear_rate_lo": 0.011,
        "wear_rate_hi": 0.0125,
        "noise_scale": 0.02,
        "failure_threshold": 0.02,
        "initial_health_lo": 1.0,
        "initial_health_hi": 1.02,
    },
    "data": None,  # {"train_path": ..., "test_path": ..., "test_ends_in_failure": false}
    "cost": {
        "failure_base": 250.0,
        "failure_jitter": 50.0,
        "repair_base": 25.0,
        "repair_jitter": 5.0,
        "profit_base": 1.0,
        "profit_jitter": 0.2,
        "lead_time": 10,
    },
    "rul_train": {"learning_rate": 0.001, "batch_size": 64, "epochs": 60},
    "policy_train": {"learning_rate": 0.001, "batch_size": 64, "epochs": 40},
    "sweep": {
        "grid_lo": None,
        "grid_hi": None,
        "grid_points": 25,
        "n_jitter_draws": 1,
        "mode": "decrement",
    },
}

_DATA_KEYS = {"train_path", "test_path", "test_ends_in_failure"}

FILES = {
    "raw_train": "raw_train.txt",
    "raw_test": "raw_test.txt",
    "normalizer": "normalizer.txt",
    "norm_train": "norm_train.txt",
    "norm_test": "norm_test.txt",
    "dataset": "dataset.txt",
    "rul_model": "rul_model.txt",
    "policy_model": "policy_model.txt",
    "curve_csv": "curve.csv",
    "curve_svg": "curve.svg",
    "outcomes_csv": "outcomes.csv",
    "manifest": "manifest.json",
}


class ConfigError(ValueError):
    pass


def _merge_checked(defaults: dict, overrides: dict, prefix: str = "") -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key: {path}")
        if key == "data" and value is not None:
            extra = set(value) - _DATA_KEYS
            if extra:
                raise ConfigError(f"unknown config key: data.{sorted(extra)[0]}")
            merged[key] = {"test_ends_in_failure": False, **value}
        elif isinstance(defaults[key], dict) and isinstance(value, dict):
            merged[key] = _merge_checked(defaults[key], value, prefix=f"{path}.")
        else:
            merged[key] = value
    return merged


def load_config(path: str | None, overrides: list[str] | None = None) -> dict:
    """Defaults merged with a JSON config file and --set key=value overrides."""
    user: dict = {}
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg = _merge_checked(DEFAULT_CONFIG, user)
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"unknown config key: {key}")
            node = node[part]
        leaf = parts[-1]
        if leaf not in node:
            raise ConfigError(f"unknown config key: {key}")
        node[leaf] = value
    return cfg


def derive_seed(master_seed: int, stage: str) -> int:
    """Stable per-stage seed: hash of 'master:stage', independent of stage order."""
    digest = hashlib.sha256(f"{master_seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


def _path(cfg: dict, name: str) -> str:
    return os.path.join(cfg["out_dir"], FILES[name])


def _cost_model(cfg: dict) -> CostModel:
    return CostModel(seed=derive_seed(cfg["master_seed"], "cost"), **cfg["cost"])


def _train_config(cfg: dict, section: str, stage: str) -> TrainConfig:
    return TrainConfig(seed=derive_seed(cfg["master_seed"], stage), **cfg[section])


def _synth_config(cfg: dict) -> SynthConfig:
    s = cfg["synth"]
    return SynthConfig(
        n_units=s["n_units"],
        n_regimes=s["n_regimes"],
        wear_rate_range=(s["wear_rate_lo"], s["wear_rate_hi"]),
        noise_scale=s["noise_scale"],
        failure_threshold=s["failure_threshold"],
        initial_health_range=(s["initial_health_lo"], s["initial_health_hi"]),
        seed=derive_seed(cfg["master_seed"], "synth"),
    )


def _load_trajs(path: str, ends_in_failure: bool):
    with open(path) as fh:
        return parse_cmapss(fh, ends_in_failure)


def _raw_inputs(cfg: dict) -> tuple[str, str, bool]:
    """(train path, test path, test ends_in_failure) from data settings or synth outputs."""
    if cfg["data"] is not None:
        d = cfg["data"]
        return d["train_path"], d["test_path"], bool(d["test_ends_in_failure"])
    return _path(cfg, "raw_train"), _path(cfg, "raw_test"), True


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(cfg: dict, produced: list[str]) -> None:
    manifest = {
        "version": __version__,
        "config": cfg,
        "seeds": {
            stage: derive_seed(cfg["master_seed"], stage)
            for stage in ("synth", "regimes", "injection", "cost", "rul_train", "policy_train")
        },
        "files": {os.path.basename(p): _sha256(p) for p in produced if os.path.exists(p)},
    }
    with open(_path(cfg, "manifest"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def stage_synth(cfg: dict) -> list[str]:
    if cfg["data"] is not None:
        raise ConfigError("config supplies data paths; nothing to synthesize")
    fleet = synth_generate(_synth_config(cfg))
    train, test = split_train_test(fleet)
    train_path, test_path = _path(cfg, "raw_train"), _path(cfg, "raw_test")
    write_cmapss(train, train_path)
    write_cmapss(test, test_path)
    print(f"synth: {len(train)} train / {len(test)} test units -> {cfg['out_dir']}")
    return [train_path, test_path]


def stage_normalize(cfg: dict) -> list[str]:
    train_path, test_path, test_failing = _raw_inputs(cfg)
    train = _load_trajs(train_path, True)
    test = _load_trajs(test_path, test_failing)
    norm = fit_regimes(train, cfg["k_regimes"], derive_seed(cfg["master_seed"], "regimes"))
    save_normalizer(norm, _path(cfg, "normalizer"))
    write_cmapss([normalize(t, norm) for t in train], _path(cfg, "norm_train"))
    write_cmapss([normalize(t, norm) for t in test], _path(cfg, "norm_test"))
    print(f"normalize: fitted {norm.k} regimes on {len(train)} units")
    return [_path(cfg, "normalizer"), _path(cfg, "norm_train"), _path(cfg, "norm_test")]


def stage_build_dataset(cfg: dict) -> list[str]:
    train = _load_trajs(_path(cfg, "norm_train"), True)
    samples, meta = build_training_set(
        train,
        _cost_model(cfg),
        repair_prob=cfg["repair_prob"],
        window=cfg["window"],
        horizon=cfg["horizon"],
        injection_seed=derive_seed(cfg["master_seed"], "injection"),
        with_rul=cfg["use_rul"],
        rul_cap=cfg["rul_cap"],
    )
    save_dataset(samples, meta, _path(cfg, "dataset"))
    print(f"build-dataset: {meta.n_samples} samples ({meta.n_repair} repairs)")
    return [_path(cfg, "dataset"), _path(cfg, "dataset") + ".json"]


def stage_train_rul(cfg: dict) -> list[str]:
    train = _load_trajs(_path(cfg, "norm_train"), True)
    model = train_rul(
        train,
        window=cfg["window"],
        cap=cfg["rul_cap"],
        config=_train_config(cfg, "rul_train", "rul_train"),
    )
    save_rul_model(model, _path(cfg, "rul_model"))
    print(f"train-rul: window {cfg['window']}, {len(train)} units")
    return [_path(cfg, "rul_model")]


def stage_train_policy(cfg: dict) -> list[str]:
    samples, meta = load_dataset(_path(cfg, "dataset"))
    model = train_policy(
        samples,
        _train_config(cfg, "policy_train", "policy_train"),
        use_rul=meta.has_rul,
        horizon=meta.horizon,
    )
    save_policy(model, _path(cfg, "policy_model"))
    print(f"train-policy: {meta.n_samples} samples, uses_rul={model.uses_rul}")
    return [_path(cfg, "policy_model"), _path(cfg, "policy_model") + ".json"]


def _load_rul_if_present(cfg: dict):
    path = _path(cfg, "rul_model")
    return load_rul_model(path) if os.path.exists(path) else None


def _test_set(cfg: dict):
    _, _, test_failing = _raw_inputs(cfg)
    return _load_trajs(_path(cfg, "norm_test"), test_failing)


def stage_sweep(cfg: dict) -> list[str]:
    policy = load_policy(_path(cfg, "policy_model"))
    test = _test_set(cfg)
    rul_model = _load_rul_if_present(cfg)
    if policy.uses_rul and rul_model is None:
        raise ConfigError("policy uses a RUL input but no rul_model.txt is present")
    s = cfg["sweep"]
    if s["grid_lo"] is not None and s["grid_hi"] is not None:
        grid = np.linspace(float(s["grid_lo"]), float(s["grid_hi"]), int(s["grid_points"]))
    else:
        grid = default_grid(policy, int(s["grid_points"]))
    curve = sweep(
        policy,
        test,
        _cost_model(cfg),
        grid=grid,
        rul_model=rul_model,
        n_jitter_draws=int(s["n_jitter_draws"]),
        mode=s["mode"],
    )
    emit_csv(curve, _path(cfg, "curve_csv"))
    print(
        f"sweep: {len(grid)} targets on {len(test)} units; "
        f"best mean {curve.means.max():.2f} at target {curve.argmax_target:.2f}"
    )
    return [_path(cfg, "curve_csv")]


def stage_report(cfg: dict) -> list[str]:
    curve = curve_from_csv(_path(cfg, "curve_csv"))
    emit_svg(curve, _path(cfg, "curve_svg"))
    print(f"report: wrote {_path(cfg, 'curve_svg')}")
    return [_path(cfg, "curve_svg")]


def stage_evaluate(cfg: dict, rule_name: str, target: float | None, threshold: float | None) -> list[str]:
    test = _test_set(cfg)
    cost = _cost_model(cfg)
    thr = cost.lead_time if threshold is None else threshold
    if rule_name == "no_action":
        rule = NoAction()
    elif rule_name == "oracle_rul":
        rule = OracleRul(thr)
    elif rule_name == "estimated_rul":
        rul_model = _load_rul_if_present(cfg)
        if rul_model is None:
            raise ConfigError("estimated_rul needs rul_model.txt (run train-rul first)")
        rule = EstimatedRul(rul_model, thr)
    elif rule_name == "policy":
        if target is None:
            raise ConfigError("--target is required for the policy rule")
        policy = load_policy(_path(cfg, "policy_model"))
        rule = Policy(policy, target, rul_model=_load_rul_if_present(cfg), mode=cfg["sweep"]["mode"])
    else:
        raise ConfigError(f"unknown rule {rule_name!r}")
    record = evaluate(test, rule, cost, int(cfg["sweep"]["n_jitter_draws"]))
    outcomes_to_csv([record], _path(cfg, "outcomes_csv"))
    print(f"evaluate: {record.rule} mean {record.mean:.2f} std {record.std:.2f} over {record.n_units} units")
    return [_path(cfg, "outcomes_csv")]


_PIPELINE = ("synth", "normalize", "build-dataset", "train-rul", "train-policy", "sweep", "report")


def run(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(
        prog="rulrl", description="maintenance decision-policy pipeline"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = [
        "synth", "normalize", "build-dataset", "train-rul", "train-policy",
        "evaluate", "sweep", "report", "pipeline",
    ]
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out-dir", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="override a config entry, e.g. --set sweep.grid_points=11",
        )
        if name == "evaluate":
            p.add_argument(
                "--rule", default="no_action",
                choices=["no_action", "oracle_rul", "estimated_rul", "policy"],
            )
            p.add_argument("--target", type=float, help="conditioning target for --rule policy")
            p.add_argument("--threshold", type=float, help="RUL threshold for the *_rul rules")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    stage = "config"
    try:
        cfg = load_config(args.config, args.set)
        if args.out_dir is not None:
            cfg["out_dir"] = args.out_dir
        if args.seed is not None:
            cfg["master_seed"] = args.seed
        os.makedirs(cfg["out_dir"], exist_ok=True)

        produced: list[str] = []
        if args.command == "pipeline":
            for stage in _PIPELINE:
                if stage == "synth" and cfg["data"] is not None:
                    continue
                if stage == "train-rul" and not cfg["use_rul"]:
                    continue
                produced += _STAGES[stage](cfg)
        elif args.command == "evaluate":
            stage = args.command
            produced += stage_evaluate(cfg, args.rule, args.target, args.threshold)
        else:
            stage = args.command
            produced += _STAGES[stage](cfg)
        write_manifest(cfg, produced)
        return 0
    except Exception as exc:  # one-line diagnostic with the failing stage
        print(f"rulrl: error in {stage}: {exc}", file=sys.stderr)
        return 1


_STAGES = {
    "synth": stage_synth,
    "normalize": stage_normalize,
    "build-dataset": stage_build_dataset,
    "train-rul": stage_train_rul,
    "train-policy": stage_train_policy,
    "sweep": stage_sweep,
    "report": stage_report,
}


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
