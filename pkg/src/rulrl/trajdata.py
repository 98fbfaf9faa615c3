"""Trajectory loading, train/test splitting, and synthetic fleet generation.

Handles plain-text run-to-failure sensor logs in the 26-column turbofan
layout (unit id, cycle, 3 operating settings, 21 sensors) and generates
seeded synthetic degradation fleets for desk-scale experiments.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

N_OP_SETTINGS = 3
N_SENSORS = 21
_MIN_COLUMNS = 2 + N_OP_SETTINGS + N_SENSORS


class ParseError(ValueError):
    """Raised for malformed trajectory file content."""


@dataclass
class CycleRecord:
    """One operating cycle: index, 3 op settings, 21 raw sensor values."""

    cycle_index: int
    op_settings: np.ndarray
    sensors: np.ndarray

    def __post_init__(self):
        self.op_settings = np.asarray(self.op_settings, dtype=float)
        self.sensors = np.asarray(self.sensors, dtype=float)
        if self.cycle_index < 1:
            raise ValueError(f"cycle_index must be positive, got {self.cycle_index}")
        if self.op_settings.shape != (N_OP_SETTINGS,):
            raise ValueError(f"expected {N_OP_SETTINGS} op settings, got shape {self.op_settings.shape}")
        if self.sensors.shape != (N_SENSORS,):
            raise ValueError(f"expected {N_SENSORS} sensors, got shape {self.sensors.shape}")
        if not (np.isfinite(self.op_settings).all() and np.isfinite(self.sensors).all()):
            raise ValueError(f"non-finite value in cycle {self.cycle_index}")

    def __eq__(self, other):
        if not isinstance(other, CycleRecord):
            return NotImplemented
        return (
            self.cycle_index == other.cycle_index
            and np.array_equal(self.op_settings, other.op_settings)
            and np.array_equal(self.sensors, other.sensors)
        )


@dataclass(eq=False)
class Trajectory:
    """One unit's life as arrays over cycles.

    ``cycle_index`` must run 1..n with no gaps. ``ends_in_failure`` marks
    whether the last cycle is the failure cycle (training logs) or an
    arbitrary truncation point (test logs).
    """

    unit_id: int
    cycle_index: np.ndarray  # (n,) int
    op_settings: np.ndarray  # (n, 3) float
    sensors: np.ndarray      # (n, 21) float
    ends_in_failure: bool

    def __post_init__(self):
        self.cycle_index = np.asarray(self.cycle_index, dtype=int)
        self.op_settings = np.asarray(self.op_settings, dtype=float)
        self.sensors = np.asarray(self.sensors, dtype=float)
        n = len(self.cycle_index)
        if n == 0:
            raise ValueError(f"unit {self.unit_id}: trajectory is empty")
        if self.op_settings.shape != (n, N_OP_SETTINGS) or self.sensors.shape != (n, N_SENSORS):
            raise ValueError(f"unit {self.unit_id}: inconsistent array shapes")
        if not np.array_equal(self.cycle_index, np.arange(1, n + 1)):
            raise ValueError(
                f"unit {self.unit_id}: cycle indices must run 1..{n} contiguously"
            )
        if not (np.isfinite(self.op_settings).all() and np.isfinite(self.sensors).all()):
            raise ValueError(f"unit {self.unit_id}: non-finite sensor or setting value")

    def __len__(self):
        return len(self.cycle_index)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.unit_id == other.unit_id
            and self.ends_in_failure == other.ends_in_failure
            and np.array_equal(self.cycle_index, other.cycle_index)
            and np.array_equal(self.op_settings, other.op_settings)
            and np.array_equal(self.sensors, other.sensors)
        )

    @property
    def cycles(self) -> list[CycleRecord]:
        return [
            CycleRecord(int(self.cycle_index[i]), self.op_settings[i], self.sensors[i])
            for i in range(len(self))
        ]

    @classmethod
    def from_cycles(cls, unit_id: int, cycles: list[CycleRecord], ends_in_failure: bool) -> "Trajectory":
        return cls(
            unit_id=unit_id,
            cycle_index=np.array([c.cycle_index for c in cycles]),
            op_settings=np.stack([c.op_settings for c in cycles]),
            sensors=np.stack([c.sensors for c in cycles]),
            ends_in_failure=ends_in_failure,
        )

    def with_sensors(self, sensors: np.ndarray) -> "Trajectory":
        """Copy with replaced sensor matrix (same shape)."""
        return Trajectory(
            unit_id=self.unit_id,
            cycle_index=self.cycle_index.copy(),
            op_settings=self.op_settings.copy(),
            sensors=np.asarray(sensors, dtype=float),
            ends_in_failure=self.ends_in_failure,
        )


def parse_cmapss(text, ends_in_failure: bool) -> list[Trajectory]:
    """Parse whitespace-delimited trajectory rows into one Trajectory per unit.

    Each non-comment line needs at least 26 numeric fields: unit id, cycle
    index, 3 op settings, 21 sensors. Extra trailing fields are ignored and
    lines starting with '#' are skipped. ``ends_in_failure`` applies to every
    unit in the file (training files end at failure, test files do not).
    """
    if hasattr(text, "read"):
        text = text.read()
    units: dict[int, dict] = {}
    order: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < _MIN_COLUMNS:
            raise ParseError(
                f"line {lineno}: expected at least {_MIN_COLUMNS} columns, got {len(fields)}"
            )
        try:
            values = [float(f) for f in fields[:_MIN_COLUMNS]]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric field ({exc})") from None
        unit = int(values[0])
        cycle = int(values[1])
        if unit not in units:
            units[unit] = {"cycles": [], "ops": [], "sensors": []}
            order.append(unit)
        units[unit]["cycles"].append(cycle)
        units[unit]["ops"].append(values[2 : 2 + N_OP_SETTINGS])
        units[unit]["sensors"].append(values[2 + N_OP_SETTINGS : _MIN_COLUMNS])
    out = []
    for unit in order:
        rec = units[unit]
        out.append(
            Trajectory(
                unit_id=unit,
                cycle_index=np.array(rec["cycles"]),
                op_settings=np.array(rec["ops"]),
                sensors=np.array(rec["sensors"]),
                ends_in_failure=ends_in_failure,
            )
        )
    return out


def write_cmapss(trajectories: list[Trajectory], path_or_file) -> None:
    """Write trajectories back out in the 26-column layout with a comment header."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        fh.write("# unit cycle setting_1 setting_2 setting_3 s_1 .. s_21\n")
        for traj in trajectories:
            for i in range(len(traj)):
                nums = [f"{v:.17g}" for v in traj.op_settings[i]] + [
                    f"{v:.17g}" for v in traj.sensors[i]
                ]
                fh.write(f"{traj.unit_id} {traj.cycle_index[i]} " + " ".join(nums) + "\n")
    finally:
        if own:
            fh.close()


def cmapss_to_text(trajectories: list[Trajectory]) -> str:
    buf = io.StringIO()
    write_cmapss(trajectories, buf)
    return buf.getvalue()


def split_train_test(trajectories: list[Trajectory]) -> tuple[list[Trajectory], list[Trajectory]]:
    """Split a unit-ordered fleet into (train, held-out test) lists.

    Fleets of 251+ units keep the first 250 for training; smaller fleets are
    split at floor(25*N/26), preserving the same 250-in-260 proportion.
    """
    n = len(trajectories)
    if n < 2:
        raise ValueError(f"need at least 2 trajectories to split, got {n}")
    n_train = 250 if n >= 251 else (25 * n) // 26
    return list(trajectories[:n_train]), list(trajectories[n_train:])


@dataclass
class SynthConfig:
    """Settings for the synthetic degradation fleet generator.

    Hidden health starts at a per-unit level drawn from
    ``initial_health_range`` and decays linearly at a per-unit wear rate from
    ``wear_rate_range``; the unit fails on the first cycle where health drops
    below ``failure_threshold``. Each cycle draws one of ``n_regimes``
    operating regimes; sensor i reads
    ``offset[regime][i] * (1 + accumulated_wear) + noise``.
    """

    n_units: int
    n_regimes: int = 6
    wear_rate_range: tuple[float, float] = (0.01, 0.02)
    noise_scale: float = 0.01
    sensor_regime_offsets: np.ndarray | None = None  # (n_regimes, 21)
    failure_threshold: float = 0.02
    initial_health_range: tuple[float, float] = (1.0, 1.05)
    seed: int = 0

    def __post_init__(self):
        if self.n_units < 1:
            raise ValueError("n_units must be >= 1")
        if self.n_regimes < 1:
            raise ValueError("n_regimes must be >= 1")
        lo, hi = self.wear_rate_range
        if not (0 < lo <= hi):
            raise ValueError(f"wear_rate_range must be positive, got {self.wear_rate_range}")
        if self.failure_threshold <= 0:
            raise ValueError("failure_threshold must be > 0")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        h_lo, h_hi = self.initial_health_range
        if not (self.failure_threshold < h_lo <= h_hi):
            raise ValueError("initial_health_range must sit above failure_threshold")
        if self.sensor_regime_offsets is None:
            self.sensor_regime_offsets = default_regime_offsets(self.n_regimes)
        self.sensor_regime_offsets = np.asarray(self.sensor_regime_offsets, dtype=float)
        if self.sensor_regime_offsets.shape != (self.n_regimes, N_SENSORS):
            raise ValueError(
                f"sensor_regime_offsets must have shape ({self.n_regimes}, {N_SENSORS})"
            )


def default_regime_offsets(n_regimes: int) -> np.ndarray:
    """Well-separated multiplicative sensor baselines, one row per regime."""
    r = np.arange(n_regimes, dtype=float)[:, None]
    i = np.arange(N_SENSORS, dtype=float)[None, :]
    return (1.0 + r) * (1.0 + 0.05 * i)


def regime_op_centers(n_regimes: int) -> np.ndarray:
    """Deterministic, widely spaced regime centers in op-setting space."""
    r = np.arange(n_regimes, dtype=float)
    return np.column_stack([10.0 * r, 0.5 * r, 20.0 * r])


@dataclass
class SynthUnitTruth:
    """Hidden generator state for one synthetic unit, for oracle tests."""

    unit_id: int
    initial_health: float
    wear_rate: float
    regimes: np.ndarray  # (n,) int
    lifetime: int

    def health_at(self, cycle: int) -> float:
        return self.initial_health - cycle * self.wear_rate


# Per-cycle op-setting jitter is a fixed fraction of the sensor noise scale;
# regime centers are ~20 apart so assignments stay unambiguous.
_OP_JITTER_FRACTION = 0.05


def synth_generate_with_truth(config: SynthConfig) -> tuple[list[Trajectory], list[SynthUnitTruth]]:
    """Generate the fleet plus the hidden health/wear ground truth per unit."""
    centers = regime_op_centers(config.n_regimes)
    offsets = config.sensor_regime_offsets
    trajs, truths = [], []
    for u in range(config.n_units):
        unit_id = u + 1
        rng = np.random.default_rng([config.seed, u])
        h0 = rng.uniform(*config.initial_health_range)
        wear_rate = rng.uniform(*config.wear_rate_range)
        regimes, ops, sensors = [], [], []
        k = 0
        while True:
            k += 1
            r = int(rng.integers(config.n_regimes))
            op = centers[r] + config.noise_scale * _OP_JITTER_FRACTION * rng.standard_normal(N_OP_SETTINGS)
            wear = k * wear_rate
            s = offsets[r] * (1.0 + wear) + config.noise_scale * rng.standard_normal(N_SENSORS)
            regimes.append(r)
            ops.append(op)
            sensors.append(s)
            if h0 - k * wear_rate < config.failure_threshold:
                break
        trajs.append(
            Trajectory(
                unit_id=unit_id,
                cycle_index=np.arange(1, k + 1),
                op_settings=np.array(ops),
                sensors=np.array(sensors),
                ends_in_failure=True,
            )
        )
        truths.append(
            SynthUnitTruth(
                unit_id=unit_id,
                initial_health=h0,
                wear_rate=wear_rate,
                regimes=np.array(regimes),
                lifetime=k,
            )
        )
    return trajs, truths


def synth_generate(config: SynthConfig) -> list[Trajectory]:
    """Generate a synthetic run-to-failure fleet, deterministic given the seed."""
    return synth_generate_with_truth(config)[0]
