"""Operating-regime sensor normalization.

Sensors shift systematically with the operating regime, hiding the slow
degradation trend. The normalizer clusters the 3 op settings into k regimes
(k-means) and fits each sensor's expected value per regime; normalization
divides each raw sensor by its regime's fitted mean, so regime effects cancel
and the remaining variation tracks wear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajdata import N_OP_SETTINGS, N_SENSORS, Trajectory

_KMEANS_MAX_ITER = 100
_KMEANS_TOL = 1e-8
_MEAN_GUARD = 1e-9


@dataclass
class RegimeNormalizer:
    """k regime centroids in op-setting space plus per-regime sensor means."""

    centroids: np.ndarray            # (k, 3)
    regime_sensor_means: np.ndarray  # (k, 21)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=float)
        self.regime_sensor_means = np.asarray(self.regime_sensor_means, dtype=float)
        k = self.k
        if self.centroids.shape != (k, N_OP_SETTINGS):
            raise ValueError(f"centroids must be (k, {N_OP_SETTINGS})")
        if self.regime_sensor_means.shape != (k, N_SENSORS):
            raise ValueError(f"regime_sensor_means must be (k, {N_SENSORS})")
        if not np.isfinite(self.regime_sensor_means).all():
            raise ValueError("non-finite regime sensor mean")
        for a in range(k):
            for b in range(a + 1, k):
                if np.array_equal(self.centroids[a], self.centroids[b]):
                    raise ValueError(f"centroids {a} and {b} coincide")

    @property
    def k(self) -> int:
        return len(self.centroids)

    def assign(self, op_settings: np.ndarray) -> np.ndarray:
        """Nearest-centroid regime index per row; ties go to the lowest index."""
        op = np.atleast_2d(np.asarray(op_settings, dtype=float))
        d2 = ((op[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)


def _collect_op_and_sensors(trajectories: list[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    ops = np.concatenate([t.op_settings for t in trajectories], axis=0)
    sensors = np.concatenate([t.sensors for t in trajectories], axis=0)
    return ops, sensors


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            # All remaining points coincide with a centroid; pick any point.
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def fit_regimes(train: list[Trajectory], k: int, seed: int) -> RegimeNormalizer:
    """Cluster op settings into k regimes and fit per-regime sensor means.

    Lloyd's algorithm with k-means++ seeding, at most 100 iterations,
    converging when no centroid moves more than 1e-8. An emptied regime is
    re-seeded from the point farthest from its assigned centroid.
    Deterministic given the seed.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not train:
        raise ValueError("no trajectories to fit on")
    points, sensors = _collect_op_and_sensors(train)
    n_distinct = len(np.unique(points, axis=0))
    if n_distinct < k:
        raise ValueError(f"only {n_distinct} distinct op-setting vectors for k={k}")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)
    assignment = None
    for _ in range(_KMEANS_MAX_ITER):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assignment = np.argmin(d2, axis=1)
        # Re-seed empty regimes from the farthest point before updating.
        for j in range(k):
            if not (assignment == j).any():
                nearest = d2[np.arange(len(points)), assignment]
                far = int(np.argmax(nearest))
                centroids[j] = points[far]
                d2[:, j] = ((points - centroids[j]) ** 2).sum(axis=1)
                assignment = np.argmin(d2, axis=1)
        new_centroids = np.stack([points[assignment == j].mean(axis=0) for j in range(k)])
        move = np.abs(new_centroids - centroids).max()
        centroids = new_centroids
        if move < _KMEANS_TOL:
            break
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assignment = np.argmin(d2, axis=1)
    means = np.empty((k, N_SENSORS))
    for j in range(k):
        members = assignment == j
        if not members.any():
            raise RuntimeError(f"regime {j} is empty after convergence")
        means[j] = sensors[members].mean(axis=0)
    bad = np.argwhere(np.abs(means) < _MEAN_GUARD)
    if len(bad):
        r, i = bad[0]
        raise ValueError(f"fitted mean of sensor {i} in regime {r} is ~0; cannot ratio-normalize")
    return RegimeNormalizer(centroids=centroids, regime_sensor_means=means)


def normalize(traj: Trajectory, norm: RegimeNormalizer) -> Trajectory:
    """Divide each sensor by its assigned regime's fitted mean.

    Cycle indices and op settings pass through unchanged; only the sensor
    matrix is rescaled.
    """
    regimes = norm.assign(traj.op_settings)
    divisors = norm.regime_sensor_means[regimes]
    bad = np.argwhere(np.abs(divisors) < _MEAN_GUARD)
    if len(bad):
        row, i = bad[0]
        raise ValueError(
            f"sensor {i} in regime {regimes[row]} has near-zero fitted mean; cannot normalize"
        )
    return traj.with_sensors(traj.sensors / divisors)


def save_normalizer(norm: RegimeNormalizer, path_or_file) -> None:
    """Plain-text table: one header line (k), k centroid lines, k mean lines."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        fh.write(f"{norm.k}\n")
        for row in norm.centroids:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        for row in norm.regime_sensor_means:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
    finally:
        if own:
            fh.close()


def load_normalizer(path_or_file) -> RegimeNormalizer:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file) if own else path_or_file
    try:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    finally:
        if own:
            fh.close()
    if not lines:
        raise ValueError("empty normalizer file")
    k = int(lines[0])
    if len(lines) != 1 + 2 * k:
        raise ValueError(f"expected {1 + 2 * k} lines for k={k}, got {len(lines)}")
    centroids = np.array([[float(v) for v in lines[1 + j].split()] for j in range(k)])
    means = np.array([[float(v) for v in lines[1 + k + j].split()] for j in range(k)])
    return RegimeNormalizer(centroids=centroids, regime_sensor_means=means)
