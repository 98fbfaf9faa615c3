"""Dense neural network core: forward pass, backprop, Adam, gradient checks.

Everything runs in float64 numpy. The networks here are tiny (one hidden
layer, ~1e4-1e5 parameters), so determinism and verifiability win over
speed: training is bit-reproducible given (seed, data order), and every
gradient path can be validated against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HEAD_LOGITS = "logits"
HEAD_LINEAR = "linear"
LOSS_CROSS_ENTROPY = "cross_entropy"
LOSS_SQUARED_ERROR = "squared_error"

_STD_GUARD = 1e-12
MODEL_FORMAT = "rulrl-mlp"
MODEL_VERSION = 1


@dataclass(eq=False)
class MlpModel:
    """Dense ReLU network parameters plus optional input standardization."""

    layer_sizes: list[int]
    weights: list[np.ndarray]  # (fan_in, fan_out) per layer
    biases: list[np.ndarray]   # (fan_out,) per layer
    output_head: str = HEAD_LOGITS
    init_scheme: str = "glorot_uniform"
    seed: int = 0
    input_mean: np.ndarray | None = None
    input_std: np.ndarray | None = None

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least 2 layers (input and output)")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"zero-sized layer in {self.layer_sizes}")
        if self.output_head not in (HEAD_LOGITS, HEAD_LINEAR):
            raise ValueError(f"unknown output head {self.output_head!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise ValueError(f"layer {i}: parameter shapes incompatible with {expect}")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass
class TrainConfig:
    """Adam hyperparameters and data handling for ``train``."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    feature_standardization: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1/beta2 must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


def mlp_init(layer_sizes: list[int], output_head: str, seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases, deterministic given the seed."""
    sizes = [int(s) for s in layer_sizes]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if fan_in < 1 or fan_out < 1:
            raise ValueError(f"zero-sized layer in {sizes}")
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(
        layer_sizes=sizes, weights=weights, biases=biases, output_head=output_head, seed=seed
    )


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Raw network output (logits or linear). Accepts (d,) or (batch, d)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} input features, got {a.shape[1]}")
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w + b
        if i < n_layers - 1:
            a = np.maximum(a, 0.0)
    return a[0] if single else a


def standardize_input(model: MlpModel, x: np.ndarray) -> np.ndarray:
    if model.input_mean is None:
        return np.asarray(x, dtype=float)
    return (np.asarray(x, dtype=float) - model.input_mean) / model.input_std


def predict(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Standardize (if the model carries stats) and run the forward pass."""
    return forward(model, standardize_input(model, x))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cached(model: MlpModel, x: np.ndarray):
    """Forward pass keeping pre-activations for backprop."""
    acts = [x]
    pre = []
    a = x
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < n_layers - 1 else z
        acts.append(a)
    return pre, acts


def _check_targets(model: MlpModel, y: np.ndarray, loss: str) -> np.ndarray:
    if loss == LOSS_CROSS_ENTROPY:
        if model.output_head != HEAD_LOGITS:
            raise ValueError("cross_entropy requires a logits head")
        y = np.asarray(y)
        if not np.issubdtype(y.dtype, np.integer):
            raise ValueError("cross_entropy targets must be class indices")
        if y.min() < 0 or y.max() >= model.n_outputs:
            raise ValueError("class index out of range")
        return y
    if loss == LOSS_SQUARED_ERROR:
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape[1] != model.n_outputs:
            raise ValueError(f"targets must have {model.n_outputs} columns")
        return y
    raise ValueError(f"unknown loss {loss!r}")


def loss_and_grads(
    model: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    loss: str,
    sample_weights: np.ndarray | None = None,
):
    """Weighted-mean loss over the batch and gradients for every parameter."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = _check_targets(model, y, loss)
    n = len(x)
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    if w.shape != (n,):
        raise ValueError("sample_weights must match the batch length")
    w_total = w.sum()
    pre, acts = _forward_cached(model, x)
    out = acts[-1]
    if loss == LOSS_CROSS_ENTROPY:
        probs = softmax(out)
        picked = probs[np.arange(n), y]
        loss_value = float((w * -np.log(picked)).sum() / w_total)
        delta = probs.copy()
        delta[np.arange(n), y] -= 1.0
        delta *= (w / w_total)[:, None]
    else:
        diff = out - y
        loss_value = float((w * 0.5 * (diff**2).sum(axis=1)).sum() / w_total)
        delta = diff * (w / w_total)[:, None]
    grads_w = [np.empty_like(wm) for wm in model.weights]
    grads_b = [np.empty_like(bv) for bv in model.biases]
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return loss_value, grads_w, grads_b


def loss_value(
    model: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    loss: str,
    sample_weights: np.ndarray | None = None,
) -> float:
    """Loss only (used by the finite-difference checker)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = _check_targets(model, y, loss)
    n = len(x)
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    out = forward(model, x)
    if loss == LOSS_CROSS_ENTROPY:
        probs = softmax(out)
        picked = probs[np.arange(n), y]
        return float((w * -np.log(picked)).sum() / w.sum())
    diff = out - y
    return float((w * 0.5 * (diff**2).sum(axis=1)).sum() / w.sum())


def train(
    model: MlpModel,
    samples: list[tuple[np.ndarray, int | float | np.ndarray]],
    config: TrainConfig,
    loss: str,
    sample_weights: np.ndarray | None = None,
) -> tuple[MlpModel, list[float]]:
    """Mini-batch Adam with per-epoch shuffling; returns per-epoch mean loss.

    Features are standardized with training statistics (computed here unless
    the config provides them) and the statistics are stored on the model so
    inference sees the same transform. Aborts on a non-finite batch loss.
    """
    if not samples:
        raise ValueError("no training samples")
    x = np.stack([np.asarray(s[0], dtype=float).ravel() for s in samples])
    if loss == LOSS_CROSS_ENTROPY:
        raw = [s[1] for s in samples]
        if not all(isinstance(v, (int, np.integer)) for v in raw):
            raise ValueError("cross_entropy targets must be class indices")
        y = np.array(raw, dtype=int)
    else:
        y = np.stack([np.atleast_1d(np.asarray(s[1], dtype=float)) for s in samples])
    n = len(x)
    weights = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    if weights.shape != (n,):
        raise ValueError("sample_weights must match the number of samples")

    if config.feature_standardization is not None:
        mean, std = config.feature_standardization
        mean = np.asarray(mean, dtype=float)
        std = np.asarray(std, dtype=float)
    else:
        mean = x.mean(axis=0)
        std = x.std(axis=0)
    std = np.where(std < _STD_GUARD, 1.0, std)
    model.input_mean = mean
    model.input_std = std
    xs = (x - mean) / std

    rng = np.random.default_rng(config.seed)
    m_w = [np.zeros_like(wm) for wm in model.weights]
    v_w = [np.zeros_like(wm) for wm in model.weights]
    m_b = [np.zeros_like(bv) for bv in model.biases]
    v_b = [np.zeros_like(bv) for bv in model.biases]
    step = 0
    lr, b1, b2, eps = config.learning_rate, config.beta1, config.beta2, config.epsilon
    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        weight_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = perm[start : start + config.batch_size]
            bw = weights[batch]
            value, grads_w, grads_b = loss_and_grads(model, xs[batch], y[batch], loss, bw)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            loss_sum += value * bw.sum()
            weight_sum += bw.sum()
            step += 1
            c1 = 1.0 - b1**step
            c2 = 1.0 - b2**step
            for i in range(len(model.weights)):
                m_w[i] = b1 * m_w[i] + (1 - b1) * grads_w[i]
                v_w[i] = b2 * v_w[i] + (1 - b2) * grads_w[i] ** 2
                model.weights[i] -= lr * (m_w[i] / c1) / (np.sqrt(v_w[i] / c2) + eps)
                m_b[i] = b1 * m_b[i] + (1 - b1) * grads_b[i]
                v_b[i] = b2 * v_b[i] + (1 - b2) * grads_b[i] ** 2
                model.biases[i] -= lr * (m_b[i] / c1) / (np.sqrt(v_b[i] / c2) + eps)
        for wm, bv in zip(model.weights, model.biases):
            if not (np.isfinite(wm).all() and np.isfinite(bv).all()):
                raise RuntimeError(f"non-finite parameter after epoch {epoch}")
        epoch_losses.append(loss_sum / weight_sum)
    return model, epoch_losses


def grad_check(
    model: MlpModel,
    batch: tuple[np.ndarray, np.ndarray],
    loss: str,
    sample_weights: np.ndarray | None = None,
    step: float = 1e-5,
) -> float:
    """Max relative error between backprop and central finite differences.

    Perturbs every parameter by ±step and compares against the analytic
    gradient with |bp - fd| / max(1e-8, |bp| + |fd|).
    """
    x, y = batch
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, grads_w, grads_b = loss_and_grads(model, x, y, loss, sample_weights)
    worst = 0.0
    params = list(zip(model.weights, grads_w)) + list(zip(model.biases, grads_b))
    for array, grad in params:
        flat = array.ravel()
        gflat = grad.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = loss_value(model, x, y, loss, sample_weights)
            flat[idx] = orig - step
            down = loss_value(model, x, y, loss, sample_weights)
            flat[idx] = orig
            fd = (up - down) / (2.0 * step)
            err = abs(gflat[idx] - fd) / max(1e-8, abs(gflat[idx]) + abs(fd))
            worst = max(worst, err)
    return worst


def r_squared(predictions: np.ndarray, targets: np.ndarray) -> float:
    """Coefficient of determination, 1 - SS_res/SS_tot about the target mean."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if len(p) != len(t) or len(p) == 0:
        raise ValueError("predictions and targets must have equal nonzero length")
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("R^2 is undefined for all-identical targets")
    ss_res = float(((t - p) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def save_model(model: MlpModel, path_or_file, extra: dict[str, str] | None = None) -> None:
    """Versioned plain-text model file; parameters at 17 significant digits."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        fh.write(f"{MODEL_FORMAT} {MODEL_VERSION}\n")
        fh.write("layer_sizes " + " ".join(str(s) for s in model.layer_sizes) + "\n")
        fh.write(f"head {model.output_head}\n")
        fh.write(f"init {model.init_scheme}\n")
        fh.write(f"seed {model.seed}\n")
        for key, value in (extra or {}).items():
            fh.write(f"extra {key} {value}\n")
        if model.input_mean is not None:
            fh.write("standardization 1\n")
            fh.write("mean " + " ".join(f"{v:.17g}" for v in model.input_mean) + "\n")
            fh.write("std " + " ".join(f"{v:.17g}" for v in model.input_std) + "\n")
        else:
            fh.write("standardization 0\n")
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            fh.write(f"W{i} " + " ".join(f"{v:.17g}" for v in w.ravel()) + "\n")
            fh.write(f"b{i} " + " ".join(f"{v:.17g}" for v in b) + "\n")
    finally:
        if own:
            fh.close()


def load_model(path_or_file) -> tuple[MlpModel, dict[str, str]]:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file) if own else path_or_file
    try:
        lines = fh.read().splitlines()
    finally:
        if own:
            fh.close()
    if not lines or not lines[0].startswith(MODEL_FORMAT):
        raise ValueError("not a model file")
    version = int(lines[0].split()[1])
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model file version {version}")
    fields: dict[str, str] = {}
    extra: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        key, _, rest = line.partition(" ")
        if key == "extra":
            name, _, value = rest.partition(" ")
            extra[name] = value
        elif key in ("mean", "std") or key[0] in "Wb":
            arrays[key] = np.array([float(v) for v in rest.split()])
        else:
            fields[key] = rest
    layer_sizes = [int(s) for s in fields["layer_sizes"].split()]
    weights, biases = [], []
    for i in range(len(layer_sizes) - 1):
        shape = (layer_sizes[i], layer_sizes[i + 1])
        weights.append(arrays[f"W{i}"].reshape(shape))
        biases.append(arrays[f"b{i}"])
    model = MlpModel(
        layer_sizes=layer_sizes,
        weights=weights,
        biases=biases,
        output_head=fields["head"],
        init_scheme=fields.get("init", "glorot_uniform"),
        seed=int(fields.get("seed", 0)),
        input_mean=arrays.get("mean"),
        input_std=arrays.get("std"),
    )
    return model, extra
