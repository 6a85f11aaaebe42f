"""Feed-forward regressor with per-link mean and variance heads.

Plain numpy: forward pass, exact reverse-mode gradients of the Gaussian
negative log-likelihood, Adam, a mini-batch training loop with early stopping,
and a versioned JSON model format.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

MODEL_FORMAT_VERSION = 1
VAR_FLOOR = 1e-6
DEFAULT_HIDDEN = (1000, 1000, 500, 500, 100)


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


def layer_dims_for(n_links: int, hidden=DEFAULT_HIDDEN) -> tuple:
    return (n_links * n_links, *hidden, 2 * n_links)


@dataclass
class MLPParams:
    """Weights are stored ``(out, in)``; inputs are standardized with
    ``(x - input_shift) / input_scale`` before the first layer."""

    layer_dims: tuple
    weights: list
    biases: list
    activation: str = "relu"
    input_shift: np.ndarray = None
    input_scale: np.ndarray = None
    var_floor: float = VAR_FLOOR

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i + 1], self.layer_dims[i]) or b.shape != (self.layer_dims[i + 1],):
                raise ValueError(f"layer {i} has shapes {w.shape}, {b.shape} inconsistent with {self.layer_dims}")
        if self.layer_dims[-1] % 2:
            raise ValueError("output width must be 2 * n_links")
        if not self.var_floor > 0:
            raise ValueError("var_floor must be positive")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        d_in = self.layer_dims[0]
        if self.input_shift is None:
            self.input_shift = np.zeros(d_in)
        if self.input_scale is None:
            self.input_scale = np.ones(d_in)

    @property
    def n_outputs(self) -> int:
        return self.layer_dims[-1] // 2

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_arrays(self, arrays) -> "MLPParams":
        return MLPParams(
            self.layer_dims,
            list(arrays[0::2]),
            list(arrays[1::2]),
            self.activation,
            self.input_shift,
            self.input_scale,
            self.var_floor,
        )

    def copy(self) -> "MLPParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def __eq__(self, other):
        if not isinstance(other, MLPParams):
            return NotImplemented
        mine, theirs = self.arrays(), other.arrays()
        return (
            self.layer_dims == other.layer_dims
            and self.activation == other.activation
            and self.var_floor == other.var_floor
            and np.array_equal(self.input_shift, other.input_shift)
            and np.array_equal(self.input_scale, other.input_scale)
            and all(np.array_equal(a, b) for a, b in zip(mine, theirs))
        )


def init_params(layer_dims, rng: np.random.Generator, var_floor: float = VAR_FLOOR) -> MLPParams:
    """He-normal hidden layers, LeCun-normal output layer, zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"invalid layer dims {dims}")
    weights, biases = [], []
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        gain = 1.0 if i == len(dims) - 2 else 2.0
        weights.append(rng.normal(0.0, np.sqrt(gain / d_in), size=(d_out, d_in)))
        biases.append(np.zeros(d_out))
    return MLPParams(dims, weights, biases, var_floor=var_floor)


def fit_input_scaling(params: MLPParams, features: np.ndarray) -> MLPParams:
    """Return ``params`` with per-feature standardization fitted on ``features``."""
    x = np.asarray(features, dtype=float)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    out = params.copy()
    out.input_shift, out.input_scale = x.mean(axis=0), scale
    return out


def softplus(z):
    return np.logaddexp(0.0, z)


def _check_features(params: MLPParams, features):
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != params.layer_dims[0]:
        raise ValueError(f"expected {params.layer_dims[0]} features, got {x.shape[-1]}")
    return x, single


def _forward(params: MLPParams, x):
    """Returns head outputs plus the cache needed for backprop."""
    h = (x - params.input_shift) / params.input_scale
    acts, pres = [h], []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pres.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
            acts.append(h)
    n = params.n_outputs
    out = pres[-1]
    mu = expit(out[:, :n])
    sigma2 = softplus(out[:, n:]) + params.var_floor
    return mu, sigma2, (acts, pres)


def forward(params: MLPParams, features):
    """Predicted normalized power in (0, 1) and variance above the floor, per link."""
    x, single = _check_features(params, features)
    mu, sigma2, _ = _forward(params, x)
    if single:
        return mu[0], sigma2[0]
    return mu, sigma2


def nll_loss(mu, sigma2, target, c: float = 0.0) -> float:
    """Gaussian negative log-likelihood averaged over links (and samples)."""
    mu, sigma2, target = (np.asarray(a, dtype=float) for a in (mu, sigma2, target))
    if mu.shape != sigma2.shape or mu.shape != target.shape:
        raise ValueError("mu, sigma2 and target must have the same shape")
    if np.any(sigma2 <= 0):
        raise ValueError("variance must be positive")
    return float(np.mean(0.5 * np.log(sigma2) + np.square(target - mu) / (2.0 * sigma2)) + c)


def backward(params: MLPParams, features, targets, c: float = 0.0):
    """Mean batch NLL and its exact gradient, in ``params.arrays()`` order."""
    x, _ = _check_features(params, features)
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    if len(x) == 0 or y.shape != (len(x), params.n_outputs):
        raise ValueError("batch must be non-empty with targets of shape (B, n_links)")
    mu, sigma2, (acts, pres) = _forward(params, x)
    resid = y - mu
    loss = float(np.mean(0.5 * np.log(sigma2) + resid * resid / (2.0 * sigma2)) + c)

    n = params.n_outputs
    scale = 1.0 / y.size
    d_mu = -resid / sigma2 * scale
    d_s2 = (0.5 / sigma2 - resid * resid / (2.0 * sigma2 * sigma2)) * scale
    d_out = np.concatenate([d_mu * mu * (1.0 - mu), d_s2 * expit(pres[-1][:, n:])], axis=1)

    grads = []
    delta = d_out
    for i in range(len(params.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(delta.T @ acts[i])
        if i > 0:
            delta = (delta @ params.weights[i]) * (pres[i - 1] > 0)
    grads.reverse()  # now [dW0, db0, dW1, db1, ...]
    return loss, grads


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 100
    epochs: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    nll_constant: float = 0.0
    seed: int = 0
    val_fraction: float = 0.1
    patience: int = 10
    monitor: str = "nll"  # held-out metric for early stopping: "nll" or "mse" of the mean head

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.monitor not in ("mse", "nll"):
            raise ValueError(f"monitor must be 'mse' or 'nll', got {self.monitor!r}")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params: MLPParams) -> "AdamState":
        arrs = params.arrays()
        return cls([np.zeros_like(a) for a in arrs], [np.zeros_like(a) for a in arrs], 0)


def adam_step(params: MLPParams, grads, state: AdamState, config: TrainConfig):
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    new_arrays, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_arrays.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps))
        new_m.append(m)
        new_v.append(v)
    return params.with_arrays(new_arrays), AdamState(new_m, new_v, t)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1


def evaluate_loss(params: MLPParams, features, targets, c: float = 0.0, metric: str = "nll") -> float:
    mu, sigma2 = forward(params, np.atleast_2d(features))
    if metric == "mse":
        return float(np.mean(np.square(np.atleast_2d(targets) - mu)))
    return nll_loss(mu, sigma2, np.atleast_2d(targets), c)


def train(params: MLPParams, features, targets, config: TrainConfig, val_metric=None):
    """Shuffled mini-batch Adam on the NLL.

    A ``val_fraction`` hold-out drives early stopping. The monitored quantity
    is ``val_metric(params, x_val, y_val)`` when given (lower is better),
    otherwise ``config.monitor``. Returns the parameters from the best
    validation epoch and the history (``val_loss`` records the monitored value).
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if len(x) == 0:
        raise ValueError("cannot train on an empty dataset")
    history = TrainHistory()
    if config.epochs == 0:
        return params, history

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(x))
    n_val = int(round(config.val_fraction * len(x))) if len(x) >= 10 else 0
    val_idx, tr_idx = order[:n_val], order[n_val:]
    x_tr, y_tr = x[tr_idx], y[tr_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    state = AdamState.zeros_like(params)
    best, best_loss, stale = params, np.inf, 0
    c = config.nll_constant
    for epoch in range(config.epochs):
        perm = rng.permutation(len(x_tr))
        total = 0.0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss, grads = backward(params, x_tr[idx], y_tr[idx], c)
            params, state = adam_step(params, grads, state, config)
            total += loss * len(idx)
        history.train_loss.append(total / len(perm))

        if n_val == 0:
            best, history.best_epoch = params, epoch
            continue
        if val_metric is not None:
            val = float(val_metric(params, x_val, y_val))
        else:
            val = evaluate_loss(params, x_val, y_val, c, config.monitor)
        history.val_loss.append(val)
        if val < best_loss:
            best, best_loss, stale, history.best_epoch = params, val, 0, epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, history


def params_to_dict(params: MLPParams, config_hash: str = "") -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "layer_dims": list(params.layer_dims),
        "activation": params.activation,
        "weights": [[w.tolist(), b.tolist()] for w, b in zip(params.weights, params.biases)],
        "input_shift": params.input_shift.tolist(),
        "input_scale": params.input_scale.tolist(),
        "var_floor": params.var_floor,
        "created_from_config_hash": config_hash,
    }


def params_from_dict(obj: dict) -> MLPParams:
    if not isinstance(obj, dict) or "version" not in obj:
        raise ModelFormatError("model object has no version header")
    if obj["version"] != MODEL_FORMAT_VERSION:
        raise ModelVersionError(f"model format version {obj['version']!r}, expected {MODEL_FORMAT_VERSION}")
    try:
        weights = [np.array(w, dtype=float) for w, _ in obj["weights"]]
        biases = [np.array(b, dtype=float) for _, b in obj["weights"]]
        params = MLPParams(
            obj["layer_dims"],
            weights,
            biases,
            obj["activation"],
            np.array(obj["input_shift"], dtype=float),
            np.array(obj["input_scale"], dtype=float),
            float(obj["var_floor"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model object: {exc}") from exc
    if not all(np.all(np.isfinite(a)) for a in params.arrays()):
        raise ModelFormatError("model contains non-finite parameters")
    return params


def save_model(params: MLPParams, config_hash: str = "") -> bytes:
    return json.dumps(params_to_dict(params, config_hash)).encode()


def load_model(data: bytes) -> MLPParams:
    try:
        obj = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"model stream is not valid JSON: {exc}") from exc
    return params_from_dict(obj)
