"""Fully connected AGCS regressor: assistance features -> one AGCS per codebook.

Every layer, the output layer included, is affine followed by ReLU. Inputs
are standardized with a per-feature shift/scale fitted on the training split
and stored with the model, so the network itself sees zero-mean features.
"""

import io
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError
from .seeding import make_rng

CHECKPOINT_MAGIC = b"CBADNN\x00\x01"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 32
    split: tuple = (0.7, 0.15, 0.15)
    seed: int = 0
    hidden_layers: int = 2
    hidden_width: int | None = None
    output_bias: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("learning_rate must be >= 0; epochs and batch_size >= 1")
        if len(self.split) != 3 or min(self.split) < 0 or not math.isclose(sum(self.split), 1.0, abs_tol=1e-9):
            raise ConfigError(f"split fractions {self.split} must be three values summing to 1")
        if self.hidden_layers < 0:
            raise ConfigError("hidden_layers must be >= 0")
        if self.hidden_width is not None and self.hidden_width < 1:
            raise ConfigError("hidden_width must be >= 1")


@dataclass
class PredictorModel:
    weights: list          # W[i] has shape (fan_in, fan_out)
    biases: list
    in_shift: np.ndarray
    in_scale: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def layer_widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "PredictorModel":
        return PredictorModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                              self.in_shift.copy(), self.in_scale.copy(), self.seed, dict(self.meta))


def init_model(input_dim: int, U: int = 2, G: int = 5, seed: int = 0, hidden_width: int | None = None,
               output_bias: float = 0.5) -> PredictorModel:
    """He-uniform weights ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero hidden biases.

    ``hidden_width`` defaults to ``input_dim // 2``. The output bias starts at
    ``output_bias`` so the rectified outputs are alive at initialization.
    """
    if input_dim < 1 or G < 1 or U < 0:
        raise ConfigError("input_dim and G must be >= 1, U >= 0")
    h = hidden_width if hidden_width is not None else max(1, input_dim // 2)
    widths = [input_dim] + [h] * U + [G]
    rng = make_rng(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        lim = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    biases[-1][:] = output_bias
    return PredictorModel(weights, biases, np.zeros(input_dim), np.ones(input_dim), seed)


def _check_input(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise ConfigError(f"feature length {x.shape[-1]} does not match model input {model.input_dim}")
    return x


def _forward_cache(model, x):
    a = (x - model.in_shift) / model.in_scale
    acts, pres = [a], []
    for w, b in zip(model.weights, model.biases):
        z = a @ w + b
        a = np.maximum(z, 0.0)
        pres.append(z)
        acts.append(a)
    return acts, pres


def forward(model: PredictorModel, features) -> np.ndarray:
    """Predicted AGCS vector(s); accepts a single vector or a ``(n, d)`` batch."""
    x = _check_input(model, features)
    acts, _ = _forward_cache(model, x)
    return acts[-1]


def loss(pred, label) -> float:
    """Squared error averaged over outputs (and over rows for a batch)."""
    d = np.asarray(pred, dtype=float) - np.asarray(label, dtype=float)
    return float(np.mean(d * d))


def gradients(model: PredictorModel, x, y) -> list[np.ndarray]:
    """Backprop gradients of :func:`loss` in ``params()`` order."""
    x = np.atleast_2d(_check_input(model, x))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    acts, pres = _forward_cache(model, x)
    delta = 2.0 * (acts[-1] - y) / y.size
    grads = []
    for i in range(len(model.weights) - 1, -1, -1):
        delta = delta * (pres[i] > 0)
        grads.append(delta.sum(axis=0))
        grads.append(acts[i].T @ delta)
        delta = delta @ model.weights[i].T
    return grads[::-1]


def near_kink(model: PredictorModel, x, tol: float = 1e-3) -> bool:
    """True if any pre-activation of ``x`` lies within ``tol`` of zero."""
    _, pres = _forward_cache(model, np.atleast_2d(_check_input(model, x)))
    return any(np.any(np.abs(z) < tol) for z in pres)


def gradient_check(model: PredictorModel, x, y, step: float = 1e-5, grad_fn=None,
                   kink_tol: float = 1e-3) -> float:
    """Max relative error between analytic and central-difference gradients.

    Per entry the error is ``|ga - gn| / max(|ga|, |gn|, 1e-6)``, and 0 when
    both vanish. ``grad_fn(model, x, y)`` replaces the analytic gradient
    (used to test the check itself). Points within ``kink_tol`` of a ReLU
    kink are rejected with ``ConfigError``.
    """
    if near_kink(model, x, kink_tol):
        raise ConfigError("sample lies within kink_tol of a ReLU kink")
    analytic = (grad_fn or gradients)(model, x, y)
    worst = 0.0
    for p, ga in zip(model.params(), analytic):
        flat = p.reshape(-1)
        gflat = np.asarray(ga).reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = loss(forward(model, x), y)
            flat[i] = old - step
            down = loss(forward(model, x), y)
            flat[i] = old
            gn = (up - down) / (2 * step)
            diff = abs(gflat[i] - gn)
            if diff == 0.0:
                continue
            worst = max(worst, diff / max(abs(gflat[i]), abs(gn), 1e-6))
    return worst


# ---------------------------------------------------------------- training

@dataclass
class LossCurve:
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    best_epoch: int = -1


def fit_standardizer(model: PredictorModel, x: np.ndarray) -> None:
    model.in_shift = x.mean(axis=0)
    std = x.std(axis=0)
    model.in_scale = np.where(std > 1e-12, std, 1.0)


def fit(x_train, y_train, x_val, y_val, config: TrainConfig, model: PredictorModel | None = None,
        hidden_width: int | None = None) -> tuple[PredictorModel, LossCurve]:
    """Mini-batch Adam on the mean squared error; keeps the best-validation model.

    Deterministic for fixed inputs: the shuffle order comes from
    ``config.seed``. With no validation rows the training loss picks the
    checkpoint.
    """
    x_train = np.asarray(x_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    if len(x_train) == 0:
        raise ConfigError("empty training split")
    if model is None:
        model = init_model(x_train.shape[1], config.hidden_layers, y_train.shape[1], config.seed,
                           hidden_width if hidden_width is not None else config.hidden_width,
                           config.output_bias)
        fit_standardizer(model, x_train)
    has_val = x_val is not None and len(x_val) > 0
    params = model.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = make_rng(config.seed, "shuffle")
    lr, b1, b2, eps = config.learning_rate, config.beta1, config.beta2, config.eps
    curve = LossCurve()
    best, best_score = model.copy(), math.inf
    step = 0
    n = len(x_train)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            grads = gradients(model, x_train[idx], y_train[idx])
            step += 1
            c1 = 1 - b1 ** step
            c2 = 1 - b2 ** step
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= b1
                mi += (1 - b1) * g
                vi *= b2
                vi += (1 - b2) * g * g
                p -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
        tr = loss(forward(model, x_train), y_train)
        curve.train.append(tr)
        score = tr
        if has_val:
            score = loss(forward(model, x_val), y_val)
            curve.validation.append(score)
        if score < best_score:
            best, best_score = model.copy(), score
            curve.best_epoch = epoch
    return best, curve


def evaluate_mse(model: PredictorModel, x, y) -> np.ndarray:
    """Per-output mean squared error over the rows of ``x``."""
    d = forward(model, x) - np.asarray(y, dtype=float)
    return np.mean(d * d, axis=0)


def permutation_importance(model: PredictorModel, x, y, repeats: int = 5, seed: int = 0) -> np.ndarray:
    """Mean increase of the overall MSE when one feature column is shuffled."""
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    base = float(np.mean(evaluate_mse(model, x, y)))
    rng = make_rng(seed, "permutation")
    out = np.zeros(x.shape[1])
    for j in range(x.shape[1]):
        acc = 0.0
        for _ in range(repeats):
            xp = x.copy()
            xp[:, j] = x[rng.permutation(len(x)), j]
            acc += float(np.mean(evaluate_mse(model, xp, y))) - base
        out[j] = acc / repeats
    return out


def top_features(importance, keep_fraction: float) -> np.ndarray:
    """Boolean mask of the ``max(1, round(keep_fraction * n))`` most important features."""
    importance = np.asarray(importance, dtype=float)
    if not 0 < keep_fraction <= 1:
        raise ConfigError("keep_fraction must be in (0, 1]")
    n = len(importance)
    keep = max(1, int(round(keep_fraction * n)))
    order = np.lexsort((np.arange(n), -importance))[:keep]
    mask = np.zeros(n, dtype=bool)
    mask[order] = True
    return mask


@dataclass
class PruneResult:
    keep_fraction: float
    mask: np.ndarray
    model: PredictorModel
    mse: np.ndarray

    @property
    def overhead_reduction(self) -> float:
        return 1.0 - self.keep_fraction


def prune_and_retrain(x_train, y_train, x_val, y_val, x_test, y_test, importance, keep_fraction: float,
                      config: TrainConfig, hidden_width: int | None = None) -> PruneResult:
    """Retrain from scratch on the top features and report per-output test MSE."""
    mask = top_features(importance, keep_fraction)
    xv = None if x_val is None else np.asarray(x_val)[:, mask]
    model, _ = fit(np.asarray(x_train)[:, mask], y_train, xv, y_val, config, hidden_width=hidden_width)
    return PruneResult(keep_fraction, mask, model, evaluate_mse(model, np.asarray(x_test)[:, mask], y_test))


# -------------------------------------------------------------- checkpoints

def save_checkpoint(model: PredictorModel, path) -> None:
    """Binary layout (little-endian)::

        8s   magic b"CBADNN\\x00\\x01"
        u32  format version
        u32  n = meta JSON length, then n bytes of UTF-8 JSON
        u32  number of weight layers K
        u32  K + 1 layer widths
        f64  in_shift[w0], in_scale[w0]
        per layer: f64 W (fan_in x fan_out, row-major), f64 b (fan_out)
    """
    meta = json.dumps(model.meta | {"seed": model.seed}, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(meta)))
    buf.write(meta)
    widths = model.layer_widths
    buf.write(struct.pack("<I", len(model.weights)))
    buf.write(struct.pack(f"<{len(widths)}I", *widths))
    buf.write(np.asarray(model.in_shift, "<f8").tobytes())
    buf.write(np.asarray(model.in_scale, "<f8").tobytes())
    for w, b in zip(model.weights, model.biases):
        buf.write(np.ascontiguousarray(w, "<f8").tobytes())
        buf.write(np.asarray(b, "<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> PredictorModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise DataFormatError("not a predictor checkpoint (bad magic)", path)
    try:
        version, n = struct.unpack_from("<II", data, 8)
        if version != CHECKPOINT_VERSION:
            raise DataFormatError(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}", path)
        pos = 16
        meta = json.loads(data[pos:pos + n].decode())
        pos += n
        (k,) = struct.unpack_from("<I", data, pos)
        pos += 4
        widths = struct.unpack_from(f"<{k + 1}I", data, pos)
        pos += 4 * (k + 1)

        def take(count):
            nonlocal pos
            arr = np.frombuffer(data, "<f8", count, pos).astype(float)
            pos += 8 * count
            return arr

        shift = take(widths[0])
        scale = take(widths[0])
        weights, biases = [], []
        for fi, fo in zip(widths[:-1], widths[1:]):
            weights.append(take(fi * fo).reshape(fi, fo))
            biases.append(take(fo))
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"truncated or corrupt checkpoint: {exc}", path) from None
    if pos != len(data):
        raise DataFormatError("trailing bytes after checkpoint payload", path)
    seed = meta.pop("seed", 0)
    return PredictorModel(weights, biases, shift, scale, seed, meta)
