"""Fully connected regressor: ReLU hidden layers and a tanh scalar output."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from affectfusion.encoding.modelio import check_doc, flat, unflat
from affectfusion.errors import NumericError, ValidationError
from affectfusion.metrics import ccc

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN = (256, 128, 64)
MAX_LR_HALVINGS = 3
# tanh saturates to exactly +-1 in float64; keep outputs strictly inside
_OUT_BOUND = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class MlpModel:
    """Weights are stored as (fan_out, fan_in) matrices, one per layer."""

    weights: tuple
    biases: tuple

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64).reshape(-1) for b in self.biases)
        if not ws or len(ws) != len(bs):
            raise ValidationError("MLP needs matching, non-empty weight and bias lists")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValidationError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != ws[i - 1].shape[0]:
                raise ValidationError(f"layer {i}: fan-in {w.shape[1]} != previous fan-out {ws[i - 1].shape[0]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {i}: non-finite parameter")
        if ws[-1].shape[0] != 1:
            raise ValidationError(f"output layer must have size 1, got {ws[-1].shape[0]}")
        for a in ws + bs:
            a.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def input_dim(self) -> int:
        return int(self.weights[0].shape[1])

    def params(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def to_json(self) -> dict:
        n = len(self.weights)
        return {
            "format_version": 1,
            "kind": "mlp",
            "layer_sizes": list(self.layer_sizes),
            "activations": ["relu"] * (n - 1) + ["tanh"],
            "weights": [flat(w) for w in self.weights],
            "biases": [flat(b) for b in self.biases],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MlpModel":
        check_doc(doc, "mlp")
        sizes = doc["layer_sizes"]
        ws = [unflat(w, (sizes[i + 1], sizes[i])) for i, w in enumerate(doc["weights"])]
        return cls(tuple(ws), tuple(np.asarray(b, dtype=np.float64) for b in doc["biases"]))


def mlp_init(layer_sizes, seed: int = 0) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValidationError(f"invalid layer sizes {sizes}")
    if sizes[-1] != 1:
        raise ValidationError(f"output size must be 1, got {sizes[-1]}")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return MlpModel(tuple(ws), tuple(bs))


def _forward_batch(model: MlpModel, x: np.ndarray):
    """Pre-activations and activations of every layer for a (B, F) batch."""
    acts = [x]
    pres = []
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        pres.append(z)
        h = np.clip(np.tanh(z), -_OUT_BOUND, _OUT_BOUND) if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return pres, acts


def _check_input(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise ValidationError(f"MLP expects {model.input_dim} features, got {x.shape[-1]}")
    return x


def mlp_forward(model: MlpModel, v) -> float:
    v = _check_input(model, v).reshape(1, -1)
    return float(_forward_batch(model, v)[1][-1][0, 0])


def mlp_forward_batch(model: MlpModel, x) -> np.ndarray:
    x = _check_input(model, x)
    return _forward_batch(model, x.reshape(-1, model.input_dim))[1][-1][:, 0]


def _backward(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Gradients of 0.5 * mean((f(x) - y)**2) and the residual vector."""
    pres, acts = _forward_batch(model, x)
    out = acts[-1][:, 0]
    resid = out - y
    delta = (resid * (1.0 - out * out))[:, None] / x.shape[0]
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i:
            # ReLU derivative taken as 0 at exactly 0
            delta = (delta @ model.weights[i]) * (pres[i - 1] > 0.0)
    return gw, gb, resid


def mlp_gradient(model: MlpModel, v, target: float):
    """Exact gradient of ``0.5 * (forward(v) - target)**2``.

    Returns ``(weight_grads, bias_grads)`` shaped like the model's parameters.
    """
    v = _check_input(model, v).reshape(1, -1)
    gw, gb, _ = _backward(model, v, np.array([float(target)]))
    return gw, gb


def sgd_step(model: MlpModel, grads, lr: float, velocity=None, momentum: float = 0.0):
    """One momentum-SGD update; returns the new model and velocity."""
    gw, gb = grads
    if velocity is None:
        velocity = ([np.zeros_like(w) for w in model.weights], [np.zeros_like(b) for b in model.biases])
    vw = [momentum * v - lr * g for v, g in zip(velocity[0], gw)]
    vb = [momentum * v - lr * g for v, g in zip(velocity[1], gb)]
    new = MlpModel(
        tuple(w + d for w, d in zip(model.weights, vw)),
        tuple(b + d for b, d in zip(model.biases, vb)),
    )
    return new, (vw, vb)


def mlp_predict(model: MlpModel, track) -> np.ndarray:
    """Forward pass for every row of a FeatureTrack (or matrix)."""
    x = getattr(track, "vectors", track)
    return mlp_forward_batch(model, np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple = DEFAULT_HIDDEN
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 100
    patience: int | None = 10
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValidationError(f"learning rate must be > 0, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("batch size and epochs must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.patience is not None and self.patience < 1:
            raise ValidationError("patience must be >= 1 or None")
        if any(int(h) < 1 for h in self.hidden):
            raise ValidationError(f"hidden widths must be positive, got {self.hidden}")


@dataclass
class TrainReport:
    train_mse: list = field(default_factory=list)
    dev_ccc: list = field(default_factory=list)
    selected_epoch: int = 0  # 1-based
    wall_time: float = 0.0
    lr_halvings: int = 0

    def log_lines(self) -> list[str]:
        out = ["epoch,train_mse,dev_ccc"]
        for i, (m, c) in enumerate(zip(self.train_mse, self.dev_ccc), start=1):
            out.append(f"{i},{m!r},{c!r}")
        return out


def mlp_train(x_train, y_train, x_dev, y_dev, cfg: TrainConfig = TrainConfig()):
    """Mini-batch momentum SGD on MSE, selecting the epoch with best dev CCC.

    Shuffling is driven by ``cfg.seed`` so equal inputs give bit-identical
    parameters. If an epoch diverges the model is restored to the start of
    that epoch and the learning rate halved, at most three times.
    """
    x = np.asarray(x_train, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.float64).ravel()
    xd = np.asarray(x_dev, dtype=np.float64)
    yd = np.asarray(y_dev, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.size or x.shape[0] == 0:
        raise ValidationError(f"training data shape {x.shape} does not match {y.size} targets")
    if xd.ndim != 2 or xd.shape[0] != yd.size or xd.shape[0] < 2 or xd.shape[1] != x.shape[1]:
        raise ValidationError(f"dev data shape {xd.shape} does not match {yd.size} targets")
    if np.any(np.abs(y) > 1.0):
        raise ValidationError("training targets must lie in [-1, 1]")

    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    model = mlp_init((x.shape[1], *cfg.hidden, 1), seed=int(rng.integers(2**63 - 1)))
    velocity = None
    lr = cfg.lr
    report = TrainReport()
    best_model, best_ccc = model, -np.inf
    since_best = 0
    epoch = 0
    while epoch < cfg.epochs:
        checkpoint = model
        order = rng.permutation(x.shape[0])
        diverged = False
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(0, len(order), cfg.batch_size):
                idx = order[s : s + cfg.batch_size]
                gw, gb, _ = _backward(model, x[idx], y[idx])
                if not all(np.all(np.isfinite(g)) for g in gw + gb):
                    diverged = True
                    break
                try:
                    model, velocity = sgd_step(model, (gw, gb), lr, velocity, cfg.momentum)
                except ValidationError:
                    diverged = True
                    break
            if not diverged:
                mse = float(np.mean((mlp_forward_batch(model, x) - y) ** 2))
                diverged = not np.isfinite(mse)
        if diverged:
            report.lr_halvings += 1
            if report.lr_halvings > MAX_LR_HALVINGS:
                raise NumericError(f"training diverged after {MAX_LR_HALVINGS} learning-rate halvings")
            lr /= 2.0
            logger.warning("epoch %d diverged; restoring checkpoint, lr -> %g", epoch + 1, lr)
            model, velocity = checkpoint, None
            continue
        epoch += 1
        dev_score = ccc(mlp_forward_batch(model, xd), yd)
        report.train_mse.append(mse)
        report.dev_ccc.append(dev_score)
        logger.debug("epoch %d: train mse %.6f, dev ccc %.4f", epoch, mse, dev_score)
        if dev_score > best_ccc:
            best_model, best_ccc = model, dev_score
            report.selected_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if cfg.patience is not None and since_best >= cfg.patience:
                logger.info("early stop at epoch %d (best epoch %d)", epoch, report.selected_epoch)
                break
    report.wall_time = time.perf_counter() - start
    return best_model, report
