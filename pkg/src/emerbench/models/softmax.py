"""Softmax classifiers trained by gradient descent, written out by hand.

``train_linear_softmax`` is full-batch multinomial logistic regression with
L2; ``train_mlp`` is a tanh MLP trained with mini-batches. With no hidden
layers and full batches the two follow the same trajectory.
"""
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import NonFiniteLoss, SingleClassTrainSet
from ..metrics import confusion_metrics
from .base import EpochRecord, ModelRun, Standardizer, select_epoch

OUTPUT_INIT_SCALE = 0.01


@dataclass(frozen=True)
class LinearConfig:
    lr: float = 0.5
    epochs: int = 200
    l2: float = 1e-4
    seed: int = 0


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (32,)
    lr: float = 0.1
    epochs: int = 100
    batch_size: int = 32  # 0 or None: full batch
    l2: float = 1e-4
    seed: int = 0


def _check_train(y, n_classes):
    y = np.asarray(y, dtype=np.int64)
    if np.unique(y).size < 2:
        raise SingleClassTrainSet(f"training set holds a single class ({np.unique(y).tolist()})")
    return y, int(n_classes if n_classes is not None else y.max() + 1)


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _one_hot(y, k):
    out = np.zeros((y.size, k))
    out[np.arange(y.size), y] = 1.0
    return out


def _ce(p, Y):
    return float(-np.mean(np.sum(Y * np.log(np.clip(p, 1e-300, None)), axis=1)))


def _val_record(epoch, loss, params, Xv, yv, k):
    pred = forward(params, Xv)[0].argmax(axis=1)
    m, _ = confusion_metrics(pred, yv, k)
    return EpochRecord(epoch, loss, m.accuracy, m.macro_f1)


def _snapshot(params, std):
    snap = {k: v.copy() for k, v in params.items()}
    snap["input_mean"] = std.mean.copy()
    snap["input_scale"] = std.scale.copy()
    return snap


def train_linear_softmax(train, val, config: LinearConfig = LinearConfig(), n_classes=None) -> ModelRun:
    X, y = train
    y, k = _check_train(y, n_classes)
    std = Standardizer.fit(X)
    Z = std(X)
    Zv = std(val[0])
    n, d = Z.shape
    rng = np.random.default_rng(config.seed)
    W = OUTPUT_INIT_SCALE * rng.standard_normal((d, k))
    b = np.zeros(k)
    Y = _one_hot(y, k)
    history, best_f1, best = [], -1.0, None
    for epoch in range(1, config.epochs + 1):
        p = _softmax(Z @ W + b)
        loss = _ce(p, Y) + 0.5 * config.l2 * float(np.sum(W * W))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"linear softmax diverged at epoch {epoch} (lr={config.lr})")
        g = (p - Y) / n
        W = W - config.lr * (Z.T @ g + config.l2 * W)
        b = b - config.lr * g.sum(axis=0)
        params = {"W0": W, "b0": b}
        rec = _val_record(epoch, loss, params, Zv, np.asarray(val[1]), k)
        history.append(rec)
        if rec.val_f1 > best_f1:
            best_f1, best = rec.val_f1, _snapshot(params, std)
    return ModelRun("linear", history, select_epoch(history), config.seed, best, asdict(config))


def init_params(sizes, rng):
    params = {}
    for i, (d_in, d_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        scale = OUTPUT_INIT_SCALE if last else np.sqrt(1.0 / d_in)
        params[f"W{i}"] = scale * rng.standard_normal((d_in, d_out))
        params[f"b{i}"] = np.zeros(d_out)
    return params


def _n_layers(params):
    return sum(1 for name in params if name.startswith("W"))


def forward(params, Z):
    """Return ``(logits, activations)``; activations[0] is the input."""
    acts = [Z]
    h = Z
    n_layers = _n_layers(params)
    for i in range(n_layers):
        a = h @ params[f"W{i}"] + params[f"b{i}"]
        h = a if i == n_layers - 1 else np.tanh(a)
        acts.append(h)
    return h, acts


def loss_and_grads(params, Z, Y, l2):
    """Mean cross-entropy plus ``l2/2 * sum ||W||^2`` and its gradients (backprop)."""
    n_layers = _n_layers(params)
    logits, acts = forward(params, Z)
    p = _softmax(logits)
    loss = _ce(p, Y) + 0.5 * l2 * sum(float(np.sum(params[f"W{i}"] ** 2)) for i in range(n_layers))
    grads = {}
    delta = (p - Y) / Z.shape[0]
    for i in range(n_layers - 1, -1, -1):
        grads[f"W{i}"] = acts[i].T @ delta + l2 * params[f"W{i}"]
        grads[f"b{i}"] = delta.sum(axis=0)
        if i:
            delta = (delta @ params[f"W{i}"].T) * (1.0 - acts[i] ** 2)
    return loss, grads


def train_mlp(train, val, config: MlpConfig = MlpConfig(), n_classes=None) -> ModelRun:
    X, y = train
    y, k = _check_train(y, n_classes)
    std = Standardizer.fit(X)
    Z = std(X)
    Zv = std(val[0])
    n, d = Z.shape
    rng = np.random.default_rng(config.seed)
    params = init_params([d, *config.hidden, k], rng)
    Y = _one_hot(y, k)
    batch = config.batch_size or n
    history, best_f1, best = [], -1.0, None
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n) if batch < n else np.arange(n)
        losses = []
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            loss, grads = loss_and_grads(params, Z[idx], Y[idx], config.l2)
            if not np.isfinite(loss):
                worst = max(float(np.abs(v).max()) for v in params.values())
                raise NonFiniteLoss(
                    f"MLP diverged at epoch {epoch}, batch starting {start}: loss={loss}, lr={config.lr}, max|param|={worst:.3g}"
                )
            losses.append(loss)
            for name in params:
                params[name] = params[name] - config.lr * grads[name]
        rec = _val_record(epoch, float(np.mean(losses)), params, Zv, np.asarray(val[1]), k)
        history.append(rec)
        if rec.val_f1 > best_f1:
            best_f1, best = rec.val_f1, _snapshot(params, std)
    cfg = asdict(config)
    cfg["hidden"] = list(config.hidden)
    return ModelRun("mlp", history, select_epoch(history), config.seed, best, cfg)


def predict(run: ModelRun, X):
    """Class predictions of the selected checkpoint."""
    p = run.params
    Z = (np.asarray(X, dtype=np.float64) - p["input_mean"]) / p["input_scale"]
    layers = {k: v for k, v in p.items() if k[0] in "Wb" and k[1:].isdigit()}
    return forward(layers, Z)[0].argmax(axis=1)
