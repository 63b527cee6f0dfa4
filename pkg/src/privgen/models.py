"""Prediction functions with exact per-sample gradients.

Two architectures: (multinomial) logistic regression and a one-hidden-layer
tanh MLP.  Binary logistic regression uses a single sigmoid logit; everything
else is softmax cross-entropy.  Gradients are analytic (manual backprop for
the MLP), vectorized per example.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class Arch:
    kind: str                 # "logreg" | "mlp"
    d: int
    classes: int = 2
    hidden: int = 0           # mlp only; activation is tanh

    @property
    def num_params(self):
        if self.kind == "logreg":
            if self.classes == 2:
                return self.d + 1
            return self.classes * (self.d + 1)
        if self.kind == "mlp":
            out = 1 if self.classes == 2 else self.classes
            return self.hidden * (self.d + 1) + out * (self.hidden + 1)
        raise ValueError(f"unknown arch kind {self.kind!r}")


def logreg(d, classes=2):
    return Arch("logreg", d, classes)


def mlp(d, hidden, classes=2):
    return Arch("mlp", d, classes, hidden)


@dataclass(frozen=True)
class ModelParams:
    arch: Arch
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        object.__setattr__(self, "theta", theta)
        if theta.shape != (self.arch.num_params,):
            raise ValueError(
                f"theta length {theta.shape} does not match arch "
                f"({self.arch.num_params} params)")
        if not np.all(np.isfinite(theta)):
            raise ValueError("non-finite parameter values")

    def with_theta(self, theta):
        return replace(self, theta=theta)


def init_params(arch, rng=None, scale=0.0):
    theta = np.zeros(arch.num_params)
    if rng is not None and scale > 0:
        theta = scale * rng.normal(arch.num_params)
    return ModelParams(arch, theta)


def _unpack_mlp(p):
    a = p.arch
    out = 1 if a.classes == 2 else a.classes
    th = p.theta
    i = 0
    w1 = th[i:i + a.hidden * a.d].reshape(a.hidden, a.d); i += a.hidden * a.d
    b1 = th[i:i + a.hidden]; i += a.hidden
    w2 = th[i:i + out * a.hidden].reshape(out, a.hidden); i += out * a.hidden
    b2 = th[i:i + out]
    return w1, b1, w2, b2


def _logits(p, x):
    """Raw logits for a batch x of shape (b, d)."""
    a = p.arch
    if a.kind == "logreg":
        if a.classes == 2:
            w, b = p.theta[:a.d], p.theta[a.d]
            return x @ w + b
        wb = p.theta.reshape(a.classes, a.d + 1)
        return x @ wb[:, :a.d].T + wb[:, a.d]
    w1, b1, w2, b2 = _unpack_mlp(p)
    h = np.tanh(x @ w1.T + b1)
    z = h @ w2.T + b2
    return z[:, 0] if a.classes == 2 else z


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba_batch(p, x):
    """Class-probability matrix (b, classes) for a feature batch (b, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != p.arch.d:
        raise ValueError(f"expected {p.arch.d} features, got {x.shape[1]}")
    z = _logits(p, x)
    if p.arch.classes == 2:
        p1 = _sigmoid(z)
        return np.column_stack([1.0 - p1, p1])
    return _softmax(z)


def predict_proba(p, x):
    """Probability vector over classes for a single example."""
    return predict_proba_batch(p, np.asarray(x)[None, :])[0]


def positive_proba(p, x):
    """P(class 1) for each row; binary models only."""
    if p.arch.classes != 2:
        raise ValueError("positive_proba requires a binary model")
    return predict_proba_batch(p, x)[:, 1]


def per_sample_loss_grads(p, features, labels):
    """Cross-entropy losses and exact per-example gradients.

    Returns (losses, grads) with grads of shape (batch, |theta|).
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64).ravel()
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    if x.shape[1] != p.arch.d:
        raise ValueError(f"expected {p.arch.d} features, got {x.shape[1]}")
    a = p.arch
    b = x.shape[0]
    eps = 1e-12

    if a.classes == 2:
        z = _logits(p, x)                     # (b,)
        p1 = _sigmoid(z)
        losses = -(y * np.log(p1 + eps) + (1 - y) * np.log(1.0 - p1 + eps))
        dz = p1 - y                           # dL/dz, (b,)
        if a.kind == "logreg":
            grads = np.concatenate([dz[:, None] * x, dz[:, None]], axis=1)
            return losses, grads
        w1, b1, w2, b2 = _unpack_mlp(p)
        pre = x @ w1.T + b1                   # (b, h)
        h = np.tanh(pre)
        # z = h @ w2[0] + b2[0]
        dh = dz[:, None] * w2[0][None, :]     # (b, h)
        dpre = dh * (1.0 - h ** 2)
        g_w1 = dpre[:, :, None] * x[:, None, :]          # (b, h, d)
        g_b1 = dpre
        g_w2 = dz[:, None] * h                           # (b, h)
        g_b2 = dz[:, None]
        grads = np.concatenate(
            [g_w1.reshape(b, -1), g_b1, g_w2, g_b2], axis=1)
        return losses, grads

    z = _logits(p, x)                         # (b, c)
    probs = _softmax(z)
    losses = -np.log(probs[np.arange(b), y] + eps)
    dz = probs.copy()
    dz[np.arange(b), y] -= 1.0                # (b, c)
    if a.kind == "logreg":
        g_w = dz[:, :, None] * x[:, None, :]              # (b, c, d)
        grads = np.concatenate([g_w, dz[:, :, None]], axis=2).reshape(b, -1)
        return losses, grads
    w1, b1, w2, b2 = _unpack_mlp(p)
    pre = x @ w1.T + b1
    h = np.tanh(pre)
    dh = dz @ w2                              # (b, h)
    dpre = dh * (1.0 - h ** 2)
    g_w1 = dpre[:, :, None] * x[:, None, :]
    g_b1 = dpre
    g_w2 = dz[:, :, None] * h[:, None, :]     # (b, c, h)
    g_b2 = dz
    grads = np.concatenate(
        [g_w1.reshape(b, -1), g_b1, g_w2.reshape(b, -1), g_b2], axis=1)
    return losses, grads


def mean_loss(p, features, labels):
    losses, _ = per_sample_loss_grads(p, features, labels)
    return float(losses.mean())


def predict_labels(p, x):
    """Argmax class per row; ties break toward the lowest class index."""
    probs = predict_proba_batch(p, x)
    return np.argmax(probs, axis=1)


def zero_one_loss(p, ds):
    """Misclassification rate of the argmax prediction."""
    pred = predict_labels(p, ds.features)
    return float(np.mean(pred != ds.labels))


def accuracy(p, ds):
    return 1.0 - zero_one_loss(p, ds)


def save_checkpoint(p, path, seed=None, step=None):
    """JSON header (arch, seed, step) plus the flat parameter array."""
    doc = {
        "arch": {"kind": p.arch.kind, "d": p.arch.d,
                 "classes": p.arch.classes, "hidden": p.arch.hidden},
        "seed": seed,
        "step": step,
        "theta": p.theta.tolist(),
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    with open(path) as f:
        doc = json.load(f)
    a = doc["arch"]
    arch = Arch(a["kind"], a["d"], a["classes"], a["hidden"])
    return ModelParams(arch, np.array(doc["theta"])), doc
