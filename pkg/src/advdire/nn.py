"""Minimal layer primitives with explicit backward passes.

Every forward function returns ``(output, cache)`` and has a matching
``*_backward(grad_out, cache)`` returning gradients for its inputs and
parameters. All arithmetic is float64 numpy, which keeps runs bit-identical
for a fixed seed and lets finite-difference checks run at tight tolerances.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

Params = dict[str, np.ndarray]


# ---------------------------------------------------------------------------
# initializers


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def zeros(shape: tuple[int, ...]) -> np.ndarray:
    return np.zeros(shape, dtype=np.float64)


# ---------------------------------------------------------------------------
# dense


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """y = x @ w + b over the last axis of x."""
    y = x @ w + b
    return y, (x, w)


def dense_backward(dy: np.ndarray, cache):
    x, w = cache
    dx = dy @ w.T
    dw = x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    return dx, dw, db


# ---------------------------------------------------------------------------
# convolution (im2col)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 1):
    """2-D cross-correlation. x: (N,C,H,W), w: (F,C,kh,kw), b: (F,)."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh, ow, c * kh * kw)
    y = cols @ w.reshape(f, -1).T + b
    return y.transpose(0, 3, 1, 2), (cols, w, x.shape, stride, pad)


def conv2d_backward(dy: np.ndarray, cache):
    cols, w, x_shape, stride, pad = cache
    n, c, h, wd = x_shape
    f, _, kh, kw = w.shape
    dyt = dy.transpose(0, 2, 3, 1)  # (N, oh, ow, F)
    oh, ow = dyt.shape[1], dyt.shape[2]
    db = dyt.sum(axis=(0, 1, 2))
    dw = (dyt.reshape(-1, f).T @ cols.reshape(-1, c * kh * kw)).reshape(f, c, kh, kw)
    dcols = (dyt @ w.reshape(f, -1)).reshape(n, oh, ow, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    dx = dxp[:, :, pad : pad + h, pad : pad + wd]
    return dx, dw, db


# ---------------------------------------------------------------------------
# pointwise / normalization


def relu(x: np.ndarray):
    return np.maximum(x, 0.0), (x,)


def relu_backward(dy: np.ndarray, cache):
    (x,) = cache
    return dy * (x > 0.0)


def layernorm(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float = 1e-6):
    """Normalize over the last axis, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv, g)


def layernorm_backward(dy: np.ndarray, cache):
    xhat, inv, g = cache
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    return dx, dg, db


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(dy: np.ndarray, y: np.ndarray, axis: int = -1) -> np.ndarray:
    return y * (dy - (dy * y).sum(axis=axis, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy (nats) of 2-class logits against int labels.

    Returns (loss, probs, dlogits) where dlogits is the gradient of the mean
    loss, i.e. (softmax(logits) - onehot) / N.
    """
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = -logp[np.arange(n), labels].mean()
    probs = np.exp(logp)
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, probs, dlogits


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adaptive-moment optimizer over a dict of named parameter arrays."""

    def __init__(
        self,
        params: Params,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Params) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            mhat = self.m[k] / bias1
            vhat = self.v[k] / bias2
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def add_grads(into: Params, other: Params, scale: float = 1.0) -> Params:
    """Accumulate ``scale * other`` into ``into`` (missing keys are copied)."""
    for k, g in other.items():
        if k in into:
            into[k] = into[k] + scale * g
        else:
            into[k] = scale * g
    return into
