"""Elementwise activations, row softmax and the dense layer."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import expit

from ..exceptions import NumericError, ShapeError

ACTIVATIONS = ("relu", "identity", "tanh")


def sigmoid(z):
    return expit(z)


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    """Softmax along ``axis`` with the row maximum subtracted first."""
    shifted = scores - np.max(scores, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)
    if not np.all(np.isfinite(out)):
        raise NumericError("softmax produced non-finite weights")
    return out


def softmax_backward(grad_out: np.ndarray, weights: np.ndarray, axis: int = -1) -> np.ndarray:
    """Vector-Jacobian product of softmax, J = diag(a) - a a^T applied row-wise."""
    return weights * (grad_out - np.sum(grad_out * weights, axis=axis, keepdims=True))


class DenseCache(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    activation: str


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "tanh":
        return np.tanh(z)
    if activation == "identity":
        return z
    raise ValueError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")


def dense_forward(x, W, b, activation: str = "identity"):
    """y = act(x W^T + b) for W of shape (out, in). Returns (y, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ShapeError(f"dense: x {x.shape}, W {W.shape}, b {b.shape} do not agree")
    y = _activate(x @ W.T + b, activation)
    return y, DenseCache(x, y, activation)


def dense_backward(grad_y, cache: DenseCache, W):
    """Returns (grad_x, grad_W, grad_b), parameter grads summed over leading axes."""
    if np.shape(grad_y) != cache.y.shape:
        raise ShapeError(f"grad shape {np.shape(grad_y)} != output shape {cache.y.shape}")
    if cache.activation == "relu":
        dz = grad_y * (cache.y > 0)
    elif cache.activation == "tanh":
        dz = grad_y * (1.0 - cache.y * cache.y)
    else:
        dz = grad_y
    dz2 = dz.reshape(-1, dz.shape[-1])
    x2 = cache.x.reshape(-1, cache.x.shape[-1])
    return dz @ W, dz2.T @ x2, dz2.sum(axis=0)
