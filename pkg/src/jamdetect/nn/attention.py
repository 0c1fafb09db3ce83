"""Multi-head scaled dot-product self-attention and an additive-score variant.

Both operate on hidden-state sequences of shape (T, d) or (B, T, d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from ..exceptions import ShapeError
from .layers import softmax, softmax_backward


@dataclass
class AttentionParams:
    """Per-head projections W_q, W_k, W_v of shape (heads, d_model, d_k), output W_o ((heads*d_k), d_model)."""

    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray
    W_o: np.ndarray

    def __post_init__(self):
        if self.W_q.ndim != 3:
            raise ShapeError(f"W_q must be (heads, d_model, d_k), got {self.W_q.shape}")
        h, d, k = self.W_q.shape
        if h < 1 or k < 1:
            raise ShapeError("need at least one head and d_k >= 1")
        if self.W_k.shape != (h, d, k) or self.W_v.shape != (h, d, k):
            raise ShapeError("W_q, W_k and W_v must share a shape")
        if self.W_o.shape != (h * k, d):
            raise ShapeError(f"W_o must be {(h * k, d)}, got {self.W_o.shape}")

    @property
    def num_heads(self) -> int:
        return self.W_q.shape[0]

    @property
    def d_model(self) -> int:
        return self.W_q.shape[1]

    @property
    def d_k(self) -> int:
        return self.W_q.shape[2]

    @classmethod
    def from_dict(cls, params: dict, prefix: str = "") -> "AttentionParams":
        return cls(**{f.name: params[prefix + f.name] for f in fields(cls)})

    def to_dict(self, prefix: str = "") -> dict:
        return {prefix + f.name: getattr(self, f.name) for f in fields(self)}


class AttentionCache(NamedTuple):
    H: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    weights: np.ndarray
    concat: np.ndarray
    squeeze: bool


def _batched(H):
    H = np.asarray(H, dtype=np.float64)
    if H.ndim == 2:
        return H[None], True
    if H.ndim == 3:
        return H, False
    raise ShapeError(f"expected (T, d) or (B, T, d) hidden states, got {H.shape}")


def attention_forward(H: np.ndarray, p: AttentionParams):
    """softmax(Q K^T / sqrt(d_k)) V per head, heads concatenated then projected by W_o."""
    Hb, squeeze = _batched(H)
    if Hb.shape[-1] != p.d_model:
        raise ShapeError(f"hidden width {Hb.shape[-1]} != attention d_model {p.d_model}")
    if Hb.shape[1] < 1:
        raise ShapeError("attention needs T >= 1")
    B, T, _ = Hb.shape
    Hh = Hb[:, None]  # (B, 1, T, d)
    Q = Hh @ p.W_q    # (B, heads, T, d_k)
    K = Hh @ p.W_k
    V = Hh @ p.W_v
    weights = softmax(Q @ K.transpose(0, 1, 3, 2) / math.sqrt(p.d_k))
    heads = weights @ V
    concat = heads.transpose(0, 2, 1, 3).reshape(B, T, p.num_heads * p.d_k)
    A = concat @ p.W_o
    cache = AttentionCache(Hb, Q, K, V, weights, concat, squeeze)
    return (A[0] if squeeze else A), cache


def attention_backward(grad_A: np.ndarray, cache: AttentionCache, p: AttentionParams):
    """Returns (grad_H, grad_params) for :func:`attention_forward`."""
    if not isinstance(cache, AttentionCache):
        raise ShapeError("cache does not come from attention_forward")
    dA = np.asarray(grad_A, dtype=np.float64)
    if cache.squeeze:
        dA = dA[None]
    if dA.shape != cache.H.shape:
        raise ShapeError(f"grad_A shape {np.shape(grad_A)} does not match cached input {cache.H.shape}")
    if cache.concat.shape[-1] != p.W_o.shape[0]:
        raise ShapeError("cache does not match the attention parameters")
    B, T, _ = dA.shape
    heads, dk = p.num_heads, p.d_k

    dW_o = cache.concat.reshape(-1, heads * dk).T @ dA.reshape(-1, dA.shape[-1])
    dHeads = (dA @ p.W_o.T).reshape(B, T, heads, dk).transpose(0, 2, 1, 3)

    dWeights = dHeads @ cache.V.transpose(0, 1, 3, 2)
    dV = cache.weights.transpose(0, 1, 3, 2) @ dHeads
    dS = softmax_backward(dWeights, cache.weights) / math.sqrt(dk)
    dQ = dS @ cache.K
    dK = dS.transpose(0, 1, 3, 2) @ cache.Q

    Ht = cache.H.transpose(0, 2, 1)[:, None]  # (B, 1, d, T)
    dW_q = (Ht @ dQ).sum(axis=0)
    dW_k = (Ht @ dK).sum(axis=0)
    dW_v = (Ht @ dV).sum(axis=0)
    dH = (dQ @ p.W_q.transpose(0, 2, 1) + dK @ p.W_k.transpose(0, 2, 1)
          + dV @ p.W_v.transpose(0, 2, 1)).sum(axis=1)
    grads = AttentionParams(dW_q, dW_k, dW_v, dW_o)
    return (dH[0] if cache.squeeze else dH), grads


@dataclass
class AdditiveScorerParams:
    """One-hidden-layer tanh scorer e_tj = v . tanh(W_q h_t + W_k h_j + b)."""

    W_q: np.ndarray
    W_k: np.ndarray
    b: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u, d = self.W_q.shape
        if self.W_k.shape != (u, d) or self.b.shape != (u,) or self.v.shape != (u,):
            raise ShapeError("additive scorer shapes do not agree")

    @property
    def d_model(self) -> int:
        return self.W_q.shape[1]

    @classmethod
    def from_dict(cls, params: dict, prefix: str = "") -> "AdditiveScorerParams":
        return cls(**{f.name: params[prefix + f.name] for f in fields(cls)})

    def to_dict(self, prefix: str = "") -> dict:
        return {prefix + f.name: getattr(self, f.name) for f in fields(self)}


class AdditiveCache(NamedTuple):
    H: np.ndarray
    Z: np.ndarray
    weights: np.ndarray
    squeeze: bool


def additive_attention_forward(H: np.ndarray, p: AdditiveScorerParams):
    """Context vectors c_t = sum_j alpha_tj h_j with alpha the row softmax of the scores."""
    Hb, squeeze = _batched(H)
    if Hb.shape[-1] != p.d_model:
        raise ShapeError(f"hidden width {Hb.shape[-1]} != scorer width {p.d_model}")
    if Hb.shape[1] < 1:
        raise ShapeError("attention needs T >= 1")
    Uq = Hb @ p.W_q.T
    Uk = Hb @ p.W_k.T
    Z = np.tanh(Uq[:, :, None, :] + Uk[:, None, :, :] + p.b)  # (B, T, T, u)
    weights = softmax(Z @ p.v)
    C = weights @ Hb
    cache = AdditiveCache(Hb, Z, weights, squeeze)
    return (C[0] if squeeze else C), cache


def additive_attention_backward(grad_C: np.ndarray, cache: AdditiveCache, p: AdditiveScorerParams):
    if not isinstance(cache, AdditiveCache):
        raise ShapeError("cache does not come from additive_attention_forward")
    dC = np.asarray(grad_C, dtype=np.float64)
    if cache.squeeze:
        dC = dC[None]
    if dC.shape != cache.H.shape:
        raise ShapeError(f"grad shape {np.shape(grad_C)} does not match cached input {cache.H.shape}")
    H, Z, W = cache.H, cache.Z, cache.weights
    dH = W.transpose(0, 2, 1) @ dC
    dE = softmax_backward(dC @ H.transpose(0, 2, 1), W)
    dv = np.einsum("btj,btju->u", dE, Z)
    dPre = dE[..., None] * p.v * (1.0 - Z * Z)
    db = dPre.sum(axis=(0, 1, 2))
    dUq = dPre.sum(axis=2)
    dUk = dPre.sum(axis=1)
    dW_q = dUq.reshape(-1, dUq.shape[-1]).T @ H.reshape(-1, H.shape[-1])
    dW_k = dUk.reshape(-1, dUk.shape[-1]).T @ H.reshape(-1, H.shape[-1])
    dH = dH + dUq @ p.W_q + dUk @ p.W_k
    grads = AdditiveScorerParams(dW_q, dW_k, db, dv)
    return (dH[0] if cache.squeeze else dH), grads
