"""LSTM cell with exact backward pass.

Gate order in stacked matrices is input, forget, output, candidate
(i, f, o, g). Vectors may carry a leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import List, NamedTuple, Optional

import numpy as np

from ..exceptions import ShapeError
from .layers import sigmoid

GATES = ("i", "f", "o", "g")


@dataclass
class LstmCellParams:
    W_ix: np.ndarray
    W_ih: np.ndarray
    b_i: np.ndarray
    W_fx: np.ndarray
    W_fh: np.ndarray
    b_f: np.ndarray
    W_ox: np.ndarray
    W_oh: np.ndarray
    b_o: np.ndarray
    W_gx: np.ndarray
    W_gh: np.ndarray
    b_g: np.ndarray

    def __post_init__(self):
        d, n = self.W_ix.shape
        for gate in GATES:
            wx = getattr(self, f"W_{gate}x")
            wh = getattr(self, f"W_{gate}h")
            b = getattr(self, f"b_{gate}")
            if wx.shape != (d, n) or wh.shape != (d, d) or b.shape != (d,):
                raise ShapeError(
                    f"gate {gate}: expected W_x {(d, n)}, W_h {(d, d)}, b {(d,)}; "
                    f"got {wx.shape}, {wh.shape}, {b.shape}"
                )

    @property
    def input_dim(self) -> int:
        return self.W_ix.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_ix.shape[0]

    def stacked(self):
        Wx = np.concatenate([getattr(self, f"W_{g}x") for g in GATES], axis=0)
        Wh = np.concatenate([getattr(self, f"W_{g}h") for g in GATES], axis=0)
        b = np.concatenate([getattr(self, f"b_{g}") for g in GATES])
        return Wx, Wh, b

    @classmethod
    def from_stacked(cls, Wx, Wh, b) -> "LstmCellParams":
        d = Wx.shape[0] // 4
        kw = {}
        for k, g in enumerate(GATES):
            rows = slice(k * d, (k + 1) * d)
            kw[f"W_{g}x"] = Wx[rows]
            kw[f"W_{g}h"] = Wh[rows]
            kw[f"b_{g}"] = b[rows]
        return cls(**kw)

    @classmethod
    def from_dict(cls, params: dict, prefix: str = "") -> "LstmCellParams":
        return cls(**{f.name: params[prefix + f.name] for f in fields(cls)})

    def to_dict(self, prefix: str = "") -> dict:
        return {prefix + f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmCellParams":
        d, n = hidden_dim, input_dim
        return cls.from_stacked(np.zeros((4 * d, n)), np.zeros((4 * d, d)), np.zeros(4 * d))


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


class LstmCache(NamedTuple):
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray


def _step(x, h_prev, c_prev, Wx, Wh, b):
    d = Wh.shape[1]
    z = x @ Wx.T + h_prev @ Wh.T + b
    i = sigmoid(z[..., :d])
    f = sigmoid(z[..., d:2 * d])
    o = sigmoid(z[..., 2 * d:3 * d])
    g = np.tanh(z[..., 3 * d:])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, LstmCache(x, h_prev, c_prev, i, f, o, g, tanh_c)


def _step_backward(dh, dc, cache: LstmCache, Wx, Wh):
    i, f, o, g, tanh_c = cache.i, cache.f, cache.o, cache.g, cache.tanh_c
    dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.concatenate(
        [
            dc * g * i * (1.0 - i),
            dc * cache.c_prev * f * (1.0 - f),
            dh * tanh_c * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ],
        axis=-1,
    )
    dz2 = dz.reshape(-1, dz.shape[-1])
    dWx = dz2.T @ cache.x.reshape(-1, cache.x.shape[-1])
    dWh = dz2.T @ cache.h_prev.reshape(-1, cache.h_prev.shape[-1])
    db = dz2.sum(axis=0)
    return dz @ Wx, dz @ Wh, dc * f, dWx, dWh, db


def lstm_cell_forward(x_t: np.ndarray, state: LstmState, p: LstmCellParams):
    """One step of the gated recurrence. Returns the new state and a cache for backward."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape[-1] != p.input_dim:
        raise ShapeError(f"input has {x_t.shape[-1]} features, cell expects {p.input_dim}")
    if state.h.shape[-1] != p.hidden_dim or state.c.shape[-1] != p.hidden_dim:
        raise ShapeError(f"state width must be {p.hidden_dim}")
    h, c, cache = _step(x_t, state.h, state.c, *p.stacked())
    return LstmState(h, c), cache


def lstm_cell_backward(grad_h, grad_c, cache: LstmCache, p: LstmCellParams):
    """Gradients of one cell step.

    Returns ``(grad_x, grad_h_prev, grad_c_prev, grad_params)`` where
    ``grad_params`` is an :class:`LstmCellParams` of gradients, summed over
    any batch axis.
    """
    if not isinstance(cache, LstmCache):
        raise ShapeError("cache does not come from lstm_cell_forward")
    expect = cache.h_prev.shape
    if np.shape(grad_h) != expect or np.shape(grad_c) != expect:
        raise ShapeError(f"upstream gradients must have shape {expect}")
    if cache.x.shape[-1] != p.input_dim or expect[-1] != p.hidden_dim:
        raise ShapeError("cache does not match the cell parameters")
    Wx, Wh, _ = p.stacked()
    dx, dh_prev, dc_prev, dWx, dWh, db = _step_backward(grad_h, grad_c, cache, Wx, Wh)
    return dx, dh_prev, dc_prev, LstmCellParams.from_stacked(dWx, dWh, db)


class SequenceCache(NamedTuple):
    steps: List[LstmCache]
    reverse: bool


def lstm_forward(X: np.ndarray, p: LstmCellParams, reverse: bool = False,
                 state: Optional[LstmState] = None):
    """Unroll the cell over axis -2 of ``X`` (shape (..., T, n)) from a zero state.

    Returns hidden states (..., T, d) in input order and a cache. With
    ``reverse`` the recurrence runs from the last step to the first.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != p.input_dim:
        raise ShapeError(f"input has {X.shape[-1]} features, cell expects {p.input_dim}")
    T = X.shape[-2]
    lead = X.shape[:-2]
    Wx, Wh, b = p.stacked()
    if state is None:
        h = np.zeros(lead + (p.hidden_dim,))
        c = np.zeros(lead + (p.hidden_dim,))
    else:
        h, c = state
    H = np.empty(lead + (T, p.hidden_dim))
    steps = []
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        h, c, cache = _step(X[..., t, :], h, c, Wx, Wh, b)
        H[..., t, :] = h
        steps.append(cache)
    return H, SequenceCache(steps, reverse)


def lstm_backward(dH: np.ndarray, cache: SequenceCache, p: LstmCellParams):
    """Backpropagate through :func:`lstm_forward`. Returns (dX, grad_params)."""
    T = len(cache.steps)
    if dH.shape[-2] != T or dH.shape[-1] != p.hidden_dim:
        raise ShapeError(f"dH shape {dH.shape} does not match cached sequence (T={T}, d={p.hidden_dim})")
    Wx, Wh, _ = p.stacked()
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(Wx.shape[0])
    lead = dH.shape[:-2]
    dX = np.empty(lead + (T, p.input_dim))
    dh = np.zeros(lead + (p.hidden_dim,))
    dc = np.zeros_like(dh)
    order = list(range(T - 1, -1, -1)) if cache.reverse else list(range(T))
    for t, step in zip(reversed(order), reversed(cache.steps)):
        dx, dh, dc, gWx, gWh, gb = _step_backward(dh + dH[..., t, :], dc, step, Wx, Wh)
        dX[..., t, :] = dx
        dWx += gWx
        dWh += gWh
        db += gb
    return dX, LstmCellParams.from_stacked(dWx, dWh, db)
