"""Adam with bias-corrected moment estimates, over dicts of named arrays."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..exceptions import ShapeError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Dict[str, np.ndarray], **kw) -> "AdamState":
        return cls(m={k: np.zeros_like(a) for k, a in params.items()},
                   v={k: np.zeros_like(a) for k, a in params.items()}, **kw)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState):
    """One Adam update. Inputs are left untouched; returns (new_params, new_state)."""
    if params.keys() != grads.keys():
        raise ShapeError(f"parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeError(f"{k}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.get(k)
        v = state.v.get(k)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        elif m.shape != p.shape:
            raise ShapeError(f"{k}: moment shape {m.shape} != parameter shape {p.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_params[k] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_m[k] = m
        new_v[k] = v
    new_state = AdamState(state.lr, state.beta1, state.beta2, state.eps, t, new_m, new_v)
    return new_params, new_state
