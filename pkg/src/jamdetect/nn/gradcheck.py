"""Central finite-difference gradients, used as the oracle for every backward pass."""

from __future__ import annotations

from typing import Callable, Dict, Union

import numpy as np

Params = Union[np.ndarray, Dict[str, np.ndarray]]


def _fd_array(f, theta: np.ndarray, eps: float, rebuild) -> np.ndarray:
    grad = np.zeros_like(theta, dtype=np.float64)
    flat = theta.reshape(-1)
    g = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        up = f(rebuild())
        flat[k] = orig - eps
        down = f(rebuild())
        flat[k] = orig
        g[k] = (up - down) / (2.0 * eps)
    return grad


def finite_difference_gradient(f: Callable[[Params], float], params: Params, eps: float = 1e-5) -> Params:
    """(f(theta + eps e_k) - f(theta - eps e_k)) / (2 eps) for every coordinate k.

    ``params`` is an array or a dict of arrays; the result has the same
    structure. ``params`` itself is not modified.
    """
    if isinstance(params, dict):
        work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        return {k: _fd_array(f, work[k], eps, lambda: work) for k in work}
    work = np.array(params, dtype=np.float64)
    return _fd_array(f, work, eps, lambda: work)


def relative_error(analytic, numeric) -> float:
    """||a - n|| / max(||a||, ||n||), with 0 when both vanish.

    Dicts are compared over the concatenation of all their arrays.
    """
    if isinstance(analytic, dict):
        a = np.concatenate([np.ravel(analytic[k]) for k in sorted(analytic)])
        n = np.concatenate([np.ravel(numeric[k]) for k in sorted(analytic)])
    else:
        a, n = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)
