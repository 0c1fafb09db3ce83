"""Mean squared reconstruction loss: mean over time of the squared per-step residual norm."""

import numpy as np

from ..exceptions import ShapeError


def _residual(x, x_hat):
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    if x.ndim < 2:
        raise ShapeError(f"expected (T, n) or (B, T, n) arrays, got {x.shape}")
    return x_hat - x


def mse_loss(x, x_hat):
    """(1/T) sum_t ||x_t - x_hat_t||^2.

    For (T, n) inputs returns a float; for (B, T, n) returns the per-window
    losses as a length-B array.
    """
    r = _residual(x, x_hat)
    per_window = np.mean(np.sum(r * r, axis=-1), axis=-1)
    return float(per_window) if r.ndim == 2 else per_window


def mse_loss_grad(x, x_hat):
    """Gradient of :func:`mse_loss` with respect to ``x_hat``: 2 (x_hat - x) / T."""
    r = _residual(x, x_hat)
    return 2.0 * r / r.shape[-2]
