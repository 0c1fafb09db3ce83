"""Numerical kernels: LSTM, attention, dense layers, loss, Adam and a gradient oracle."""

from .adam import AdamState, adam_step
from .attention import (
    AdditiveScorerParams,
    AttentionParams,
    additive_attention_backward,
    additive_attention_forward,
    attention_backward,
    attention_forward,
)
from .gradcheck import finite_difference_gradient, relative_error
from .layers import dense_backward, dense_forward, sigmoid, softmax, softmax_backward
from .loss import mse_loss, mse_loss_grad
from .lstm import (
    LstmCellParams,
    LstmState,
    lstm_backward,
    lstm_cell_backward,
    lstm_cell_forward,
    lstm_forward,
)

__all__ = [
    "AdamState", "adam_step",
    "AdditiveScorerParams", "AttentionParams",
    "additive_attention_backward", "additive_attention_forward",
    "attention_backward", "attention_forward",
    "finite_difference_gradient", "relative_error",
    "dense_backward", "dense_forward", "sigmoid", "softmax", "softmax_backward",
    "mse_loss", "mse_loss_grad",
    "LstmCellParams", "LstmState", "lstm_backward", "lstm_cell_backward",
    "lstm_cell_forward", "lstm_forward",
]
