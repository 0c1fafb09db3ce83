"""Jamming detection on I/Q streams with a self-attention LSTM autoencoder."""

__version__ = "0.1.0"

from .detect import (
    AnomalyReport,
    ErrorSeries,
    Threshold,
    calibrate_threshold,
    classify,
    detect_stream,
    evaluate,
    reconstruction_error,
)
from .estimator import AttentionLSTMAutoencoder, StreamWindower, WindowScaler
from .model import (
    ModelConfig,
    decode,
    encode,
    forward,
    forward_backward,
    init_params,
    load_params,
    save_params,
)
from .signal import (
    IQStream,
    JammerConfig,
    NormStats,
    Window,
    Windows,
    denormalize,
    fit_normalizer,
    generate_baseline,
    inject_jammer,
    normalize,
    window_stream,
)
from .train import TrainingConfig, TrainingHistory, corrupt_sequence, train, train_epoch

__all__ = [
    "AnomalyReport", "ErrorSeries", "Threshold", "calibrate_threshold", "classify",
    "detect_stream", "evaluate", "reconstruction_error",
    "AttentionLSTMAutoencoder", "StreamWindower", "WindowScaler",
    "ModelConfig", "decode", "encode", "forward", "forward_backward", "init_params",
    "load_params", "save_params",
    "IQStream", "JammerConfig", "NormStats", "Window", "Windows", "denormalize",
    "fit_normalizer", "generate_baseline", "inject_jammer", "normalize", "window_stream",
    "TrainingConfig", "TrainingHistory", "corrupt_sequence", "train", "train_epoch",
]
