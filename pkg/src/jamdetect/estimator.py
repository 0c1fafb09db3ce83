"""scikit-learn style wrappers around the windowing, scaling and autoencoder code."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .detect import Threshold, calibrate_threshold, classify, window_errors
from .exceptions import ArgumentError
from .model import ModelConfig, forward, init_params, load_checkpoint, save_params
from .signal import NormStats, fit_normalizer, window_stream
from .train import TrainingConfig, split_validation, train, validation_loss


def check_windows(X, seq_len=None, n_features=None) -> np.ndarray:
    """Validate a (N, T, n) batch of windows and return it as float64."""
    if hasattr(X, "values") and not isinstance(X, np.ndarray):
        X = X.values
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_all_finite=True)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ArgumentError(f"expected windows of shape (N, T, n), got {X.shape}")
    if seq_len is not None and X.shape[1] != seq_len:
        raise ArgumentError(f"windows have length {X.shape[1]}, estimator was fit on {seq_len}")
    if n_features is not None and X.shape[2] != n_features:
        raise ArgumentError(f"windows have {X.shape[2]} features, estimator was fit on {n_features}")
    return X


class StreamWindower(TransformerMixin, BaseEstimator):
    """Turn an :class:`~jamdetect.signal.IQStream` into an (N, T, 2) window array."""

    def __init__(self, seq_len=10, stride=None):
        self.seq_len = seq_len
        self.stride = stride

    def fit(self, stream=None, y=None):
        return self

    def transform(self, stream):
        return window_stream(stream, self.seq_len, self.stride).values


class WindowScaler(TransformerMixin, BaseEstimator):
    """Per-feature standardization over every element of every window."""

    def fit(self, X, y=None):
        X = check_windows(X)
        stats = fit_normalizer(X)
        self.mean_ = stats.mean
        self.std_ = stats.std
        self.n_features_in_ = X.shape[2]
        return self

    @property
    def stats_(self) -> NormStats:
        check_is_fitted(self, ["mean_", "std_"])
        return NormStats(self.mean_, self.std_)

    @classmethod
    def from_stats(cls, stats: NormStats) -> "WindowScaler":
        scaler = cls()
        scaler.mean_, scaler.std_ = stats.mean.copy(), stats.std.copy()
        scaler.n_features_in_ = stats.mean.size
        return scaler

    def transform(self, X):
        check_is_fitted(self, ["mean_", "std_"])
        X = check_windows(X, n_features=self.n_features_in_)
        return (X - self.mean_) / self.std_

    def inverse_transform(self, X):
        check_is_fitted(self, ["mean_", "std_"])
        X = check_windows(X, n_features=self.n_features_in_)
        return X * self.std_ + self.mean_


class AttentionLSTMAutoencoder(BaseEstimator):
    """Self-attention LSTM autoencoder used as a reconstruction-error anomaly detector.

    ``fit`` trains on normal windows (rows with ``y == 1`` are dropped when
    labels are given) and calibrates ``threshold_`` at
    ``threshold_percentile`` of the held-out validation errors. ``predict``
    returns 1 for windows whose error exceeds the threshold and 0 otherwise.

    Inputs are (N, seq_len, n_features) arrays, normally already scaled by
    :class:`WindowScaler`.
    """

    def __init__(self, seq_len=10, encoder_units=(50, 25), num_heads=4, key_dim=50,
                 attention_variant="scaled_dot_product", decoder_order="forward",
                 batch_size=100, epochs=50, learning_rate=1e-3, corruption_sigma=0.05,
                 validation_fraction=0.1, patience=None, threshold_percentile=99.0,
                 random_state=0, verbose=False):
        self.seq_len = seq_len
        self.encoder_units = encoder_units
        self.num_heads = num_heads
        self.key_dim = key_dim
        self.attention_variant = attention_variant
        self.decoder_order = decoder_order
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.corruption_sigma = corruption_sigma
        self.validation_fraction = validation_fraction
        self.patience = patience
        self.threshold_percentile = threshold_percentile
        self.random_state = random_state
        self.verbose = verbose

    def _model_config(self, n_features: int) -> ModelConfig:
        return ModelConfig(input_dim=n_features, seq_len=self.seq_len,
                           encoder_units=list(self.encoder_units), num_heads=self.num_heads,
                           key_dim=self.key_dim, attention_variant=self.attention_variant,
                           decoder_order=self.decoder_order)

    def _train_config(self) -> TrainingConfig:
        return TrainingConfig(batch_size=self.batch_size, epochs=self.epochs,
                              learning_rate=self.learning_rate,
                              corruption_sigma=self.corruption_sigma,
                              validation_fraction=self.validation_fraction,
                              patience=self.patience)

    def fit(self, X, y=None):
        X = check_windows(X, seq_len=self.seq_len)
        if y is not None:
            y = np.asarray(y).ravel()
            if y.shape[0] != X.shape[0]:
                raise ArgumentError("y must have one label per window")
            X = X[y == 0]
        if X.shape[0] == 0:
            raise ArgumentError("no training data: every window is labeled anomalous")
        cfg = self._model_config(X.shape[2])
        tcfg = self._train_config()
        seed = int(self.random_state)
        self.params_, self.history_ = train(X, cfg, tcfg, seed, verbose=self.verbose)
        self.config_ = cfg
        self.n_features_in_ = X.shape[2]
        train_idx, val_idx = split_validation(X.shape[0], tcfg.validation_fraction, seed)
        self.validation_indices_ = val_idx
        calib = X[val_idx] if val_idx.size else X[train_idx]
        self.threshold_ = calibrate_threshold(window_errors(calib, self.params_, cfg),
                                              self.threshold_percentile)
        return self

    @property
    def model_(self):
        return self.params_, self.config_

    def reconstruct(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_windows(X, self.config_.seq_len, self.n_features_in_)
        return forward(X, self.params_, self.config_)

    def score_samples(self, X) -> np.ndarray:
        """Reconstruction error per window (larger means more anomalous)."""
        check_is_fitted(self, "params_")
        X = check_windows(X, self.config_.seq_len, self.n_features_in_)
        return window_errors(X, self.params_, self.config_)

    def decision_function(self, X) -> np.ndarray:
        """Error minus threshold; positive values are flagged."""
        return self.score_samples(X) - self.threshold_.value

    def predict(self, X) -> np.ndarray:
        return classify(self.score_samples(X), self.threshold_)

    def validation_loss(self, X) -> float:
        check_is_fitted(self, "params_")
        X = check_windows(X, self.config_.seq_len, self.n_features_in_)
        return validation_loss(X, self.params_, self.config_)

    def save(self, path) -> None:
        check_is_fitted(self, "params_")
        meta = {"threshold": self.threshold_.to_dict(),
                "estimator": {k: (list(v) if isinstance(v, tuple) else v)
                              for k, v in self.get_params().items()}}
        save_params(self.params_, path, self.config_, metadata=meta)

    @classmethod
    def load(cls, path) -> "AttentionLSTMAutoencoder":
        params, cfg, meta = load_checkpoint(path)
        est = cls(**meta.get("estimator", {"seq_len": cfg.seq_len}))
        est.params_, est.config_ = params, cfg
        est.n_features_in_ = cfg.input_dim
        if "threshold" in meta:
            est.threshold_ = Threshold.from_dict(meta["threshold"])
        return est

    @classmethod
    def from_params(cls, params, cfg: ModelConfig, threshold=None) -> "AttentionLSTMAutoencoder":
        est = cls(seq_len=cfg.seq_len, encoder_units=tuple(cfg.encoder_units),
                  num_heads=cfg.num_heads, key_dim=cfg.key_dim,
                  attention_variant=cfg.attention_variant, decoder_order=cfg.decoder_order)
        est.params_, est.config_, est.n_features_in_ = params, cfg, cfg.input_dim
        if threshold is not None:
            est.threshold_ = threshold if isinstance(threshold, Threshold) else Threshold(threshold)
        return est

    def init_untrained(self, n_features: int = 2):
        """Set seeded initial parameters without training (for inspection and tests)."""
        self.config_ = self._model_config(n_features)
        self.params_ = init_params(self.config_, int(self.random_state))
        self.n_features_in_ = n_features
        return self
