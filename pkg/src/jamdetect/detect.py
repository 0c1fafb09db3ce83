"""Reconstruction-error scoring, percentile thresholds and detection metrics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.stats import rankdata

from .exceptions import ArgumentError, ConfigError, FormatError
from .model import ModelConfig, ModelParams, forward
from .nn.loss import mse_loss
from .signal import IQStream, NormStats, Windows, normalize, window_stream
from .train import batch_slices

DEFAULT_PERCENTILE = 99.0
REPORT_VERSION = 1


def reconstruction_error(w, x_hat):
    """Per-window mean squared reconstruction error; the training loss on one window."""
    values = w.values if hasattr(w, "values") else w
    return mse_loss(values, x_hat)


def window_errors(X: np.ndarray, params: ModelParams, cfg: ModelConfig,
                  batch_size: int = 1024) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0])
    for sl in batch_slices(X.shape[0], batch_size):
        out[sl] = mse_loss(X[sl], forward(X[sl], params, cfg))
    return out


@dataclass
class Threshold:
    value: float
    percentile: Optional[float] = None
    n_calibration: Optional[int] = None

    def __post_init__(self):
        self.value = float(self.value)
        if not math.isfinite(self.value) or self.value < 0:
            raise ArgumentError(f"threshold must be finite and >= 0, got {self.value}")

    def to_dict(self) -> dict:
        return {"value": self.value, "percentile": self.percentile, "n_calibration": self.n_calibration}

    @classmethod
    def from_dict(cls, d: dict) -> "Threshold":
        return cls(d["value"], d.get("percentile"), d.get("n_calibration"))


def calibrate_threshold(errors_on_normal, percentile: float = DEFAULT_PERCENTILE) -> Threshold:
    """Empirical percentile of normal-data errors, linear interpolation between order statistics."""
    errors = np.asarray(errors_on_normal, dtype=np.float64).ravel()
    if errors.size == 0:
        raise ArgumentError("cannot calibrate a threshold from an empty error list")
    if not 0.0 < percentile <= 100.0:
        raise ArgumentError(f"percentile must lie in (0, 100], got {percentile}")
    value = float(np.percentile(errors, percentile, method="linear"))
    return Threshold(value, float(percentile), int(errors.size))


def classify(error, threshold: Union[Threshold, float]):
    """1 when error > threshold, else 0. Works elementwise on arrays."""
    t = threshold.value if isinstance(threshold, Threshold) else float(threshold)
    if np.ndim(error) == 0:
        return int(error > t)
    return (np.asarray(error) > t).astype(np.uint8)


@dataclass
class ErrorSeries:
    errors: np.ndarray
    origins: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=np.float64)
        self.origins = np.asarray(self.origins, dtype=np.int64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.uint8)
        if np.any(self.errors < 0) or not np.all(np.isfinite(self.errors)):
            raise ArgumentError("errors must be finite and nonnegative")


@dataclass
class AnomalyReport:
    series: ErrorSeries
    threshold: Threshold
    decisions: np.ndarray = None
    metrics: Optional[dict] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.decisions is None:
            self.decisions = classify(self.series.errors, self.threshold)
        self.decisions = np.asarray(self.decisions, dtype=np.uint8)

    def __len__(self) -> int:
        return self.series.errors.size

    @property
    def has_labels(self) -> bool:
        return self.series.labels is not None

    def to_dict(self) -> dict:
        e = self.series.errors
        out = {
            "format": "jamdetect-report",
            "version": REPORT_VERSION,
            "summary": {
                "n_windows": len(self),
                "n_flagged": int(self.decisions.sum()),
                "error_min": float(e.min()),
                "error_mean": float(e.mean()),
                "error_max": float(e.max()),
                **self.info,
            },
            "threshold": self.threshold.to_dict(),
        }
        if self.metrics is not None:
            out["metrics"] = self.metrics
        return out

    def save(self, json_path, csv_path=None) -> None:
        json_path = Path(json_path)
        csv_path = Path(csv_path) if csv_path else json_path.with_suffix(".csv")
        json_path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        labels = self.series.labels
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["window", "origin", "error", "decision", "label"])
            for k in range(len(self)):
                writer.writerow([k, int(self.series.origins[k]), repr(float(self.series.errors[k])),
                                 int(self.decisions[k]), "" if labels is None else int(labels[k])])

    @classmethod
    def load(cls, json_path, csv_path=None) -> "AnomalyReport":
        json_path = Path(json_path)
        csv_path = Path(csv_path) if csv_path else json_path.with_suffix(".csv")
        try:
            doc = json.loads(json_path.read_text())
            threshold = Threshold.from_dict(doc["threshold"])
            summary = doc["summary"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"{json_path}: not a valid report ({exc})") from None
        try:
            with open(csv_path, newline="") as fh:
                rows = list(csv.DictReader(fh))
            errors = [float(r["error"]) for r in rows]
            origins = [int(r["origin"]) for r in rows]
            decisions = [int(r["decision"]) for r in rows]
            raw_labels = [r["label"] for r in rows]
        except (OSError, KeyError, ValueError) as exc:
            raise FormatError(f"{csv_path}: not a valid per-window report ({exc})") from None
        labels = None if not rows or raw_labels[0] == "" else [int(v) for v in raw_labels]
        info = {k: v for k, v in summary.items()
                if k not in ("n_windows", "n_flagged", "error_min", "error_mean", "error_max")}
        return cls(ErrorSeries(errors, origins, labels), threshold, decisions,
                   doc.get("metrics"), info)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney rank statistic; tied scores share their average rank. NaN if one class is absent."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def confusion_metrics(decisions, labels) -> dict:
    d = np.asarray(decisions).astype(bool)
    y = np.asarray(labels).astype(bool)
    if d.shape != y.shape:
        raise ArgumentError("decisions and labels must have the same length")
    tp = int(np.sum(d & y))
    fp = int(np.sum(d & ~y))
    fn = int(np.sum(~d & y))
    tn = int(np.sum(~d & ~y))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    fpr = fp / (fp + tn) if fp + tn else 0.0
    return {"tp": tp, "fp": fp, "tn": tn, "fn": fn, "precision": precision,
            "recall": recall, "f1": f1, "false_positive_rate": fpr}


def evaluate(report: AnomalyReport) -> dict:
    """Precision, recall, F1, FPR, confusion counts and AUC against the report's labels."""
    if not report.has_labels:
        raise ArgumentError("no ground truth: report has no labels")
    metrics = confusion_metrics(report.decisions, report.series.labels)
    auc = roc_auc(report.series.errors, report.series.labels)
    metrics["auc"] = None if math.isnan(auc) else auc
    return metrics


def detect_windows(windows: Windows, params: ModelParams, cfg: ModelConfig,
                   threshold: Threshold, info: Optional[dict] = None) -> AnomalyReport:
    """Score already-normalized windows and build a report (with metrics when labeled)."""
    errors = window_errors(windows.values, params, cfg)
    report = AnomalyReport(ErrorSeries(errors, windows.origins, windows.labels), threshold,
                           info=dict(info or {}))
    if report.has_labels:
        report.metrics = evaluate(report)
    return report


def detect_stream(stream: IQStream, params: ModelParams, cfg: ModelConfig,
                  norm: Optional[NormStats], threshold: Threshold,
                  stride: Optional[int] = None) -> AnomalyReport:
    """Window, normalize, reconstruct, score and classify a stream."""
    if norm is None:
        raise ConfigError("normalization statistics are required for detection")
    if norm.mean.size != cfg.input_dim:
        raise ConfigError(f"normalizer has {norm.mean.size} features, model expects {cfg.input_dim}")
    stride = 1 if stride is None else stride
    windows = normalize(window_stream(stream, cfg.seq_len, stride), norm)
    return detect_windows(windows, params, cfg, threshold,
                          info={"seq_len": cfg.seq_len, "stride": int(stride)})
