"""Command-line front end: generate | train | detect | evaluate | plot.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .detect import AnomalyReport, Threshold, detect_stream, evaluate
from .estimator import AttentionLSTMAutoencoder
from .exceptions import ArgumentError, ConfigError, FormatError, NumericError, ShapeError
from .model import ModelConfig, forward, load_checkpoint
from .plot import (
    PLOT_KINDS,
    error_trace_table,
    histogram_table,
    overlay_table,
    render_error_trace,
    render_histogram,
    render_overlay,
    write_csv,
)
from .signal import (
    IQStream,
    JammerConfig,
    NormStats,
    fit_normalizer,
    generate_baseline,
    inject_jammer,
    normalize,
    read_iq,
    window_stream,
    write_iq,
    write_labels,
)
from .train import TrainingConfig, normal_only

IQ_NAME = "iq.cf32"
LABELS_NAME = "iq.labels"
MANIFEST_NAME = "manifest.json"
CHECKPOINT_NAME = "model.ckpt"
NORM_NAME = "norm.json"
THRESHOLD_NAME = "threshold.json"
HISTORY_NAME = "history.csv"
REPORT_NAME = "report.json"


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def load_config(path) -> dict:
    """Read a JSON or TOML config; the format is chosen by file extension."""
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise CliError(f"config file not found: {path}", 2)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".toml":
            if sys.version_info >= (3, 11):
                import tomllib
            else:
                import tomli as tomllib
            return tomllib.loads(text)
        return json.loads(text)
    except Exception as exc:  # noqa: BLE001 - any parse failure is a config error
        raise CliError(f"cannot parse config {path}: {exc}", 2) from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, config: dict, seed, inputs: dict, outputs) -> None:
    """One manifest per artifact directory; only ``created_at`` varies between identical runs."""
    doc = {
        "tool": "jamdetect",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": {k: {"path": str(v), "sha256": _sha256(Path(v)) if Path(v).is_file() else None}
                   for k, v in inputs.items()},
        "outputs": {name: {"bytes": (out / name).stat().st_size, "sha256": _sha256(out / name)}
                    for name in outputs},
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    (out / MANIFEST_NAME).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _resolve_data(path) -> tuple:
    """Return (iq_path, labels_path or None, sample_rate) for a data directory or .cf32 file."""
    path = Path(path)
    if path.is_dir():
        iq = path / IQ_NAME
        labels = path / LABELS_NAME
        manifest = path / MANIFEST_NAME
    else:
        iq = path
        labels = path.with_suffix(".labels")
        manifest = path.parent / MANIFEST_NAME
    if not iq.is_file():
        raise CliError(f"I/Q file not found: {iq}", 2)
    rate = 1e6
    if manifest.is_file():
        try:
            rate = float(json.loads(manifest.read_text())["config"]["sample_rate_hz"])
        except (KeyError, TypeError, ValueError, json.JSONDecodeError):
            pass
    return iq, (labels if labels.is_file() else None), rate


def _load_stream(path) -> tuple:
    iq, labels, rate = _resolve_data(path)
    return read_iq(iq, rate, labels), iq, labels


# -- generate -----------------------------------------------------------------

GENERATE_KEYS = {"num_samples", "sample_rate_hz", "snr_db", "sps", "rolloff", "seed", "jammers"}


def cmd_generate(args) -> int:
    if args.config is None:
        raise CliError("generate needs --config", 2)
    cfg = load_config(args.config)
    unknown = set(cfg) - GENERATE_KEYS
    if unknown:
        raise CliError(f"unknown generate config keys: {sorted(unknown)}", 2)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    snapshot = {
        "num_samples": cfg.get("num_samples"),
        "sample_rate_hz": float(cfg.get("sample_rate_hz", 1e6)),
        "snr_db": float(cfg.get("snr_db", 20.0)),
        "sps": int(cfg.get("sps", 8)),
        "rolloff": float(cfg.get("rolloff", 0.35)),
        "seed": seed,
        "jammers": cfg.get("jammers", []),
    }
    try:
        jammers = [JammerConfig.from_dict(j) for j in snapshot["jammers"]]
        stream = generate_baseline(snapshot["num_samples"], snapshot["sample_rate_hz"], seed,
                                   snr_db=snapshot["snr_db"], sps=snapshot["sps"],
                                   rolloff=snapshot["rolloff"])
        for k, jam in enumerate(jammers):
            stream = inject_jammer(stream, jam, seed=seed * 1000 + k + 1)
    except (ArgumentError, TypeError) as exc:
        raise CliError(f"invalid generate config: {exc}", 2) from None
    out = _out_dir(args)
    write_iq(out / IQ_NAME, stream)
    write_labels(out / LABELS_NAME, stream.labels)
    write_manifest(out, "generate", snapshot, seed, {"config": args.config}, [IQ_NAME, LABELS_NAME])
    _say(args, f"wrote {len(stream)} samples ({int(stream.labels.sum())} jammed) to {out / IQ_NAME}")
    return 0


# -- train --------------------------------------------------------------------

def _train_configs(cfg: dict, args):
    unknown = set(cfg) - {"model", "training", "threshold_percentile", "seed"}
    if unknown:
        raise CliError(f"unknown train config keys: {sorted(unknown)}", 2)
    model = dict(cfg.get("model", {}))
    training = dict(cfg.get("training", {}))
    for flag, section, key in ((args.seq_len, model, "seq_len"), (args.epochs, training, "epochs"),
                               (args.batch_size, training, "batch_size"),
                               (args.learning_rate, training, "learning_rate")):
        if flag is not None:
            section[key] = flag
    model.setdefault("input_dim", 2)
    try:
        return ModelConfig.from_dict(model), TrainingConfig.from_dict(training)
    except (ConfigError, TypeError) as exc:
        raise CliError(f"invalid train config: {exc}", 2) from None


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    model_cfg, train_cfg = _train_configs(cfg, args)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    percentile = float(cfg.get("threshold_percentile", 99.0))
    stream, iq_path, _ = _load_stream(args.data)
    if stream.features().shape[1] != model_cfg.input_dim:
        raise CliError(f"data has 2 features, model input_dim is {model_cfg.input_dim}", 2)
    windows = window_stream(stream, model_cfg.seq_len)
    X = normal_only(windows)
    if X.shape[0] == 0:
        raise CliError("no training data: the stream has no normal windows", 1)
    stats = fit_normalizer(X)
    Xn = normalize(X, stats)

    est = AttentionLSTMAutoencoder(
        seq_len=model_cfg.seq_len, encoder_units=tuple(model_cfg.encoder_units),
        num_heads=model_cfg.num_heads, key_dim=model_cfg.key_dim,
        attention_variant=model_cfg.attention_variant, decoder_order=model_cfg.decoder_order,
        batch_size=train_cfg.batch_size, epochs=train_cfg.epochs,
        learning_rate=train_cfg.learning_rate, corruption_sigma=train_cfg.corruption_sigma,
        validation_fraction=train_cfg.validation_fraction, patience=train_cfg.patience,
        threshold_percentile=percentile, random_state=seed, verbose=not args.quiet,
    )
    est.fit(Xn)
    out = _out_dir(args)
    est.save(out / CHECKPOINT_NAME)
    (out / NORM_NAME).write_text(json.dumps(stats.to_dict(), indent=2) + "\n")
    (out / THRESHOLD_NAME).write_text(json.dumps(est.threshold_.to_dict(), indent=2) + "\n")
    est.history_.to_csv(out / HISTORY_NAME)
    snapshot = {"model": est.config_.to_dict(), "training": train_cfg.to_dict(),
                "threshold_percentile": percentile, "n_windows": int(X.shape[0])}
    write_manifest(out, "train", snapshot, seed, {"data": iq_path, "config": args.config or ""},
                   [CHECKPOINT_NAME, NORM_NAME, THRESHOLD_NAME, HISTORY_NAME])
    h = est.history_
    _say(args, f"trained {len(h)} epochs: loss {h.train_loss[0]:.5f} -> {h.train_loss[-1]:.5f}; "
               f"threshold {est.threshold_.value:.6g}")
    return 0


# -- detect -------------------------------------------------------------------

def _load_model(checkpoint):
    path = Path(checkpoint)
    if path.is_dir():
        path = path / CHECKPOINT_NAME
    if not path.is_file():
        raise CliError(f"checkpoint not found: {path}", 2)
    try:
        params, cfg, meta = load_checkpoint(path)
    except (FormatError, ConfigError, ShapeError) as exc:
        raise CliError(str(exc), 2) from None
    return path, params, cfg, meta


def _load_norm(path, checkpoint_path: Path) -> NormStats:
    path = Path(path) if path else checkpoint_path.parent / NORM_NAME
    if not path.is_file():
        raise CliError(f"normalization statistics missing: {path}", 2)
    try:
        return NormStats.from_dict(json.loads(path.read_text()))
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise CliError(f"bad normalization file {path}: {exc}", 2) from None


def _load_threshold(args, meta: dict) -> Threshold:
    if args.threshold is not None:
        return Threshold(args.threshold)
    if args.threshold_file:
        try:
            return Threshold.from_dict(json.loads(Path(args.threshold_file).read_text()))
        except (OSError, KeyError, ValueError) as exc:
            raise CliError(f"bad threshold file: {exc}", 2) from None
    if "threshold" in meta:
        return Threshold.from_dict(meta["threshold"])
    raise CliError("no threshold: pass --threshold or --threshold-file", 2)


def cmd_detect(args) -> int:
    ckpt, params, cfg, meta = _load_model(args.checkpoint)
    norm = _load_norm(args.norm, ckpt)
    threshold = _load_threshold(args, meta)
    stream, iq_path, labels_path = _load_stream(args.data)
    seq_len = args.seq_len if args.seq_len is not None else cfg.seq_len
    data_shape = (seq_len, stream.features().shape[1])
    if data_shape != cfg.window_shape or norm.mean.size != cfg.input_dim:
        raise CliError(f"window shape {data_shape} (normalizer width {norm.mean.size}) does not "
                       f"match checkpoint shape {cfg.window_shape}", 2)
    report = detect_stream(stream, params, cfg, norm, threshold, stride=args.stride)
    report.info.update({"data": str(iq_path), "checkpoint": str(ckpt)})
    out = _out_dir(args)
    report.save(out / REPORT_NAME)
    write_manifest(out, "detect", {"stride": args.stride, "threshold": threshold.to_dict()},
                   args.seed, {"data": iq_path, "checkpoint": ckpt},
                   [REPORT_NAME, Path(REPORT_NAME).with_suffix(".csv").name])
    msg = f"{len(report)} windows, {int(report.decisions.sum())} flagged"
    if report.metrics:
        m = report.metrics
        msg += f"; AUC {m['auc']}, precision {m['precision']:.4f}, recall {m['recall']:.4f}"
    _say(args, msg)
    return 0


# -- evaluate -----------------------------------------------------------------

def _load_report(path) -> AnomalyReport:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"report not found: {path}", 2)
    try:
        return AnomalyReport.load(path)
    except FormatError as exc:
        raise CliError(str(exc), 2) from None


def cmd_evaluate(args) -> int:
    report = _load_report(args.report)
    if not report.has_labels:
        raise CliError("no ground truth: the report has no labels", 1)
    m = evaluate(report)
    auc = "n/a" if m["auc"] is None else f"{m['auc']:.6f}"
    rows = [("windows", str(len(report))), ("threshold", f"{report.threshold.value:.6g}"),
            ("AUC", auc), ("precision", f"{m['precision']:.6f}"), ("recall", f"{m['recall']:.6f}"),
            ("F1", f"{m['f1']:.6f}"), ("FPR", f"{m['false_positive_rate']:.6f}"),
            ("TP/FP/TN/FN", f"{m['tp']}/{m['fp']}/{m['tn']}/{m['fn']}")]
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}")
    return 0


# -- plot ---------------------------------------------------------------------

def _overlay_window(args, report: AnomalyReport):
    data = args.data or report.info.get("data")
    checkpoint = args.checkpoint or report.info.get("checkpoint")
    if not data or not checkpoint:
        raise CliError("overlay needs --data and --checkpoint (not recorded in the report)", 2)
    ckpt, params, cfg, _ = _load_model(checkpoint)
    norm = _load_norm(args.norm, ckpt)
    if args.window is not None:
        k = args.window
    else:
        normal = np.flatnonzero(report.decisions == 0)
        k = int(normal[0]) if normal.size else 0
    if not 0 <= k < len(report):
        raise CliError(f"window {k} out of range (report has {len(report)})", 2)
    stream, _, _ = _load_stream(data)
    start = int(report.series.origins[k])
    seg = stream.features()[start:start + cfg.seq_len]
    if seg.shape != cfg.window_shape:
        raise CliError(f"window {k} at {start} does not fit in the stream", 2)
    x = normalize(seg, norm)
    return k, x, forward(x, params, cfg)


def cmd_plot(args) -> int:
    report = _load_report(args.report)
    out = _out_dir(args)
    stem = args.kind
    if args.kind == "error_trace":
        header, rows = error_trace_table(report)
        write_csv(out / f"{stem}.csv", header, rows)
        render_error_trace(report, out / f"{stem}.svg")
        extra = {}
    elif args.kind == "histogram":
        header, rows = histogram_table(report, bins=args.bins)
        write_csv(out / f"{stem}.csv", header, rows)
        render_histogram(rows, report.threshold.value, out / f"{stem}.svg")
        extra = {"bins": args.bins}
    else:
        k, x, x_hat = _overlay_window(args, report)
        header, rows = overlay_table(x, x_hat)
        write_csv(out / f"{stem}.csv", header, rows)
        render_overlay(x, x_hat, out / f"{stem}.svg")
        extra = {"window": k}
    write_manifest(out, "plot", {"kind": args.kind, **extra}, args.seed, {"report": args.report},
                   [f"{stem}.csv", f"{stem}.svg"])
    _say(args, f"wrote {out / (stem + '.csv')} and {out / (stem + '.svg')}")
    return 0


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or TOML config file")
    common.add_argument("--seed", type=int, help="seed overriding the config")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="jamdetect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="synthesize a labeled I/Q stream")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train on the normal windows of a stream")
    p.add_argument("--data", required=True, help="data directory or .cf32 file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seq-len", type=int)
    p.add_argument("--learning-rate", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", parents=[common], help="score a stream with a trained model")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True, help="checkpoint file or training output directory")
    p.add_argument("--norm", help="normalization JSON (default: next to the checkpoint)")
    p.add_argument("--threshold", type=float, help="fixed threshold value")
    p.add_argument("--threshold-file", help="threshold JSON written by train")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--seq-len", type=int, help="window length; must match the checkpoint")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", parents=[common], help="print detection metrics of a report")
    p.add_argument("report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", parents=[common], help="emit plot data (CSV) and an SVG")
    p.add_argument("report")
    p.add_argument("--kind", choices=PLOT_KINDS, required=True)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--window", type=int, help="overlay: report window index")
    p.add_argument("--data", help="overlay: data path (default: recorded in the report)")
    p.add_argument("--checkpoint", help="overlay: checkpoint (default: recorded in the report)")
    p.add_argument("--norm")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"jamdetect {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, FormatError, ShapeError, ArgumentError) as exc:
        print(f"jamdetect {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"jamdetect {args.command}: numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
