"""LSTM autoencoder with self-attention after the first encoder layer.

Encoder: LSTM -> attention (added residually to the hidden states) ->
remaining LSTM layers -> dense bottleneck on the last hidden state.
Decoder: the latent vector repeated T times -> LSTM stack -> linear
projection back to the input features.

Parameters live in a flat ``dict`` of named float64 arrays so the optimizer,
the gradient oracle and the checkpoint format can all treat them alike.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .exceptions import ArgumentError, ConfigError, FormatError, NumericError, ShapeError, VersionError
from .nn.attention import (
    AdditiveScorerParams,
    AttentionParams,
    additive_attention_backward,
    additive_attention_forward,
    attention_backward,
    attention_forward,
)
from .nn.init import uniform_init
from .nn.layers import ACTIVATIONS, dense_backward, dense_forward
from .nn.loss import mse_loss, mse_loss_grad
from .nn.lstm import LstmCellParams, lstm_backward, lstm_forward

ModelParams = Dict[str, np.ndarray]

ATTENTION_VARIANTS = ("scaled_dot_product", "additive")
DECODER_ORDERS = ("forward", "reverse")


def _units(values, name) -> List[int]:
    values = list(values)
    if not values:
        raise ConfigError(f"{name} needs at least one layer")
    if any(isinstance(u, bool) or int(u) != u or u < 1 for u in values):
        raise ConfigError(f"{name} must be integers >= 1, got {values}")
    return [int(u) for u in values]


@dataclass
class ModelConfig:
    input_dim: int = 2
    seq_len: int = 10
    encoder_units: List[int] = field(default_factory=lambda: [50, 25])
    decoder_units: Optional[List[int]] = None
    num_heads: int = 4
    key_dim: int = 50
    latent_dim: Optional[int] = None
    bottleneck_activation: str = "relu"
    attention_variant: str = "scaled_dot_product"
    scorer_units: Optional[int] = None
    decoder_order: str = "forward"

    def __post_init__(self):
        self.encoder_units = _units(self.encoder_units, "encoder_units")
        if self.decoder_units is None:
            self.decoder_units = self.encoder_units[::-1]
        self.decoder_units = _units(self.decoder_units, "decoder_units")
        if self.latent_dim is None:
            self.latent_dim = self.encoder_units[-1]
        if self.scorer_units is None:
            self.scorer_units = self.encoder_units[0]
        self.validate()

    def validate(self) -> None:
        dims = [self.input_dim, self.seq_len, self.num_heads, self.key_dim, self.latent_dim,
                self.scorer_units, *self.encoder_units, *self.decoder_units]
        if not self.encoder_units or not self.decoder_units:
            raise ConfigError("encoder_units and decoder_units need at least one layer")
        if any(int(d) != d or d < 1 for d in dims):
            raise ConfigError(f"all dimensions must be integers >= 1: {self}")
        if self.attention_variant not in ATTENTION_VARIANTS:
            raise ConfigError(f"attention_variant must be one of {ATTENTION_VARIANTS}")
        if self.decoder_order not in DECODER_ORDERS:
            raise ConfigError(f"decoder_order must be one of {DECODER_ORDERS}")
        if self.bottleneck_activation not in ACTIVATIONS:
            raise ConfigError(f"bottleneck_activation must be one of {ACTIVATIONS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def window_shape(self) -> Tuple[int, int]:
        return (self.seq_len, self.input_dim)


# -- parameter layout ---------------------------------------------------------

def _lstm_shapes(prefix, n, d):
    out = {}
    for g in "ifog":
        out[f"{prefix}W_{g}x"] = ((d, n), n)
        out[f"{prefix}W_{g}h"] = ((d, d), d)
        out[f"{prefix}b_{g}"] = ((d,), n + d)
    return out


def param_shapes(cfg: ModelConfig) -> Dict[str, Tuple[tuple, int]]:
    """Name -> (shape, fan_in) for every trainable tensor, in canonical order."""
    shapes = {}
    n = cfg.input_dim
    for k, d in enumerate(cfg.encoder_units, 1):
        shapes.update(_lstm_shapes(f"enc{k}.", n, d))
        n = d
        if k == 1:
            d1 = cfg.encoder_units[0]
            if cfg.attention_variant == "scaled_dot_product":
                h, dk = cfg.num_heads, cfg.key_dim
                for w in ("W_q", "W_k", "W_v"):
                    shapes[f"attn.{w}"] = ((h, d1, dk), d1)
                shapes["attn.W_o"] = ((h * dk, d1), h * dk)
            else:
                u = cfg.scorer_units
                shapes["attn.W_q"] = ((u, d1), d1)
                shapes["attn.W_k"] = ((u, d1), d1)
                shapes["attn.b"] = ((u,), d1)
                shapes["attn.v"] = ((u,), u)
    shapes["bottleneck.W"] = ((cfg.latent_dim, n), n)
    shapes["bottleneck.b"] = ((cfg.latent_dim,), n)
    n = cfg.latent_dim
    for k, d in enumerate(cfg.decoder_units, 1):
        shapes.update(_lstm_shapes(f"dec{k}.", n, d))
        n = d
    shapes["out.W"] = ((cfg.input_dim, n), n)
    shapes["out.b"] = ((cfg.input_dim,), n)
    return shapes


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization of every tensor."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    return {name: uniform_init(rng, shape, fan_in)
            for name, (shape, fan_in) in param_shapes(cfg).items()}


def check_params(params: ModelParams, cfg: ModelConfig) -> None:
    expected = param_shapes(cfg)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ShapeError(f"parameter names do not match config (missing {missing}, unexpected {extra})")
    for name, (shape, _) in expected.items():
        if params[name].shape != shape:
            raise ShapeError(f"{name}: shape {params[name].shape} does not match config shape {shape}")


def _attn(params, cfg):
    if cfg.attention_variant == "scaled_dot_product":
        return AttentionParams.from_dict(params, "attn.")
    return AdditiveScorerParams.from_dict(params, "attn.")


def _as_batch(w, cfg: ModelConfig):
    x = np.asarray(w.values if hasattr(w, "values") else w, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != cfg.window_shape:
        raise ArgumentError(
            f"window shape {x.shape[-2:] if x.ndim >= 2 else x.shape} does not match "
            f"model shape {cfg.window_shape}"
        )
    return x, squeeze


# -- forward / backward -------------------------------------------------------

def _encode(X, params, cfg):
    caches = {}
    H, caches["enc1"] = lstm_forward(X, LstmCellParams.from_dict(params, "enc1."))
    attn = _attn(params, cfg)
    if cfg.attention_variant == "scaled_dot_product":
        A, caches["attn"] = attention_forward(H, attn)
    else:
        A, caches["attn"] = additive_attention_forward(H, attn)
    H_aug = H + A
    Z = H_aug
    for k in range(2, len(cfg.encoder_units) + 1):
        Z, caches[f"enc{k}"] = lstm_forward(Z, LstmCellParams.from_dict(params, f"enc{k}."))
    latent, caches["bottleneck"] = dense_forward(
        Z[:, -1, :], params["bottleneck.W"], params["bottleneck.b"], cfg.bottleneck_activation
    )
    return H_aug, latent, caches


def _decode(latent, params, cfg):
    caches = {}
    Z = np.repeat(latent[:, None, :], cfg.seq_len, axis=1)
    reverse = cfg.decoder_order == "reverse"
    for k in range(1, len(cfg.decoder_units) + 1):
        Z, caches[f"dec{k}"] = lstm_forward(Z, LstmCellParams.from_dict(params, f"dec{k}."),
                                            reverse=reverse)
    X_hat, caches["out"] = dense_forward(Z, params["out.W"], params["out.b"], "identity")
    return X_hat, caches


def encode(w, params: ModelParams, cfg: ModelConfig):
    """Attention-augmented first-layer hidden states and the latent vector.

    Accepts one (T, n) window or a (B, T, n) batch.
    """
    X, squeeze = _as_batch(w, cfg)
    H_aug, latent, _ = _encode(X, params, cfg)
    return (H_aug[0], latent[0]) if squeeze else (H_aug, latent)


def decode(latent, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    latent = np.asarray(latent, dtype=np.float64)
    squeeze = latent.ndim == 1
    if squeeze:
        latent = latent[None]
    if latent.shape[-1] != cfg.latent_dim:
        raise ShapeError(f"latent width {latent.shape[-1]} != config latent_dim {cfg.latent_dim}")
    X_hat, _ = _decode(latent, params, cfg)
    return X_hat[0] if squeeze else X_hat


def forward(w, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """Reconstruction of ``w``; same shape as the input."""
    X, squeeze = _as_batch(w, cfg)
    _, latent, _ = _encode(X, params, cfg)
    X_hat, _ = _decode(latent, params, cfg)
    return X_hat[0] if squeeze else X_hat


def forward_backward(w, w_target, params: ModelParams, cfg: ModelConfig):
    """Loss of the reconstruction of ``w`` against ``w_target`` and its exact gradients.

    For a batch the loss is the mean of the per-window losses. Returns
    ``(loss, grads)`` with ``grads`` keyed like ``params``.
    """
    X, squeeze = _as_batch(w, cfg)
    Y, _ = _as_batch(w_target, cfg)
    if Y.shape != X.shape:
        raise ShapeError(f"input batch {X.shape} and target batch {Y.shape} differ")
    B = X.shape[0]
    H_aug, latent, enc = _encode(X, params, cfg)
    X_hat, dec = _decode(latent, params, cfg)
    losses = mse_loss(Y, X_hat)
    loss = float(np.mean(losses))
    if not np.isfinite(loss):
        raise NumericError(f"non-finite reconstruction loss {loss}")

    grads: ModelParams = {}
    dXh = mse_loss_grad(Y, X_hat) / B
    dZ, grads["out.W"], grads["out.b"] = dense_backward(dXh, dec["out"], params["out.W"])
    for k in range(len(cfg.decoder_units), 0, -1):
        p = LstmCellParams.from_dict(params, f"dec{k}.")
        dZ, g = lstm_backward(dZ, dec[f"dec{k}"], p)
        grads.update(g.to_dict(f"dec{k}."))
    dLatent = dZ.sum(axis=1)
    dLast, grads["bottleneck.W"], grads["bottleneck.b"] = dense_backward(
        dLatent, enc["bottleneck"], params["bottleneck.W"]
    )
    top = len(cfg.encoder_units)
    dZ = np.zeros(X.shape[:1] + (cfg.seq_len, cfg.encoder_units[-1]))
    dZ[:, -1, :] = dLast
    for k in range(top, 1, -1):
        p = LstmCellParams.from_dict(params, f"enc{k}.")
        dZ, g = lstm_backward(dZ, enc[f"enc{k}"], p)
        grads.update(g.to_dict(f"enc{k}."))
    attn = _attn(params, cfg)
    if cfg.attention_variant == "scaled_dot_product":
        dH_attn, g_attn = attention_backward(dZ, enc["attn"], attn)
    else:
        dH_attn, g_attn = additive_attention_backward(dZ, enc["attn"], attn)
    grads.update(g_attn.to_dict("attn."))
    _, g = lstm_backward(dZ + dH_attn, enc["enc1"], LstmCellParams.from_dict(params, "enc1."))
    grads.update(g.to_dict("enc1."))
    return loss, {k: grads[k] for k in params}


# -- checkpoints --------------------------------------------------------------

MAGIC = b"JAMDCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")
_DIGEST_LEN = 32


def save_params(params: ModelParams, path, cfg: ModelConfig, metadata: Optional[dict] = None) -> None:
    """Write a checkpoint: magic, version, JSON header, little-endian float64 tensors, SHA-256."""
    check_params(params, cfg)
    names = list(param_shapes(cfg))
    header = {
        "config": cfg.to_dict(),
        "tensors": [{"name": k, "shape": list(params[k].shape)} for k in names],
        "metadata": metadata or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(params[k], dtype="<f8").tobytes() for k in names)
    blob = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes)) + hbytes + body
    Path(path).write_bytes(blob + hashlib.sha256(blob).digest())


def load_checkpoint(path) -> Tuple[ModelParams, ModelConfig, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size + _DIGEST_LEN:
        raise FormatError(f"{path}: file too short to be a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: checkpoint version {version}, this build reads {FORMAT_VERSION}")
    start = _PREFIX.size + hlen
    if len(raw) < start + _DIGEST_LEN:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header: {exc}") from None
    total = sum(int(np.prod(t["shape"], dtype=np.int64)) for t in header["tensors"])
    end = start + 8 * total
    if len(raw) != end + _DIGEST_LEN:
        raise FormatError(f"{path}: expected {end + _DIGEST_LEN} bytes, found {len(raw)} (truncated?)")
    if hashlib.sha256(raw[:end]).digest() != raw[end:]:
        raise FormatError(f"{path}: checksum mismatch")
    cfg = ModelConfig.from_dict(header["config"])
    params, offset = {}, start
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        params[t["name"]] = arr.astype(np.float64).reshape(t["shape"])
        offset += 8 * count
    check_params(params, cfg)
    return params, cfg, header.get("metadata", {})


def load_params(path) -> Tuple[ModelParams, ModelConfig]:
    params, cfg, _ = load_checkpoint(path)
    return params, cfg
