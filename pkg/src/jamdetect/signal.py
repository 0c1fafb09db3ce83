"""Synthetic I/Q streams, jammer injection and windowing.

The clean stream is QPSK shaped by a root-raised-cosine filter with
additive white Gaussian noise. Jammers are added on top of an existing
stream and mark the samples they touch in the label vector.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .exceptions import ArgumentError, FormatError

JAMMER_KINDS = ("tone", "wideband_noise", "pulsed")

DEFAULT_SNR_DB = 20.0
DEFAULT_SPS = 8
DEFAULT_ROLLOFF = 0.35
DEFAULT_SPAN = 8

_QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2.0)


@dataclass
class IQStream:
    samples: np.ndarray
    sample_rate_hz: float
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128).ravel()
        if self.samples.size < 1:
            raise ArgumentError("an IQStream needs at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ArgumentError("IQStream samples must be finite")
        if not self.sample_rate_hz > 0:
            raise ArgumentError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.uint8).ravel()
            if self.labels.shape != self.samples.shape:
                raise ArgumentError(
                    f"labels length {self.labels.size} != samples length {self.samples.size}"
                )
            if np.any(self.labels > 1):
                raise ArgumentError("labels must be 0 or 1")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def i(self) -> np.ndarray:
        return self.samples.real

    @property
    def q(self) -> np.ndarray:
        return self.samples.imag

    def features(self) -> np.ndarray:
        """Return the stream as an (N, 2) array of [i, q] rows."""
        return np.stack([self.samples.real, self.samples.imag], axis=1)


@dataclass
class JammerConfig:
    kind: str
    start_index: int
    duration: int
    relative_power_db: float = 0.0
    tone_freq_fraction: float = 0.1
    pulse_period: int = 100
    pulse_duty: float = 0.5

    def __post_init__(self):
        if self.kind not in JAMMER_KINDS:
            raise ArgumentError(f"unknown jammer kind {self.kind!r}; expected one of {JAMMER_KINDS}")
        if self.start_index < 0:
            raise ArgumentError("start_index must be >= 0")
        if self.duration < 1:
            raise ArgumentError("jammer duration must be >= 1")
        if not math.isfinite(self.relative_power_db):
            raise ArgumentError("relative_power_db must be finite")
        if not -0.5 < self.tone_freq_fraction < 0.5:
            raise ArgumentError("tone_freq_fraction must lie in (-0.5, 0.5)")
        if self.pulse_period < 1:
            raise ArgumentError("pulse_period must be >= 1")
        if not 0.0 < self.pulse_duty <= 1.0:
            raise ArgumentError("pulse_duty must lie in (0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "JammerConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ArgumentError(f"unknown jammer config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def active_mask(self) -> np.ndarray:
        """Boolean mask over the jam window marking samples the jammer touches."""
        if self.kind != "pulsed":
            return np.ones(self.duration, dtype=bool)
        on = max(1, int(math.ceil(self.pulse_duty * self.pulse_period)))
        return (np.arange(self.duration) % self.pulse_period) < on


def rrc_taps(rolloff: float, sps: int, span: int) -> np.ndarray:
    """Unit-energy root-raised-cosine filter, ``span`` symbols long."""
    if not 0.0 <= rolloff <= 1.0:
        raise ArgumentError("rolloff must lie in [0, 1]")
    t = np.arange(-span * sps // 2, span * sps // 2 + 1) / sps
    h = np.empty_like(t)
    a = rolloff
    for k, tk in enumerate(t):
        if abs(tk) < 1e-12:
            h[k] = 1.0 - a + 4.0 * a / math.pi
        elif a > 0 and abs(abs(tk) - 1.0 / (4.0 * a)) < 1e-12:
            h[k] = (a / math.sqrt(2.0)) * (
                (1 + 2 / math.pi) * math.sin(math.pi / (4 * a))
                + (1 - 2 / math.pi) * math.cos(math.pi / (4 * a))
            )
        else:
            num = math.sin(math.pi * tk * (1 - a)) + 4 * a * tk * math.cos(math.pi * tk * (1 + a))
            den = math.pi * tk * (1 - (4 * a * tk) ** 2)
            h[k] = num / den
    return h / np.sqrt(np.sum(h * h))


def qpsk_baseband(num_samples: int, rng: np.random.Generator, sps: int = DEFAULT_SPS,
                  rolloff: float = DEFAULT_ROLLOFF, span: int = DEFAULT_SPAN) -> np.ndarray:
    """Noise-free RRC-shaped QPSK with unit expected power per sample."""
    taps = rrc_taps(rolloff, sps, span)
    delay = (taps.size - 1) // 2
    n_sym = -(-num_samples // sps) + span
    symbols = _QPSK[rng.integers(0, 4, size=n_sym)]
    up = np.zeros(n_sym * sps, dtype=np.complex128)
    up[::sps] = symbols
    # zero-stuffing divides the per-sample power by sps
    shaped = np.convolve(up, taps) * math.sqrt(sps)
    return shaped[delay:delay + num_samples]


def generate_baseline(num_samples: int, sample_rate_hz: float, seed: int,
                      snr_db: float = DEFAULT_SNR_DB, sps: int = DEFAULT_SPS,
                      rolloff: float = DEFAULT_ROLLOFF) -> IQStream:
    """Clean QPSK traffic plus AWGN at ``snr_db``; every label is 0."""
    if int(num_samples) != num_samples or num_samples < 1:
        raise ArgumentError(f"num_samples must be a positive integer, got {num_samples!r}")
    num_samples = int(num_samples)
    rng = np.random.default_rng(seed)
    clean = qpsk_baseband(num_samples, rng, sps=sps, rolloff=rolloff)
    noise_power = 10.0 ** (-snr_db / 10.0)
    noise = rng.standard_normal((num_samples, 2)) @ np.array([1.0, 1j])
    samples = clean + math.sqrt(noise_power / 2.0) * noise
    return IQStream(samples, float(sample_rate_hz), np.zeros(num_samples, dtype=np.uint8))


def _scaled_noise(n: int, power: float, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, 2)) @ np.array([1.0, 1j])
    return z * math.sqrt(power / np.mean(np.abs(z) ** 2))


def jammer_waveform(cfg: JammerConfig, reference_power: float, seed: int) -> np.ndarray:
    """The additive jamming signal over the jam window (zeros when the pulse is off)."""
    power = reference_power * 10.0 ** (cfg.relative_power_db / 10.0)
    rng = np.random.default_rng(seed)
    mask = cfg.active_mask()
    out = np.zeros(cfg.duration, dtype=np.complex128)
    if cfg.kind == "tone":
        phase = rng.uniform(0.0, 2.0 * math.pi)
        n = np.arange(cfg.duration)
        out[:] = math.sqrt(power) * np.exp(1j * (2.0 * math.pi * cfg.tone_freq_fraction * n + phase))
    else:
        out[mask] = _scaled_noise(int(mask.sum()), power, rng)
    return out


def inject_jammer(stream: IQStream, cfg: JammerConfig, seed: int) -> IQStream:
    """Return a copy of ``stream`` with the jammer added and labels set where it is active.

    The jammer power is set relative to the mean power of the input over
    the jam window. Samples outside the window are untouched.
    """
    stop = cfg.start_index + cfg.duration
    if stop > len(stream):
        raise ArgumentError(
            f"jam window [{cfg.start_index}, {stop}) exceeds stream length {len(stream)}"
        )
    seg = slice(cfg.start_index, stop)
    ref_power = float(np.mean(np.abs(stream.samples[seg]) ** 2))
    jam = jammer_waveform(cfg, ref_power, seed)
    mask = cfg.active_mask()

    samples = stream.samples.copy()
    idx = np.arange(cfg.start_index, stop)[mask]
    samples[idx] += jam[mask]
    labels = (np.zeros(len(stream), dtype=np.uint8) if stream.labels is None
              else stream.labels.copy())
    labels[idx] = 1
    return IQStream(samples, stream.sample_rate_hz, labels)


@dataclass
class Window:
    values: np.ndarray
    origin_index: int
    label: int = 0


@dataclass
class Windows:
    """A batch of equal-length windows.

    ``values`` has shape (N, T, n). ``labels`` is None for unlabeled data.
    """

    values: np.ndarray
    origins: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ArgumentError(f"window values must be (N, T, n), got shape {self.values.shape}")
        self.origins = np.asarray(self.origins, dtype=np.int64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.uint8)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, k: int) -> Window:
        label = 0 if self.labels is None else int(self.labels[k])
        return Window(self.values[k], int(self.origins[k]), label)

    def __iter__(self) -> Iterator[Window]:
        return (self[k] for k in range(len(self)))

    @property
    def seq_len(self) -> int:
        return self.values.shape[1]

    def subset(self, index) -> "Windows":
        return Windows(self.values[index], self.origins[index],
                       None if self.labels is None else self.labels[index])

    def with_values(self, values: np.ndarray) -> "Windows":
        return Windows(values, self.origins.copy(),
                       None if self.labels is None else self.labels.copy())


def window_count(num_samples: int, seq_len: int, stride: int) -> int:
    return (num_samples - seq_len) // stride + 1


def window_stream(stream: IQStream, seq_len: int, stride: Optional[int] = None) -> Windows:
    """Cut a stream into windows of ``seq_len`` samples starting every ``stride`` samples.

    ``stride`` defaults to ``seq_len`` (non-overlapping). A window is
    labeled 1 when any sample it covers is labeled 1.
    """
    stride = seq_len if stride is None else stride
    if seq_len < 1 or stride < 1:
        raise ArgumentError("seq_len and stride must be >= 1")
    n = len(stream)
    if n < seq_len:
        raise ArgumentError(f"stream of {n} samples is shorter than seq_len={seq_len}")
    count = window_count(n, seq_len, stride)
    origins = np.arange(count, dtype=np.int64) * stride
    feats = stream.features()
    view = np.lib.stride_tricks.sliding_window_view(feats, seq_len, axis=0)[origins]
    values = np.ascontiguousarray(view.transpose(0, 2, 1))
    labels = None
    if stream.labels is not None:
        lab = np.lib.stride_tricks.sliding_window_view(stream.labels, seq_len)[origins]
        labels = lab.max(axis=1).astype(np.uint8)
    return Windows(values, origins, labels)


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).ravel()
        self.std = np.asarray(self.std, dtype=np.float64).ravel()
        if self.mean.shape != self.std.shape:
            raise ArgumentError("mean and std must have the same length")
        if np.any(self.std <= 0):
            raise ArgumentError("std components must be strictly positive")

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


STD_FLOOR = 1e-8


def _as_values(windows) -> np.ndarray:
    values = windows.values if isinstance(windows, Windows) else np.asarray(windows, dtype=np.float64)
    if values.ndim == 2:
        values = values[None]
    return values


def fit_normalizer(windows) -> NormStats:
    """Per-feature mean and population std over every element of every window."""
    values = _as_values(windows)
    if values.shape[0] == 0 or values.size == 0:
        raise ArgumentError("cannot fit normalizer on an empty window set")
    flat = values.reshape(-1, values.shape[-1])
    return NormStats(flat.mean(axis=0), np.maximum(flat.std(axis=0), STD_FLOOR))


def normalize(windows, stats: NormStats):
    if isinstance(windows, Windows):
        return windows.with_values((windows.values - stats.mean) / stats.std)
    return (np.asarray(windows, dtype=np.float64) - stats.mean) / stats.std


def denormalize(windows, stats: NormStats):
    if isinstance(windows, Windows):
        return windows.with_values(windows.values * stats.std + stats.mean)
    return np.asarray(windows, dtype=np.float64) * stats.std + stats.mean


# -- raw file formats -------------------------------------------------------

def write_iq(path, stream: IQStream) -> None:
    """Interleaved little-endian float32 (i, q) pairs."""
    buf = np.empty(2 * len(stream), dtype="<f4")
    buf[0::2] = stream.samples.real
    buf[1::2] = stream.samples.imag
    Path(path).write_bytes(buf.tobytes())


def write_labels(path, labels: np.ndarray) -> None:
    Path(path).write_bytes(np.asarray(labels, dtype=np.uint8).tobytes())


def read_iq(path, sample_rate_hz: float, labels_path=None) -> IQStream:
    raw = Path(path).read_bytes()
    if len(raw) == 0 or len(raw) % 8:
        raise FormatError(f"{path}: size {len(raw)} is not a positive multiple of 8 bytes")
    buf = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    samples = buf[0::2] + 1j * buf[1::2]
    labels = None
    if labels_path is not None:
        labels = np.frombuffer(Path(labels_path).read_bytes(), dtype=np.uint8)
        if labels.size != samples.size:
            raise FormatError(
                f"{labels_path}: {labels.size} labels for {samples.size} samples"
            )
    return IQStream(samples, sample_rate_hz, labels)
