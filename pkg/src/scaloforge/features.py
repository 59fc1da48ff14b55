"""Frame-level filter-energy features.

The extraction pipeline is the same for every feature kind:

1. frame the signal (Hann window, hop = shift), zero-pad frames to the FFT
   size and take the magnitude of the real FFT;
2. apply a digitized filter bank to the squared magnitudes, summing the
   weighted power per filter;
3. take the natural log, floored at 1e-10.

Frame counts are computed in the integer sample domain,
L = num_samples // round(shift * rate), so a 10 s clip yields exactly
floor(duration / shift) frames; trailing frames that run past the signal
end are zero-padded.

Feature maps are (frames, channels, filters) arrays. The binary feature
file is magic ``SCLF``, version u16, kind u8, dims (L, c, n) as u32 LE,
payload f32 LE in C order, and a trailing CRC32 over everything before it.
Normalization statistics live in a JSON sidecar.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .filterbank import (
    DigitalFilterMatrix,
    WaveletScaleParams,
    build_mel_scale,
    build_wavelet_scale,
    digitize,
)
from .signal_io import AudioClip, ChannelPair, derive_channels

__all__ = [
    "StftConfig",
    "Spectrogram",
    "FeatureMap",
    "NormStats",
    "SignalTooShortError",
    "ShapeMismatchError",
    "FeatureFileError",
    "NormalizationStateError",
    "SCALOGRAM_STFT",
    "FBANK_STFT",
    "LOG_FLOOR",
    "stft_magnitude",
    "apply_filterbank",
    "log_compress",
    "extract_scalogram",
    "extract_fbank",
    "extract_longterm_fbank",
    "delta_features",
    "fit_normalization",
    "apply_normalization",
    "save_features",
    "load_features",
    "save_norm_stats",
    "load_norm_stats",
]

LOG_FLOOR = 1e-10
STD_FLOOR = 1e-6
DELTA_HALF_WINDOW = 2

FEATURE_KINDS = ("scalogram", "fbank", "fbank-long", "synthetic")
_KIND_CODES = {"scalogram": 1, "fbank": 2, "fbank-long": 3, "synthetic": 4}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}

_MAGIC = b"SCLF"
_VERSION = 1


class SignalTooShortError(ValueError):
    """Signal shorter than one analysis window."""


class ShapeMismatchError(ValueError):
    """Operands disagree on bin count, shape or sample-rate lineage."""


class FeatureFileError(ValueError):
    """Feature file is malformed, truncated or fails its checksum."""


class NormalizationStateError(ValueError):
    """Normalization applied twice, or an op requires normalized input."""


@dataclass(frozen=True)
class StftConfig:
    """Analysis framing: window and shift in seconds plus the FFT size."""

    window: float
    shift: float
    fft_size: int
    window_function: str = "hann"

    def __post_init__(self):
        if self.shift <= 0 or self.window <= 0:
            raise ValueError("window and shift must be positive")
        if self.shift > self.window:
            raise ValueError(f"shift {self.shift} must not exceed window {self.window}")
        if self.window_function != "hann":
            raise ValueError(f"unsupported window function {self.window_function!r}")
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size must be a power of two, got {self.fft_size}")

    def window_samples(self, rate: int) -> int:
        return int(round(self.window * rate))

    def shift_samples(self, rate: int) -> int:
        return int(round(self.shift * rate))

    def frame_count(self, num_samples: int, rate: int) -> int:
        return num_samples // self.shift_samples(rate)


# long-term framing (512 ms / 171 ms) and the short-term baseline (40/20 ms)
SCALOGRAM_STFT = StftConfig(window=0.512, shift=0.171, fft_size=32768)
FBANK_STFT = StftConfig(window=0.040, shift=0.020, fft_size=2048)


@dataclass(frozen=True)
class Spectrogram:
    """Magnitudes of the framed real FFT, (frames, bins), all >= 0."""

    magnitudes: np.ndarray
    frame_times: np.ndarray
    config: StftConfig
    sample_rate: int

    @property
    def num_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def num_bins(self) -> int:
        return self.magnitudes.shape[1]


@dataclass(frozen=True)
class FeatureMap:
    """(frames, channels, filters) feature array with provenance.

    ``fingerprint`` hashes the extraction configuration so downstream
    consumers can detect mismatched feature sets.
    """

    data: np.ndarray
    kind: str
    channel_mode: str = "unknown"
    normalized: bool = False
    fingerprint: str = ""

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"feature data must be 3-D (L, c, n), got ndim={data.ndim}")
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple:
        return self.data.shape


@dataclass(frozen=True)
class NormStats:
    """Per (channel, filter) mean and std over a training corpus."""

    mean: np.ndarray
    std: np.ndarray
    corpus_id: str = ""

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 2:
            raise ValueError("mean and std must be matching 2-D (channels, filters) arrays")
        if np.any(std <= 0):
            raise ValueError("std must be positive (floored)")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def _config_fingerprint(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def stft_magnitude(signal: np.ndarray, rate: int, config: StftConfig) -> Spectrogram:
    """Magnitude STFT with Hann window and zero-padded trailing frames."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise ValueError("stft_magnitude expects a mono signal")
    win = config.window_samples(rate)
    hop = config.shift_samples(rate)
    if len(signal) < win:
        raise SignalTooShortError(
            f"signal of {len(signal)} samples is shorter than one {win}-sample window"
        )
    if config.fft_size < win:
        raise ValueError(f"fft_size {config.fft_size} smaller than window of {win} samples")
    n_frames = len(signal) // hop
    window = np.hanning(win)
    frames = np.zeros((n_frames, win))
    for t in range(n_frames):
        seg = signal[t * hop : t * hop + win]
        frames[t, : len(seg)] = seg
    frames *= window
    mags = np.abs(np.fft.rfft(frames, n=config.fft_size, axis=1))
    times = np.arange(n_frames) * (hop / rate)
    return Spectrogram(magnitudes=mags, frame_times=times, config=config, sample_rate=rate)


def apply_filterbank(spec: Spectrogram, filt: DigitalFilterMatrix) -> np.ndarray:
    """Per-frame filter energies: sum of weighted squared magnitudes."""
    if spec.num_bins != filt.num_bins:
        raise ShapeMismatchError(
            f"spectrogram has {spec.num_bins} bins, filter matrix {filt.num_bins}"
        )
    if spec.sample_rate != filt.sample_rate:
        raise ShapeMismatchError(
            f"sample-rate lineage mismatch: {spec.sample_rate} vs {filt.sample_rate}"
        )
    power = spec.magnitudes**2
    return power @ filt.weights.T


def log_compress(energies: np.ndarray, floor: float = LOG_FLOOR) -> np.ndarray:
    """Natural log of the energies, floored to stay finite."""
    energies = np.asarray(energies, dtype=np.float64)
    if np.any(energies < 0):
        raise ValueError("energies must be nonnegative")
    return np.log(np.maximum(energies, floor))


def _per_channel_logenergy(pair: ChannelPair, rate, stft, matrix) -> np.ndarray:
    out = []
    for sig in (pair.a, pair.b):
        spec = stft_magnitude(sig, rate, stft)
        out.append(log_compress(apply_filterbank(spec, matrix)))
    return np.stack(out, axis=1)  # (L, 2, n)


def extract_scalogram(
    clip: AudioClip,
    mode: str,
    params: WaveletScaleParams,
    stft: StftConfig = SCALOGRAM_STFT,
    shape: str = "gaussian",
    matrix: DigitalFilterMatrix | None = None,
) -> FeatureMap:
    """Wavelet-scale log energies for both derived channels, (L, 2, J).

    Pass a precomputed ``matrix`` to share one digitized bank across a
    corpus (it is read-only and safe to share across workers).
    """
    pair = derive_channels(clip, mode)
    if matrix is None:
        bank = build_wavelet_scale(params, shape=shape)
        matrix = digitize(bank, stft.fft_size, clip.sample_rate)
    data = _per_channel_logenergy(pair, clip.sample_rate, stft, matrix).astype(np.float32)
    fp = _config_fingerprint("scalogram", mode, params, stft, shape, clip.sample_rate)
    return FeatureMap(data=data, kind="scalogram", channel_mode=mode, fingerprint=fp)


def delta_features(x: np.ndarray, half_window: int = DELTA_HALF_WINDOW) -> np.ndarray:
    """Regression-slope deltas along axis 0 with replicated edges.

    d[t] = sum_{k=1..N} k (x[t+k] - x[t-k]) / (2 sum k^2); a linear ramp of
    slope r therefore maps to the constant r away from the edges.
    """
    if half_window < 1:
        raise ValueError("half_window must be >= 1")
    pad = [(half_window, half_window)] + [(0, 0)] * (x.ndim - 1)
    xp = np.pad(x, pad, mode="edge")
    num = np.zeros_like(x, dtype=np.float64)
    for k in range(1, half_window + 1):
        num += k * (xp[half_window + k : len(xp) - half_window + k] - xp[half_window - k : len(xp) - half_window - k])
    denom = 2.0 * sum(k * k for k in range(1, half_window + 1))
    return num / denom


def extract_fbank(
    clip: AudioClip,
    mode: str,
    stft: StftConfig = FBANK_STFT,
    n_mel: int = 128,
    with_deltas: bool = True,
    f_l: float = 0.0,
    f_h: float | None = None,
    matrix: DigitalFilterMatrix | None = None,
) -> FeatureMap:
    """Short-term log mel-filter energies, (L, 2, n) or (L, 6, n) with deltas.

    Channel order with deltas: the two static channels, then their deltas,
    then the delta-deltas.
    """
    pair = derive_channels(clip, mode)
    if f_h is None:
        f_h = clip.sample_rate / 2.0
    if matrix is None:
        bank = build_mel_scale(f_l, f_h, n_mel, shape="triangle")
        matrix = digitize(bank, stft.fft_size, clip.sample_rate)
    static = _per_channel_logenergy(pair, clip.sample_rate, stft, matrix)
    if with_deltas:
        d = delta_features(static)
        dd = delta_features(d)
        data = np.concatenate([static, d, dd], axis=1)
    else:
        data = static
    fp = _config_fingerprint("fbank", mode, stft, n_mel, with_deltas, f_l, f_h, clip.sample_rate)
    return FeatureMap(data=data.astype(np.float32), kind="fbank", channel_mode=mode, fingerprint=fp)


def extract_longterm_fbank(
    clip: AudioClip,
    mode: str,
    stft: StftConfig = SCALOGRAM_STFT,
    n_mel: int = 290,
    f_l: float = 0.0,
    f_h: float | None = None,
    matrix: DigitalFilterMatrix | None = None,
) -> FeatureMap:
    """Mel filters under the long-term framing, matching the wavelet bank's
    filter count, (L, 2, n)."""
    pair = derive_channels(clip, mode)
    if f_h is None:
        f_h = clip.sample_rate / 2.0
    if matrix is None:
        bank = build_mel_scale(f_l, f_h, n_mel, shape="triangle")
        matrix = digitize(bank, stft.fft_size, clip.sample_rate)
    data = _per_channel_logenergy(pair, clip.sample_rate, stft, matrix).astype(np.float32)
    fp = _config_fingerprint("fbank-long", mode, stft, n_mel, f_l, f_h, clip.sample_rate)
    return FeatureMap(data=data, kind="fbank-long", channel_mode=mode, fingerprint=fp)


def fit_normalization(corpus, corpus_id: str = "") -> NormStats:
    """Per (channel, filter) mean/std over all frames of all corpus maps.

    Accumulates per-file sums in corpus order so the result is deterministic
    regardless of how extraction was parallelized.
    """
    maps = list(corpus)
    if not maps:
        raise ValueError("normalization corpus is empty")
    cn = maps[0].data.shape[1:]
    total = np.zeros(cn)
    total_sq = np.zeros(cn)
    count = 0
    for m in maps:
        if m.data.shape[1:] != cn:
            raise ShapeMismatchError(
                f"corpus shapes are heterogeneous: {m.data.shape[1:]} vs {cn}"
            )
        x = m.data.astype(np.float64)
        total += x.sum(axis=0)
        total_sq += (x * x).sum(axis=0)
        count += x.shape[0]
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    std = np.maximum(np.sqrt(var), STD_FLOOR)
    return NormStats(mean=mean, std=std, corpus_id=corpus_id)


def apply_normalization(fmap: FeatureMap, stats: NormStats) -> FeatureMap:
    """Return (x - mean) / std as a new map flagged normalized."""
    if fmap.normalized:
        raise NormalizationStateError("feature map is already normalized")
    if stats.mean.shape != fmap.data.shape[1:]:
        raise ShapeMismatchError(
            f"stats shape {stats.mean.shape} does not match map {fmap.data.shape[1:]}"
        )
    data = (fmap.data.astype(np.float64) - stats.mean) / stats.std
    return replace(fmap, data=data, normalized=True)


def save_features(fmap: FeatureMap, path) -> None:
    """Write the binary feature format (f32 payload, trailing CRC32)."""
    L, c, n = fmap.data.shape
    for dim in (L, c, n):
        if dim >= 1 << 32:
            raise FeatureFileError(f"dimension {dim} overflows the u32 header")
    header = _MAGIC + struct.pack("<HBIII", _VERSION, _KIND_CODES[fmap.kind], L, c, n)
    payload = np.ascontiguousarray(fmap.data, dtype="<f4").tobytes()
    body = header + payload
    crc = zlib.crc32(body) & 0xFFFFFFFF
    Path(path).write_bytes(body + struct.pack("<I", crc))


def load_features(path) -> FeatureMap:
    """Read the binary feature format; verifies magic, dims and checksum."""
    raw = Path(path).read_bytes()
    head_len = 4 + struct.calcsize("<HBIII")
    if len(raw) < head_len + 4:
        raise FeatureFileError(f"file too small ({len(raw)} bytes) for a feature header")
    if raw[:4] != _MAGIC:
        raise FeatureFileError(f"bad magic {raw[:4]!r}")
    version, kind_code, L, c, n = struct.unpack_from("<HBIII", raw, 4)
    if version != _VERSION:
        raise FeatureFileError(f"unsupported version {version}")
    if kind_code not in _KIND_NAMES:
        raise FeatureFileError(f"unknown kind code {kind_code}")
    expected = head_len + 4 * L * c * n + 4
    if len(raw) < expected:
        raise FeatureFileError(
            f"truncated feature file: expected {expected} bytes, found {len(raw)}"
        )
    if len(raw) > expected:
        raise FeatureFileError(
            f"trailing garbage: expected {expected} bytes, found {len(raw)}"
        )
    (stored_crc,) = struct.unpack_from("<I", raw, expected - 4)
    actual_crc = zlib.crc32(raw[: expected - 4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise FeatureFileError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    data = np.frombuffer(raw[head_len : expected - 4], dtype="<f4").reshape(L, c, n)
    return FeatureMap(data=data.copy(), kind=_KIND_NAMES[kind_code])


def save_norm_stats(stats: NormStats, path) -> None:
    doc = {
        "corpus_id": stats.corpus_id,
        "channels": stats.mean.shape[0],
        "filters": stats.mean.shape[1],
        "mean": stats.mean.tolist(),
        "std": stats.std.tolist(),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_norm_stats(path) -> NormStats:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return NormStats(
        mean=np.asarray(doc["mean"], dtype=np.float64),
        std=np.asarray(doc["std"], dtype=np.float64),
        corpus_id=doc.get("corpus_id", ""),
    )
