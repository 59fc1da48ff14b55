"""Brute-force time-domain references for the frequency-weighted energy path.

The production pipeline measures per-frame filter energies by weighting
squared STFT magnitudes. The same quantity, up to a fixed gain and the
window shape, is the frame-averaged squared magnitude of the signal
convolved with the filter's time-domain form: a complex exponential at the
center frequency under a Gaussian envelope of time-std 1/(2 pi bandwidth).

This module computes that reference the slow, direct way (no overlap-add,
no shared code with the feature extractors beyond the framing definition)
so the two paths can be compared. Trajectories are mean-normalized before
comparison; the two paths differ by a fixed gain, so only the shape is
contractual.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .features import FeatureMap, StftConfig, stft_magnitude
from .filterbank import DigitalFilterMatrix, FilterBank

__all__ = [
    "TimeDomainWavelet",
    "PathComparison",
    "CosineSimilarity",
    "synthesize_wavelet",
    "convolve_energy",
    "compare_paths",
    "time_path_energies",
    "dominant_filter_trajectory",
    "adjacent_cosine_similarity",
]

TRUNCATION_STDS = 4.0  # envelope amplitude at the cut is exp(-8) < 3.4e-4
FLOOR_ENERGY = 1e-14


@dataclass(frozen=True)
class TimeDomainWavelet:
    """Complex passband filter taps, centered, peak magnitude at t = 0."""

    taps: np.ndarray
    center: float
    support: float
    sample_rate: int

    @property
    def half_taps(self) -> int:
        return (len(self.taps) - 1) // 2


def synthesize_wavelet(center: float, bandwidth: float, rate: int) -> TimeDomainWavelet:
    """Closed-form time-domain filter for a Gaussian passband.

    The inverse transform of exp(-(center-f)^2 / (2 bw^2)) is a complex
    exponential at ``center`` with a Gaussian envelope of time-std
    1/(2 pi bw); the constant gain is dropped (peak tap magnitude is 1).
    Taps are truncated at +-4 envelope stds.
    """
    if not center < rate / 2:
        raise ValueError(f"center {center} Hz is not below Nyquist ({rate / 2} Hz)")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    sigma_t = 1.0 / (2.0 * np.pi * bandwidth)
    half = int(np.ceil(TRUNCATION_STDS * sigma_t * rate))
    t = np.arange(-half, half + 1, dtype=np.float64) / rate
    taps = np.exp(2j * np.pi * center * t) * np.exp(-(t * t) / (2.0 * sigma_t * sigma_t))
    return TimeDomainWavelet(
        taps=taps, center=float(center), support=2.0 * half / rate, sample_rate=int(rate)
    )


def convolve_energy(
    signal: np.ndarray, wavelet: TimeDomainWavelet, framing: StftConfig
) -> np.ndarray:
    """Per-frame mean |convolution|^2 under the production framing.

    The convolution is direct (O(N*M)); frames follow the same integer
    sample grid as the STFT path: frame t covers samples
    [t*hop, t*hop + window).
    """
    signal = np.asarray(signal, dtype=np.float64)
    rate = wavelet.sample_rate
    if len(signal) <= len(wavelet.taps):
        raise ValueError(
            f"signal of {len(signal)} samples is not longer than the "
            f"{len(wavelet.taps)}-tap wavelet"
        )
    y = np.convolve(signal, wavelet.taps, mode="same")
    power = np.abs(y) ** 2
    win = framing.window_samples(rate)
    hop = framing.shift_samples(rate)
    n_frames = len(signal) // hop
    energies = np.empty(n_frames)
    for t in range(n_frames):
        seg = power[t * hop : t * hop + win]
        energies[t] = seg.mean() if len(seg) else 0.0
    return energies


def _interior_mask(n_samples: int, framing: StftConfig, rate: int, guard_samples: int) -> np.ndarray:
    win = framing.window_samples(rate)
    hop = framing.shift_samples(rate)
    n_frames = n_samples // hop
    starts = np.arange(n_frames) * hop
    return (starts >= guard_samples) & (starts + win + guard_samples <= n_samples)


@dataclass(frozen=True)
class PathComparison:
    """Mean-normalized frequency-path vs time-path frame trajectories."""

    stft_path: np.ndarray
    time_path: np.ndarray
    max_rel_err: float
    frames_compared: int
    at_floor: bool

    def to_json(self, filter_index: int) -> str:
        return json.dumps(
            {
                "filter_index": filter_index,
                "max_rel_err": self.max_rel_err,
                "frames_compared": self.frames_compared,
                "at_floor": self.at_floor,
            }
        )


def compare_paths(
    signal: np.ndarray,
    rate: int,
    filter_index: int,
    bank: FilterBank,
    matrix: DigitalFilterMatrix,
    framing: StftConfig,
) -> PathComparison:
    """Compare the two routes to filter ``filter_index``'s frame energies.

    The frequency route weights squared STFT magnitudes by the digitized
    row; the time route convolves with the synthesized wavelet. Both are
    restricted to interior frames (no window or wavelet support crossing a
    signal edge), normalized by their interior means, and the maximum
    relative deviation is reported. Near-silent trajectories are flagged
    ``at_floor`` and skipped.
    """
    signal = np.asarray(signal, dtype=np.float64)
    spec = stft_magnitude(signal, rate, framing)
    row = matrix.weights[filter_index]
    stft_energies = (spec.magnitudes**2) @ row

    wavelet = synthesize_wavelet(
        bank.centers[filter_index], bank.bandwidths[filter_index], rate
    )
    time_energies = convolve_energy(signal, wavelet, framing)

    interior = _interior_mask(len(signal), framing, rate, wavelet.half_taps)
    s = stft_energies[interior]
    t = time_energies[interior]
    if len(s) == 0:
        raise ValueError("no interior frames to compare; use a longer signal")
    if s.mean() < FLOOR_ENERGY or t.mean() < FLOOR_ENERGY:
        return PathComparison(
            stft_path=s, time_path=t, max_rel_err=0.0, frames_compared=0, at_floor=True
        )
    s_norm = s / s.mean()
    t_norm = t / t.mean()
    rel = np.abs(s_norm - t_norm) / t_norm
    return PathComparison(
        stft_path=s_norm,
        time_path=t_norm,
        max_rel_err=float(rel.max()),
        frames_compared=int(len(s)),
        at_floor=False,
    )


def time_path_energies(
    signal: np.ndarray, rate: int, bank: FilterBank, framing: StftConfig
) -> np.ndarray:
    """Time-route energies for every filter, (J, frames)."""
    signal = np.asarray(signal, dtype=np.float64)
    rows = []
    for center, bw in zip(bank.centers, bank.bandwidths):
        wavelet = synthesize_wavelet(center, bw, rate)
        rows.append(convolve_energy(signal, wavelet, framing))
    return np.stack(rows)


def dominant_filter_trajectory(
    signal: np.ndarray, rate: int, bank: FilterBank, framing: StftConfig
) -> tuple:
    """Per-frame argmax filter of the time route, with the interior mask.

    The production path weights squared magnitudes by the Gaussian
    amplitude response, so the band power it measures has the kernel
    exp(-(c-f)^2 / (2 bw^2)); a wavelet of bandwidth sqrt(2) bw has exactly
    that power response. This comparison therefore convolves with
    sqrt(2)-scaled wavelets and averages |y|^2 under the squared analysis
    window, so that which-filter-dominates reflects path disagreement, not
    the width mismatch between amplitude and power kernels. Trajectories
    are normalized per filter by their interior mean before the argmax.

    The mask uses the widest (unscaled) wavelet's support so every compared
    frame is free of edge effects for all filters.
    """
    signal = np.asarray(signal, dtype=np.float64)
    win = framing.window_samples(rate)
    hop = framing.shift_samples(rate)
    n_frames = len(signal) // hop
    frame_w = np.hanning(win) ** 2
    frame_w /= frame_w.sum()
    rows = []
    for center, bw in zip(bank.centers, bank.bandwidths):
        wavelet = synthesize_wavelet(center, bw * np.sqrt(2.0), rate)
        power = np.abs(np.convolve(signal, wavelet.taps, mode="same")) ** 2
        e = np.empty(n_frames)
        for t in range(n_frames):
            seg = power[t * hop : t * hop + win]
            e[t] = (seg * frame_w).sum() if len(seg) == win else seg.mean() if len(seg) else 0.0
        rows.append(e)
    energies = np.stack(rows)
    widest = int(np.argmin(bank.bandwidths))
    guard = synthesize_wavelet(bank.centers[widest], bank.bandwidths[widest], rate).half_taps
    interior = _interior_mask(len(signal), framing, rate, guard)
    norm = energies[:, interior].mean(axis=1, keepdims=True)
    energies = energies / np.maximum(norm, FLOOR_ENERGY)
    return np.argmax(energies, axis=0), interior


class CosineSimilarity(NamedTuple):
    value: float
    pairs: int
    excluded: int


def adjacent_cosine_similarity(fmap, stride: int = 1) -> CosineSimilarity:
    """Mean cosine similarity between frames ``stride`` apart.

    Frames are flattened over (channel, filter). Pairs touching a zero-norm
    frame are excluded and counted.
    """
    data = fmap.data if isinstance(fmap, FeatureMap) else np.asarray(fmap)
    if data.ndim == 3:
        frames = data.reshape(data.shape[0], -1).astype(np.float64)
    elif data.ndim == 2:
        frames = data.astype(np.float64)
    else:
        raise ValueError("expected a FeatureMap or a 2-D/3-D array")
    L = frames.shape[0]
    if stride < 1 or L < stride + 1:
        raise ValueError(f"need at least stride+1 = {stride + 1} frames, got {L}")
    a = frames[:-stride]
    b = frames[stride:]
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    valid = (na > 0) & (nb > 0)
    excluded = int(np.count_nonzero(~valid))
    if not np.any(valid):
        raise ValueError("all frame pairs touch a zero-norm frame")
    cos = np.sum(a[valid] * b[valid], axis=1) / (na[valid] * nb[valid])
    return CosineSimilarity(value=float(cos.mean()), pairs=int(valid.sum()), excluded=excluded)
