"""Passband filter scales and their digitized forms on FFT bins.

Two scales are provided:

* wavelet scale: a geometric (constant-Q) ladder of passband filters above
  a boundary frequency 2Q/T_max, where Q filters share each octave and the
  bandwidth tracks the center (bw = center/Q), plus evenly spaced filters
  of fixed bandwidth 2/T_max covering [f_l, 2Q/T_max). The constant-Q count
  K = floor(1 + Q log2(T_max f_h / 2Q)) and the low-frequency count
  P = floor(1 / (2^(1/Q) - 1)) so that the even spacing continues the
  geometric ladder's step at the junction.
* mel scale: centers evenly spaced in m(f) = 781 log2(1 + f/700) between
  m(f_l) and m(f_h), the range divided into N+1 parts.

``digitize`` evaluates each filter on the one-sided FFT bin grid, either as
a Gaussian bump exp(-(center-f)^2 / (2 bw^2)) or as a triangle with its apex
at the center and feet at the neighboring centers (the first foot pinned to
0 Hz and the last to f_h).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "WaveletScaleParams",
    "FilterBank",
    "DigitalFilterMatrix",
    "ScaleDegenerateError",
    "DegenerateFilterError",
    "count_constant_q",
    "count_evenly_spaced",
    "build_wavelet_scale",
    "build_mel_scale",
    "mel_from_hz",
    "hz_from_mel",
    "digitize",
]

FILTER_SHAPES = ("gaussian", "triangle")
GAUSSIAN_STORE_FLOOR = 1e-8  # digitized gaussian weights below this are stored as 0
DEGENERATE_ROW_THRESHOLD = 1e-6


class ScaleDegenerateError(ValueError):
    """Scale parameters admit no constant-Q filters."""


class DegenerateFilterError(ValueError):
    """A digitized filter row carries no usable weight."""


@dataclass(frozen=True)
class WaveletScaleParams:
    """Wavelet scale parameters: band edges, maximum window, octave density.

    The boundary frequency 2Q/T_max separates the evenly spaced low band
    from the constant-Q band and must lie strictly inside (f_l, f_h).
    """

    f_h: float
    f_l: float
    T_max: float
    Q: int

    def __post_init__(self):
        if self.Q < 1 or int(self.Q) != self.Q:
            raise ValueError(f"Q must be a positive integer, got {self.Q}")
        if self.T_max <= 0:
            raise ValueError(f"T_max must be positive, got {self.T_max}")
        boundary = 2.0 * self.Q / self.T_max
        if not 0 <= self.f_l < boundary:
            raise ValueError(f"need 0 <= f_l < 2Q/T_max ({boundary:.4g}), got f_l={self.f_l}")
        if not boundary < self.f_h:
            raise ScaleDegenerateError(
                f"need 2Q/T_max ({boundary:.4g}) < f_h, got f_h={self.f_h}"
            )

    @property
    def boundary_freq(self) -> float:
        """Lowest constant-Q center, 2Q/T_max."""
        return 2.0 * self.Q / self.T_max


def count_constant_q(params: WaveletScaleParams) -> int:
    """Number of constant-Q filters, floor(1 + Q log2(T_max f_h / 2Q))."""
    ratio = params.T_max * params.f_h / (2.0 * params.Q)
    if ratio <= 1.0:
        raise ScaleDegenerateError(
            f"T_max*f_h = {params.T_max * params.f_h:.4g} must exceed 2Q = {2 * params.Q}"
        )
    return int(math.floor(1.0 + params.Q * math.log2(ratio)))


def count_evenly_spaced(Q: int) -> int:
    """Number of evenly spaced low-frequency filters, floor(1 / (2^(1/Q) - 1))."""
    if Q < 1:
        raise ValueError(f"Q must be >= 1, got {Q}")
    return int(math.floor(1.0 / (2.0 ** (1.0 / Q) - 1.0)))


@dataclass(frozen=True)
class FilterBank:
    """A set of passband filters: ascending centers with matching bandwidths.

    ``K`` counts geometric (constant-Q) filters and ``P`` evenly spaced
    ones; J = K + P. Mel banks use K = N filters, P = 0. ``f_h`` is the
    scale's upper edge, used as the last triangle foot when digitizing.
    """

    centers: np.ndarray
    bandwidths: np.ndarray
    shape: str
    K: int
    P: int
    scale_kind: str
    f_h: float

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64)
        bandwidths = np.asarray(self.bandwidths, dtype=np.float64)
        if self.shape not in FILTER_SHAPES:
            raise ValueError(f"unknown filter shape {self.shape!r}")
        if centers.ndim != 1 or centers.shape != bandwidths.shape:
            raise ValueError("centers and bandwidths must be matching 1-D arrays")
        if len(centers) != self.K + self.P:
            raise ValueError(f"J = {len(centers)} != K + P = {self.K + self.P}")
        if np.any(np.diff(centers) <= 0):
            raise ValueError("centers must be strictly increasing")
        if np.any(bandwidths <= 0):
            raise ValueError("bandwidths must be positive")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "bandwidths", bandwidths)

    @property
    def J(self) -> int:
        return len(self.centers)

    def with_shape(self, shape: str) -> "FilterBank":
        return FilterBank(
            centers=self.centers,
            bandwidths=self.bandwidths,
            shape=shape,
            K=self.K,
            P=self.P,
            scale_kind=self.scale_kind,
            f_h=self.f_h,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "scale_kind": self.scale_kind,
                "shape": self.shape,
                "params": {"K": self.K, "P": self.P, "f_h": self.f_h},
                "centers": self.centers.tolist(),
                "bandwidths": self.bandwidths.tolist(),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "FilterBank":
        doc = json.loads(text)
        return cls(
            centers=np.asarray(doc["centers"], dtype=np.float64),
            bandwidths=np.asarray(doc["bandwidths"], dtype=np.float64),
            shape=doc["shape"],
            K=int(doc["params"]["K"]),
            P=int(doc["params"]["P"]),
            scale_kind=doc["scale_kind"],
            f_h=float(doc["params"]["f_h"]),
        )

    def save_json(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")


def build_wavelet_scale(params: WaveletScaleParams, shape: str = "gaussian") -> FilterBank:
    """Construct the wavelet scale.

    Centers for j < P step linearly from f_l toward the boundary 2Q/T_max
    with constant bandwidth 2/T_max; from j = P on they grow geometrically
    as boundary * 2^((j-P)/Q) with bandwidth center/Q.
    """
    K = count_constant_q(params)
    P = count_evenly_spaced(params.Q)
    boundary = params.boundary_freq
    j_low = np.arange(P, dtype=np.float64)
    centers_low = params.f_l + (boundary - params.f_l) * j_low / P
    bw_low = np.full(P, 2.0 / params.T_max)
    j_high = np.arange(K, dtype=np.float64)
    centers_high = boundary * 2.0 ** (j_high / params.Q)
    bw_high = centers_high / params.Q
    return FilterBank(
        centers=np.concatenate([centers_low, centers_high]),
        bandwidths=np.concatenate([bw_low, bw_high]),
        shape=shape,
        K=K,
        P=P,
        scale_kind="wavelet",
        f_h=params.f_h,
    )


def mel_from_hz(f):
    """Mel frequency, 781 log2(1 + f/700)."""
    return 781.0 * np.log2(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def hz_from_mel(m):
    """Inverse of mel_from_hz, 700 (2^(m/781) - 1)."""
    return 700.0 * (2.0 ** (np.asarray(m, dtype=np.float64) / 781.0) - 1.0)


def build_mel_scale(f_l: float, f_h: float, n_mel: int, shape: str = "triangle") -> FilterBank:
    """Mel scale: N centers evenly spaced in the mel domain over (f_l, f_h).

    The mel range [m(f_l), m(f_h)] is divided into N+1 parts; filter i sits
    at the (i+1)-th grid point, i = 0..N-1.
    """
    if not 0 <= f_l < f_h:
        raise ValueError(f"need 0 <= f_l < f_h, got f_l={f_l}, f_h={f_h}")
    if n_mel < 1:
        raise ValueError(f"n_mel must be >= 1, got {n_mel}")
    m_l = float(mel_from_hz(f_l))
    m_h = float(mel_from_hz(f_h))
    i = np.arange(n_mel, dtype=np.float64)
    centers = hz_from_mel(m_l + (m_h - m_l) * (i + 1.0) / (n_mel + 1.0))
    # informational half foot-to-foot span; digitization re-derives feet
    left = np.concatenate([[f_l], centers[:-1]])
    right = np.concatenate([centers[1:], [f_h]])
    bandwidths = (right - left) / 2.0
    return FilterBank(
        centers=centers,
        bandwidths=bandwidths,
        shape=shape,
        K=n_mel,
        P=0,
        scale_kind="mel",
        f_h=f_h,
    )


@dataclass(frozen=True)
class DigitalFilterMatrix:
    """Nonnegative filter gains over the one-sided FFT bin grid.

    ``weights`` is J x B with B = fft_size/2 + 1; bin b sits at frequency
    b * sample_rate / fft_size.
    """

    weights: np.ndarray
    fft_size: int
    sample_rate: float

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 2:
            raise ValueError("weights must be 2-D (filters, bins)")
        if weights.shape[1] != self.fft_size // 2 + 1:
            raise ValueError(
                f"expected {self.fft_size // 2 + 1} bins for fft_size {self.fft_size}, "
                f"got {weights.shape[1]}"
            )
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "weights", weights)

    @property
    def num_filters(self) -> int:
        return self.weights.shape[0]

    @property
    def num_bins(self) -> int:
        return self.weights.shape[1]

    @property
    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.num_bins) * (self.sample_rate / self.fft_size)


def digitize(bank: FilterBank, fft_size: int, sample_rate: float) -> DigitalFilterMatrix:
    """Evaluate a filter bank on the FFT bin grid.

    Gaussian rows are dense (tiny weights below 1e-8 stored as exact 0);
    triangle rows have apex 1 at the center and feet at the neighboring
    centers, with the first foot at 0 Hz and the last at the bank's f_h.
    Raises DegenerateFilterError when a row retains no weight above 1e-6.
    """
    if fft_size < 2 or fft_size & (fft_size - 1):
        raise ValueError(f"fft_size must be a power of two, got {fft_size}")
    if sample_rate / 2.0 < bank.centers[-1]:
        raise ValueError(
            f"sample_rate/2 = {sample_rate / 2:.4g} is below the top center "
            f"{bank.centers[-1]:.4g}"
        )
    n_bins = fft_size // 2 + 1
    f = np.arange(n_bins, dtype=np.float64) * (sample_rate / fft_size)
    if bank.shape == "gaussian":
        d = bank.centers[:, None] - f[None, :]
        weights = np.exp(-(d * d) / (2.0 * bank.bandwidths[:, None] ** 2))
        weights[weights < GAUSSIAN_STORE_FLOOR] = 0.0
    else:
        centers = bank.centers
        left = np.concatenate([[0.0], centers[:-1]])
        right = np.concatenate([centers[1:], [bank.f_h]])
        with np.errstate(divide="ignore", invalid="ignore"):
            rising = (f[None, :] - left[:, None]) / (centers - left)[:, None]
            falling = (right[:, None] - f[None, :]) / (right - centers)[:, None]
        # zero-width edges (first center at 0 Hz or last center at f_h)
        # degenerate to a step ending at the apex
        rising = np.where(
            (centers == left)[:, None], np.where(f[None, :] >= centers[:, None], np.inf, 0.0), rising
        )
        falling = np.where(
            (centers == right)[:, None], np.where(f[None, :] <= centers[:, None], np.inf, 0.0), falling
        )
        weights = np.clip(np.minimum(rising, falling), 0.0, None)
        weights[~np.isfinite(weights)] = 1.0  # both edges degenerate: single-point filter
    row_max = weights.max(axis=1)
    bad = np.nonzero(row_max <= DEGENERATE_ROW_THRESHOLD)[0]
    if bad.size:
        j = int(bad[0])
        raise DegenerateFilterError(
            f"filter {j} (center {bank.centers[j]:.4g} Hz) has no weight above "
            f"{DEGENERATE_ROW_THRESHOLD} on the {n_bins}-bin grid"
        )
    return DigitalFilterMatrix(weights=weights, fft_size=fft_size, sample_rate=float(sample_rate))
