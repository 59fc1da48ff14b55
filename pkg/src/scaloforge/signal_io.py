"""Audio ingestion, channel derivation, synthetic test signals and manifests.

Decoding is deliberately narrow: RIFF/WAVE containers holding integer PCM at
16 or 24 bit, little-endian, 1 or 2 channels. Samples are scaled to [-1, 1]
by 2^(bits-1). No resampling is performed; clips are consumed at native rate.

Dataset manifests are TSV files with the header
``id<TAB>source<TAB>scene_label<TAB>city_label``. Label vocabularies are
built in first-appearance order so that integer label ids are reproducible.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "AudioClip",
    "ChannelPair",
    "DatasetManifest",
    "ManifestEntry",
    "SynthSpec",
    "WavFormatError",
    "WavUnsupportedError",
    "WavTruncationError",
    "ManifestError",
    "ChannelCountError",
    "AliasingError",
    "read_wav",
    "derive_channels",
    "synth_signal",
    "load_manifest",
    "load_clip",
    "parse_synth_source",
]

CHANNEL_MODES = ("left-right", "ave-diff")
SYNTH_KINDS = ("tone", "chirp", "white-noise", "silence")


class WavFormatError(ValueError):
    """Container is not a well-formed RIFF/WAVE file."""


class WavUnsupportedError(ValueError):
    """Well-formed container but a codec/bit depth we do not decode."""


class WavTruncationError(ValueError):
    """Data chunk ends before its declared size."""


class ManifestError(ValueError):
    """Manifest TSV violates the schema (columns, duplicate ids)."""


class ChannelCountError(ValueError):
    """Operation requires a different channel count."""


class AliasingError(ValueError):
    """Requested synthetic frequency is at or above Nyquist."""


@dataclass(frozen=True)
class AudioClip:
    """Multichannel PCM audio held as float64 amplitudes in [-1, 1].

    ``samples`` has shape (num_channels, num_samples); all channels share
    one length and one sample rate.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ValueError(f"samples must be 2-D (channels, n), got ndim={samples.ndim}")
        if samples.shape[0] not in (1, 2):
            raise ChannelCountError(f"expected 1 or 2 channels, got {samples.shape[0]}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("amplitudes must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.samples.shape[1] / self.sample_rate


@dataclass(frozen=True)
class ChannelPair:
    """Two mono signals derived from a stereo clip.

    In ``ave-diff`` mode ``a`` is the channel mean (L+R)/2 and ``b`` the
    half-difference (L-R)/2, so L = a+b and R = a-b recover the original.
    """

    mode: str
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.mode not in CHANNEL_MODES:
            raise ValueError(f"unknown channel mode {self.mode!r}")
        if self.a.shape != self.b.shape:
            raise ValueError("channel signals must share a shape")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    source: str
    scene_label: str
    city_label: str


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered dataset records plus label vocabularies.

    Vocabularies are in first-appearance order; every entry's labels are
    members. Entry ids are unique.
    """

    entries: tuple = ()
    scene_vocabulary: tuple = ()
    city_vocabulary: tuple = ()

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ManifestError(f"duplicate entry ids: {dupes}")
        scenes = set(self.scene_vocabulary)
        cities = set(self.city_vocabulary)
        for e in self.entries:
            if e.scene_label not in scenes:
                raise ManifestError(f"scene label {e.scene_label!r} missing from vocabulary")
            if e.city_label not in cities:
                raise ManifestError(f"city label {e.city_label!r} missing from vocabulary")

    def __len__(self) -> int:
        return len(self.entries)

    def scene_index(self, label: str) -> int:
        return self.scene_vocabulary.index(label)

    def city_index(self, label: str) -> int:
        return self.city_vocabulary.index(label)

    @property
    def ids(self) -> tuple:
        return tuple(e.id for e in self.entries)


def _require(cond: bool, exc: type, msg: str):
    if not cond:
        raise exc(msg)


def read_wav(path) -> AudioClip:
    """Decode a 16/24-bit integer PCM RIFF/WAVE file.

    Raises WavFormatError for malformed containers (including big-endian
    RIFX), WavUnsupportedError for codecs or bit depths outside the PCM
    16/24-bit LE subset, and WavTruncationError when the data chunk is
    shorter than declared (the message names expected vs found byte counts).
    """
    raw = Path(path).read_bytes()
    _require(len(raw) >= 12, WavFormatError, f"file too small for a RIFF header ({len(raw)} bytes)")
    magic = raw[0:4]
    if magic == b"RIFX":
        raise WavFormatError("big-endian RIFX container is not a RIFF/WAVE LE file")
    _require(magic == b"RIFF", WavFormatError, f"bad container magic {magic!r}")
    _require(raw[8:12] == b"WAVE", WavFormatError, f"bad wave magic {raw[8:12]!r}")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (csize,) = struct.unpack_from("<I", raw, pos + 4)
        body_start = pos + 8
        if cid == b"fmt ":
            _require(csize >= 16, WavFormatError, f"fmt chunk too small ({csize} bytes)")
            _require(body_start + 16 <= len(raw), WavFormatError, "fmt chunk past end of file")
            fmt = struct.unpack_from("<HHIIHH", raw, body_start)
        elif cid == b"data":
            data = (body_start, csize)
            break
        # chunks are word-aligned; odd sizes carry one pad byte
        pos = body_start + csize + (csize & 1)
    _require(fmt is not None, WavFormatError, "missing fmt chunk")
    _require(data is not None, WavFormatError, "missing data chunk")

    audio_format, n_channels, rate, _byte_rate, block_align, bits = fmt
    if audio_format != 1:
        raise WavUnsupportedError(f"audio format tag {audio_format} is not integer PCM")
    if bits not in (16, 24):
        raise WavUnsupportedError(f"{bits}-bit samples unsupported (want 16 or 24)")
    if n_channels not in (1, 2):
        raise WavUnsupportedError(f"{n_channels} channels unsupported (want 1 or 2)")
    _require(rate > 0, WavFormatError, "non-positive sample rate")

    start, declared = data
    available = len(raw) - start
    if available < declared:
        raise WavTruncationError(
            f"data chunk truncated: expected {declared} bytes, found {available}"
        )
    body = raw[start : start + declared]
    bytes_per_sample = bits // 8
    frame_bytes = bytes_per_sample * n_channels
    if block_align and block_align != frame_bytes:
        raise WavFormatError(f"block align {block_align} does not match {frame_bytes}")
    if declared % frame_bytes:
        raise WavTruncationError(
            f"data chunk truncated: {declared} bytes is not a whole number of "
            f"{frame_bytes}-byte frames"
        )

    if bits == 16:
        ints = np.frombuffer(body, dtype="<i2").astype(np.int32)
    else:
        b = np.frombuffer(body, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints -= (ints & 0x800000) << 1  # sign-extend 24 -> 32 bit
    scale = float(1 << (bits - 1))
    samples = (ints / scale).reshape(-1, n_channels).T
    return AudioClip(samples=samples, sample_rate=int(rate))


def derive_channels(clip: AudioClip, mode: str) -> ChannelPair:
    """Split a stereo clip into (L, R) or ((L+R)/2, (L-R)/2)."""
    if mode not in CHANNEL_MODES:
        raise ValueError(f"unknown channel mode {mode!r}")
    if clip.num_channels != 2:
        raise ChannelCountError(f"channel derivation needs 2 channels, got {clip.num_channels}")
    left, right = clip.samples[0], clip.samples[1]
    if mode == "left-right":
        return ChannelPair(mode=mode, a=left.copy(), b=right.copy())
    return ChannelPair(mode=mode, a=(left + right) / 2.0, b=(left - right) / 2.0)


@dataclass(frozen=True)
class SynthSpec:
    """Deterministic synthetic signal description.

    ``chirp`` sweeps the instantaneous frequency linearly from 0 Hz at t=0
    to ``freq`` at the end of the clip. ``white-noise`` draws from a seeded
    uniform(-1, 1); with two channels the draws are independent per channel.
    """

    kind: str
    duration: float
    rate: int
    freq: float = 0.0
    seed: int = 0
    num_channels: int = 1

    def __post_init__(self):
        if self.kind not in SYNTH_KINDS:
            raise ValueError(f"unknown synth kind {self.kind!r}")
        if self.duration <= 0 or self.rate <= 0:
            raise ValueError("duration and rate must be positive")
        if self.num_channels not in (1, 2):
            raise ChannelCountError(f"num_channels must be 1 or 2, got {self.num_channels}")
        if self.kind in ("tone", "chirp") and not self.freq < self.rate / 2:
            raise AliasingError(f"freq {self.freq} Hz is not below Nyquist ({self.rate / 2} Hz)")


def synth_signal(spec: SynthSpec) -> AudioClip:
    """Render a SynthSpec. Pure: equal specs produce bit-identical clips."""
    n = int(round(spec.duration * spec.rate))
    t = np.arange(n, dtype=np.float64) / spec.rate
    if spec.kind == "silence":
        mono = np.zeros(n)
    elif spec.kind == "tone":
        mono = np.sin(2.0 * np.pi * spec.freq * t)
    elif spec.kind == "chirp":
        # phase of a 0 -> freq linear sweep: f_inst(t) = freq * t / duration
        mono = np.sin(np.pi * spec.freq / spec.duration * t * t)
    else:  # white-noise
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        samples = rng.uniform(-1.0, 1.0, size=(spec.num_channels, n))
        return AudioClip(samples=samples, sample_rate=spec.rate)
    samples = np.tile(mono, (spec.num_channels, 1))
    return AudioClip(samples=samples, sample_rate=spec.rate)


def parse_synth_source(source: str) -> SynthSpec:
    """Parse a manifest source like ``synth:kind=tone,freq=440,duration=10,rate=48000,seed=3,channels=2``."""
    if not source.startswith("synth:"):
        raise ValueError(f"not a synthetic source: {source!r}")
    fields = {}
    for part in source[len("synth:") :].split(","):
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"bad synth field {part!r} in {source!r}")
        key, value = part.split("=", 1)
        fields[key.strip()] = value.strip()
    try:
        return SynthSpec(
            kind=fields["kind"],
            duration=float(fields["duration"]),
            rate=int(fields["rate"]),
            freq=float(fields.get("freq", 0.0)),
            seed=int(fields.get("seed", 0)),
            num_channels=int(fields.get("channels", 1)),
        )
    except KeyError as exc:
        raise ValueError(f"synth source {source!r} missing field {exc.args[0]!r}") from None


MANIFEST_COLUMNS = ("id", "source", "scene_label", "city_label")


def load_manifest(path) -> DatasetManifest:
    """Load a TSV manifest; vocabularies follow first appearance order."""
    text = Path(path).read_text(encoding="utf-8")
    if text.strip() == "":
        return DatasetManifest()
    rows = list(csv.reader(text.splitlines(), delimiter="\t"))
    header = tuple(rows[0])
    if header != MANIFEST_COLUMNS:
        missing = [c for c in MANIFEST_COLUMNS if c not in header]
        raise ManifestError(
            f"manifest header {header} does not match {MANIFEST_COLUMNS}"
            + (f"; missing columns {missing}" if missing else "")
        )
    entries = []
    scenes: list = []
    cities: list = []
    seen_ids = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if row == []:
            continue
        if len(row) != len(MANIFEST_COLUMNS):
            raise ManifestError(f"line {lineno}: expected {len(MANIFEST_COLUMNS)} columns, got {len(row)}")
        entry = ManifestEntry(*row)
        if entry.id in seen_ids:
            raise ManifestError(f"line {lineno}: duplicate id {entry.id!r}")
        seen_ids.add(entry.id)
        if entry.scene_label not in scenes:
            scenes.append(entry.scene_label)
        if entry.city_label not in cities:
            cities.append(entry.city_label)
        entries.append(entry)
    return DatasetManifest(
        entries=tuple(entries),
        scene_vocabulary=tuple(scenes),
        city_vocabulary=tuple(cities),
    )


def load_clip(source: str) -> AudioClip:
    """Resolve a manifest source: a ``synth:`` spec or a WAV path."""
    if source.startswith("synth:"):
        return synth_signal(parse_synth_source(source))
    return read_wav(source)
