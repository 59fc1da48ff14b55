"""Test-only WAV writer for round-trip checks against the production reader."""

import struct

import numpy as np


def write_wav(path, samples: np.ndarray, rate: int, bits: int = 16) -> None:
    """Write integer PCM RIFF/WAVE; samples are (channels, n) floats in [-1, 1]."""
    if bits not in (16, 24):
        raise ValueError("writer supports 16 or 24 bit only")
    samples = np.asarray(samples, dtype=np.float64)
    n_channels, n = samples.shape
    scale = 1 << (bits - 1)
    ints = np.clip(np.round(samples * scale), -scale, scale - 1).astype(np.int64)
    interleaved = ints.T.reshape(-1)
    if bits == 16:
        body = interleaved.astype("<i2").tobytes()
    else:
        u = (interleaved & 0xFFFFFF).astype(np.uint32)
        b = np.empty((len(u), 3), dtype=np.uint8)
        b[:, 0] = u & 0xFF
        b[:, 1] = (u >> 8) & 0xFF
        b[:, 2] = (u >> 16) & 0xFF
        body = b.tobytes()
    bytes_per = bits // 8
    fmt = struct.pack(
        "<HHIIHH", 1, n_channels, rate, rate * n_channels * bytes_per, n_channels * bytes_per, bits
    )
    data = b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(body)) + b"WAVE"
    data += b"fmt " + struct.pack("<I", len(fmt)) + fmt
    data += b"data" + struct.pack("<I", len(body)) + body
    with open(path, "wb") as fh:
        fh.write(data)


def write_wav_int(path, ints: np.ndarray, rate: int, bits: int = 16) -> None:
    """Write raw integer frames (channels, n) without float scaling."""
    scale = 1 << (bits - 1)
    write_wav(path, np.asarray(ints, dtype=np.float64) / scale, rate, bits)
