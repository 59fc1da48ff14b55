"""Learnable cosine-domain temporal weighting over fixed-length chunks.

A chunk X (T frames x N features) and its centered second-order companion
Y = X*X - column_mean(X*X) are each transformed along time with the
orthonormal DCT-II, weighted elementwise by learnable matrices, brought
back with the inverse transform, concatenated along features and mapped
linearly back to T x N. All-ones weights with a projection that keeps the
X branch reproduce the input exactly (orthonormal transform pair).
"""

from __future__ import annotations

import numpy as np
import scipy.fft

from .core import Layer, ShapeError, Tensor, _he_normal

__all__ = ["ChunkSizeError", "dct2", "idct2", "dct_temporal_forward", "DctTemporal"]


class ChunkSizeError(ValueError):
    """Chunk length does not match the module configuration."""


def dct2(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Orthonormal DCT-II along ``axis``."""
    return scipy.fft.dct(x, type=2, norm="ortho", axis=axis)


def idct2(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Orthonormal inverse of dct2 (the DCT-III)."""
    return scipy.fft.idct(x, type=2, norm="ortho", axis=axis)


def _second_order(x: np.ndarray) -> np.ndarray:
    sq = x * x
    return sq - sq.mean(axis=0, keepdims=True)


def dct_temporal_forward(
    x: np.ndarray,
    w_x: np.ndarray,
    w_y: np.ndarray,
    out_weight: np.ndarray,
    out_bias: np.ndarray | None = None,
) -> np.ndarray:
    """Functional forward pass for one chunk.

    ``x``, ``w_x``, ``w_y`` are T x N; ``out_weight`` maps the concatenated
    2N features back to N.
    """
    x = np.asarray(x, dtype=np.float64)
    t, n = x.shape
    if w_x.shape != (t, n) or w_y.shape != (t, n):
        raise ShapeError(f"weights must be {t}x{n}, got {w_x.shape} and {w_y.shape}")
    if out_weight.shape != (2 * n, n):
        raise ShapeError(f"out_weight must be {2 * n}x{n}, got {out_weight.shape}")
    x_tilde = idct2(w_x * dct2(x))
    y_tilde = idct2(w_y * dct2(_second_order(x)))
    z = np.concatenate([x_tilde, y_tilde], axis=1)
    out = z @ out_weight
    if out_bias is not None:
        out = out + out_bias
    return out


class DctTemporal(Layer):
    """Layer form: applies the chunk transform over a (L, N) sequence.

    The sequence is split into floor(L / chunk) non-overlapping chunks;
    leftover frames pass through unchanged. Spectral weights start at one
    (neutral); the output map is He-initialized.
    """

    def __init__(self, chunk: int, n_features: int, seed: int = 0, name: str = "dct_temporal"):
        if chunk < 1:
            raise ValueError(f"chunk must be >= 1, got {chunk}")
        rng = np.random.Generator(np.random.PCG64(seed))
        self.chunk = chunk
        self.n_features = n_features
        self.w_x = Tensor(np.ones((chunk, n_features)), name=f"{name}.w_x")
        self.w_y = Tensor(np.ones((chunk, n_features)), name=f"{name}.w_y")
        self.out_weight = Tensor(
            _he_normal(rng, 2 * n_features, (2 * n_features, n_features)), name=f"{name}.out_weight"
        )
        self.out_bias = Tensor(np.zeros(n_features), name=f"{name}.out_bias")
        self._cache = None

    def forward_chunk(self, x: np.ndarray) -> np.ndarray:
        if x.shape != (self.chunk, self.n_features):
            raise ChunkSizeError(
                f"chunk of shape {x.shape} does not match configured "
                f"({self.chunk}, {self.n_features})"
            )
        return dct_temporal_forward(
            x, self.w_x.values, self.w_y.values, self.out_weight.values, self.out_bias.values
        )

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ShapeError(f"expected (L, {self.n_features}) input, got {x.shape}")
        n_chunks = x.shape[0] // self.chunk
        out = np.array(x, dtype=np.float64, copy=True)
        cache = []
        for i in range(n_chunks):
            sl = slice(i * self.chunk, (i + 1) * self.chunk)
            cx = x[sl]
            u = dct2(cx)
            sq = cx * cx
            y = sq - sq.mean(axis=0, keepdims=True)
            s = dct2(y)
            x_tilde = idct2(self.w_x.values * u)
            y_tilde = idct2(self.w_y.values * s)
            z = np.concatenate([x_tilde, y_tilde], axis=1)
            out[sl] = z @ self.out_weight.values + self.out_bias.values
            cache.append((sl, cx, u, s, z))
        self._cache = cache
        return out

    def backward(self, grad):
        dx = np.array(grad, dtype=np.float64, copy=True)
        for sl, cx, u, s, z in self._cache:
            g = grad[sl]
            dz = g @ self.out_weight.values.T
            self.out_weight.grad += z.T @ g
            self.out_bias.grad += g.sum(axis=0)
            n = self.n_features
            dv = dct2(dz[:, :n])  # adjoint of the orthonormal inverse transform
            dr = dct2(dz[:, n:])
            self.w_x.grad += dv * u
            self.w_y.grad += dr * s
            dcx = idct2(dv * self.w_x.values)
            dy = idct2(dr * self.w_y.values)
            da = dy - dy.mean(axis=0, keepdims=True)
            dx[sl] = dcx + 2.0 * cx * da
        return dx

    def params(self):
        return [self.w_x, self.w_y, self.out_weight, self.out_bias]
