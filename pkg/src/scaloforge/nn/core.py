"""Minimal manual-gradient neural kernel.

Everything is plain numpy in float64. Layers cache what their backward pass
needs, accumulate parameter gradients in place (callers zero them between
steps) and return the gradient with respect to their input. There is no
graph; networks wire layers explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "LayerSpec",
    "Layer",
    "Dense",
    "Conv1d",
    "ReLU",
    "LeakyReLU",
    "Dropout",
    "Flatten",
    "GradientReversal",
    "Sequential",
    "build_layer",
    "ShapeError",
    "softmax",
    "sigmoid",
    "softmax_xent",
    "grl_apply",
]


class ShapeError(ValueError):
    """Operands disagree on shape; the message names both."""


class Tensor:
    """A dense real array with an attached gradient buffer."""

    __slots__ = ("values", "grad", "name")

    def __init__(self, values: np.ndarray, name: str = ""):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor({self.name or 'unnamed'}, shape={self.values.shape})"


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description used to build and checkpoint networks."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0


class Layer:
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list:
        return []


def _he_normal(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Dense(Layer):
    """Affine map x @ W + b with He-initialized weights."""

    def __init__(self, n_in: int, n_out: int, seed: int = 0, name: str = "dense"):
        rng = np.random.Generator(np.random.PCG64(seed))
        self.weight = Tensor(_he_normal(rng, n_in, (n_in, n_out)), name=f"{name}.weight")
        self.bias = Tensor(np.zeros(n_out), name=f"{name}.bias")
        self._x = None

    def forward(self, x, train=False):
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(
                f"dense input has {x.shape[-1]} features, weight expects {self.weight.shape[0]}"
            )
        self._x = x
        return x @ self.weight.values + self.bias.values

    def backward(self, grad):
        self.weight.grad += self._x.T @ grad
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.values.T

    def params(self):
        return [self.weight, self.bias]


class Conv1d(Layer):
    """1-D cross-correlation along the last axis.

    Input (batch, in_channels, width) -> (batch, out_channels, w_out) with
    w_out = (width + 2 pad - kernel) // stride + 1.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        pad: int = 0,
        seed: int = 0,
        name: str = "conv1d",
    ):
        if kernel < 1 or stride < 1 or pad < 0:
            raise ValueError("kernel and stride must be >= 1, pad >= 0")
        rng = np.random.Generator(np.random.PCG64(seed))
        fan_in = in_channels * kernel
        self.weight = Tensor(
            _he_normal(rng, fan_in, (out_channels, in_channels, kernel)), name=f"{name}.weight"
        )
        self.bias = Tensor(np.zeros(out_channels), name=f"{name}.bias")
        self.stride = stride
        self.pad = pad
        self._windows = None
        self._x_shape = None

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[1] != self.weight.shape[1]:
            raise ShapeError(
                f"conv1d input {x.shape} does not match weight {self.weight.shape} "
                "(want (batch, in_channels, width))"
            )
        if self.pad:
            x = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad)))
        k = self.weight.shape[2]
        if x.shape[2] < k:
            raise ShapeError(f"width {x.shape[2]} shorter than kernel {k}")
        self._x_shape = x.shape
        windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=2)[:, :, :: self.stride]
        self._windows = windows  # (B, C_in, W_out, K)
        out = np.einsum("bcwk,ock->bow", windows, self.weight.values, optimize=True)
        return out + self.bias.values[None, :, None]

    def backward(self, grad):
        self.weight.grad += np.einsum("bow,bcwk->ock", grad, self._windows, optimize=True)
        self.bias.grad += grad.sum(axis=(0, 2))
        dx = np.zeros(self._x_shape)
        k = self.weight.shape[2]
        w_out = grad.shape[2]
        for tap in range(k):
            contrib = np.einsum("bow,oc->bcw", grad, self.weight.values[:, :, tap], optimize=True)
            dx[:, :, tap : tap + self.stride * w_out : self.stride] += contrib
        if self.pad:
            dx = dx[:, :, self.pad : dx.shape[2] - self.pad]
        return dx

    def params(self):
        return [self.weight, self.bias]


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class LeakyReLU(Layer):
    def __init__(self, alpha: float = 0.2):
        self.alpha = alpha

    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, self.alpha * x)

    def backward(self, grad):
        return np.where(self._mask, grad, self.alpha * grad)


class Dropout(Layer):
    """Inverted dropout: train-time expectation equals the input, eval is
    the exact identity. Masks come from the layer's own seeded stream."""

    def __init__(self, rate: float, seed: int = 0):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self._mask = None

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            return grad
        return grad * self._mask


class Flatten(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


def grl_apply(grad: np.ndarray, gamma: float) -> np.ndarray:
    """Reverse a branch gradient into the trunk, scaled by -gamma."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return -gamma * grad


class GradientReversal(Layer):
    """Identity forward; backward multiplies the gradient by -gamma.

    Placing this at the base of a branch makes the branch's own parameters
    learn to minimize the branch loss while the trunk beneath receives the
    reversed gradient and learns to maximize it.
    """

    def __init__(self, gamma: float):
        if gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {gamma}")
        self.gamma = gamma

    def forward(self, x, train=False):
        return x

    def backward(self, grad):
        return grl_apply(grad, self.gamma)


class Sequential(Layer):
    def __init__(self, layers: list):
        self.layers = list(layers)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out


def build_layer(spec: LayerSpec):
    """Instantiate a layer from its declarative description."""
    kind, p = spec.kind, spec.params
    if kind == "dense" or kind == "softmax_xent_head" or kind == "sigmoid_head":
        return Dense(p["n_in"], p["n_out"], seed=spec.seed, name=p.get("name", kind))
    if kind == "conv1d":
        return Conv1d(
            p["in_channels"],
            p["out_channels"],
            p["kernel"],
            stride=p.get("stride", 1),
            pad=p.get("pad", 0),
            seed=spec.seed,
            name=p.get("name", kind),
        )
    if kind == "relu":
        return ReLU()
    if kind == "leaky_relu":
        return LeakyReLU(alpha=p.get("alpha", 0.2))
    if kind == "dropout":
        return Dropout(p["rate"], seed=spec.seed)
    if kind == "grl":
        return GradientReversal(p["gamma"])
    if kind == "flatten":
        return Flatten()
    if kind == "dct_temporal":
        from .dct import DctTemporal

        return DctTemporal(p["chunk"], p["n_features"], seed=spec.seed)
    raise ValueError(f"unknown layer kind {kind!r}")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch.

    Returns (loss, grad) with grad = (softmax - onehot) / batch.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(n), labels]))
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
