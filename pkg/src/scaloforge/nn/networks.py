"""Desk-scale networks built from the manual-gradient kernel.

``FrameClassifier`` mirrors the 1-D convolutional frame classifier idea at
small size: two width-3 convolutions along the filter axis with channel
doubling, the input concatenated with the convolution output per frame, a
dense layer and a softmax scene head. An optional adversarial city branch
(gradient reversal + 2-layer classifier) hangs off the shared dense
features, and an optional cosine-domain temporal stage can transform whole
segments before frame-wise classification.

``Generator`` and ``Discriminator`` are the conditional pair used for
feature synthesis: the generator modulates noise by a class embedding and
maps it through two dense layers; the discriminator shares a dense trunk
between a real/fake sigmoid head and a scene softmax head.

Checkpoints are a versioned binary: magic ``SCLM``, version u16, a JSON
config block, f32 parameter payloads in canonical order and a trailing
CRC32.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .core import (
    Conv1d,
    Dense,
    Dropout,
    GradientReversal,
    LeakyReLU,
    ReLU,
    ShapeError,
    Tensor,
    sigmoid,
    softmax,
)
from .dct import DctTemporal

__all__ = [
    "FrameClassifier",
    "Generator",
    "Discriminator",
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
]

_CKPT_MAGIC = b"SCLM"
_CKPT_VERSION = 1

# reference full-scale architecture sizes, kept for documentation only; the
# desk-scale networks below never read them
FULL_SCALE_REFERENCE = {
    "hidden_units": 1024,
    "generator_fc2_units": 15872,
    "segment_bottleneck_frames": 31,
    "segment_bottleneck_filters": 8,
    "frame_bottleneck_filters": 18,
    "frame_noise_dim": 576,
    "segment_noise_dim": 500,
    "batch_size": 128,
    "dropout": 0.5,
    "initial_lr": 1e-3,
    "max_epochs": 200,
}


class CheckpointError(ValueError):
    """Checkpoint file is malformed, truncated or fails its checksum."""


def _layer_seeds(seed: int, count: int) -> list:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


class FrameClassifier:
    """Frame-wise scene classifier over (channels, filters) frames."""

    def __init__(
        self,
        in_channels: int,
        n_filters: int,
        n_scenes: int,
        hidden: int = 64,
        n_cities: int = 0,
        gamma_adv: float = 0.1,
        city_hidden: int = 32,
        dropout: float = 0.0,
        dct_chunk: int = 0,
        seed: int = 0,
    ):
        self.config = {
            "in_channels": in_channels,
            "n_filters": n_filters,
            "n_scenes": n_scenes,
            "hidden": hidden,
            "n_cities": n_cities,
            "gamma_adv": gamma_adv,
            "city_hidden": city_hidden,
            "dropout": dropout,
            "dct_chunk": dct_chunk,
            "seed": seed,
        }
        seeds = _layer_seeds(seed, 7)
        c = in_channels
        self.conv1 = Conv1d(c, 2 * c, 3, seed=seeds[0], name="conv1")
        self.conv2 = Conv1d(2 * c, 4 * c, 3, seed=seeds[1], name="conv2")
        self.relu1, self.relu2, self.relu3 = ReLU(), ReLU(), ReLU()
        conv_out = 4 * c * (n_filters - 4)
        if n_filters < 5:
            raise ShapeError(f"need at least 5 filters for two width-3 convolutions, got {n_filters}")
        concat_dim = conv_out + c * n_filters
        self.dense = Dense(concat_dim, hidden, seed=seeds[2], name="dense")
        self.dropout = Dropout(dropout, seed=seeds[3]) if dropout > 0 else None
        self.scene_head = Dense(hidden, n_scenes, seed=seeds[4], name="scene_head")
        if n_cities > 0:
            self.grl = GradientReversal(gamma_adv)
            self.city_fc = Dense(hidden, city_hidden, seed=seeds[5], name="city_fc")
            self.city_relu = ReLU()
            self.city_head = Dense(city_hidden, n_cities, seed=seeds[6], name="city_head")
        else:
            self.grl = self.city_fc = self.city_relu = self.city_head = None
        self.dct = (
            DctTemporal(dct_chunk, in_channels * n_filters, seed=seeds[5] ^ seeds[6])
            if dct_chunk > 0
            else None
        )
        self._cache = None

    @property
    def n_scenes(self) -> int:
        return self.config["n_scenes"]

    @property
    def has_city_branch(self) -> bool:
        return self.city_head is not None

    def forward_frames(self, x: np.ndarray, train: bool = False):
        """Frame batch (B, c, n) to scene logits (and city logits if present)."""
        c, n = self.config["in_channels"], self.config["n_filters"]
        if x.ndim != 3 or x.shape[1:] != (c, n):
            raise ShapeError(f"expected frames of shape (B, {c}, {n}), got {x.shape}")
        b = x.shape[0]
        r1 = self.relu1.forward(self.conv1.forward(x, train), train)
        r2 = self.relu2.forward(self.conv2.forward(r1, train), train)
        concat = np.concatenate([x.reshape(b, -1), r2.reshape(b, -1)], axis=1)
        h = self.relu3.forward(self.dense.forward(concat, train), train)
        hd = self.dropout.forward(h, train) if self.dropout else h
        scene_logits = self.scene_head.forward(hd, train)
        self._cache = (x.shape, r2.shape)
        if self.city_head is None:
            return scene_logits, None
        g = self.grl.forward(hd, train)
        c1 = self.city_relu.forward(self.city_fc.forward(g, train), train)
        return scene_logits, self.city_head.forward(c1, train)

    def backward(self, dscene: np.ndarray, dcity: np.ndarray | None = None) -> np.ndarray:
        x_shape, r2_shape = self._cache
        g = self.scene_head.backward(dscene)
        if dcity is not None:
            if self.city_head is None:
                raise ValueError("no city branch on this classifier")
            gc = self.city_head.backward(dcity)
            gc = self.city_fc.backward(self.city_relu.backward(gc))
            g = g + self.grl.backward(gc)
        if self.dropout:
            g = self.dropout.backward(g)
        g = self.dense.backward(self.relu3.backward(g))
        cn = x_shape[1] * x_shape[2]
        g_in = g[:, :cn].reshape(x_shape)
        g_conv = self.relu2.backward(g[:, cn:].reshape(r2_shape))
        g1 = self.relu1.backward(self.conv2.backward(g_conv))
        return g_in + self.conv1.backward(g1)

    def transform_segment(self, seg: np.ndarray, train: bool = False) -> np.ndarray:
        """Apply the temporal stage to a whole (L, c, n) segment."""
        if self.dct is None:
            return seg
        flat = self.dct.forward(seg.reshape(seg.shape[0], -1), train)
        return flat.reshape(seg.shape)

    def backward_segment(self, dseg: np.ndarray) -> np.ndarray:
        if self.dct is None:
            return dseg
        flat = self.dct.backward(dseg.reshape(dseg.shape[0], -1))
        return flat.reshape(dseg.shape)

    def predict_proba(self, frames: np.ndarray) -> np.ndarray:
        logits, _ = self.forward_frames(frames, train=False)
        return softmax(logits)

    def params(self) -> list:
        out = self.conv1.params() + self.conv2.params() + self.dense.params()
        out += self.scene_head.params()
        if self.city_head is not None:
            out += self.city_fc.params() + self.city_head.params()
        if self.dct is not None:
            out += self.dct.params()
        return out

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()


class Generator:
    """Class-conditional feature generator: noise times a class embedding,
    two dense layers with a leaky rectifier between, linear output."""

    def __init__(
        self,
        n_classes: int,
        out_channels: int,
        out_filters: int,
        d_noise: int = 16,
        hidden: int = 64,
        alpha: float = 0.2,
        seed: int = 0,
    ):
        self.config = {
            "n_classes": n_classes,
            "out_channels": out_channels,
            "out_filters": out_filters,
            "d_noise": d_noise,
            "hidden": hidden,
            "alpha": alpha,
            "seed": seed,
        }
        seeds = _layer_seeds(seed, 3)
        rng = np.random.Generator(np.random.PCG64(seeds[0]))
        self.embed = Tensor(rng.normal(0.0, 1.0, size=(n_classes, d_noise)), name="embed")
        self.l1 = Dense(d_noise, hidden, seed=seeds[1], name="gen_l1")
        self.act = LeakyReLU(alpha)
        self.l2 = Dense(hidden, out_channels * out_filters, seed=seeds[2], name="gen_l2")
        self._cache = None

    @property
    def out_shape(self) -> tuple:
        return (self.config["out_channels"], self.config["out_filters"])

    def forward(self, z: np.ndarray, labels: np.ndarray, train: bool = True) -> np.ndarray:
        labels = np.asarray(labels)
        if z.shape != (len(labels), self.config["d_noise"]):
            raise ShapeError(f"noise shape {z.shape} does not match labels {labels.shape}")
        h0 = z * self.embed.values[labels]
        out = self.l2.forward(self.act.forward(self.l1.forward(h0, train), train), train)
        self._cache = (z, labels)
        return out.reshape(len(labels), *self.out_shape)

    def backward(self, dout: np.ndarray) -> None:
        z, labels = self._cache
        g = self.l2.backward(dout.reshape(len(labels), -1))
        g = self.l1.backward(self.act.backward(g))
        np.add.at(self.embed.grad, labels, g * z)

    def sample(self, count: int, scene: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``count`` frames conditioned on one scene (eval mode)."""
        z = rng.standard_normal((count, self.config["d_noise"]))
        labels = np.full(count, scene, dtype=np.int64)
        return self.forward(z, labels, train=False)

    def params(self) -> list:
        return [self.embed] + self.l1.params() + self.l2.params()

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def copy(self) -> "Generator":
        dup = Generator(**self.config)
        for dst, src in zip(dup.params(), self.params()):
            dst.values[...] = src.values
        return dup


class Discriminator:
    """Shared dense trunk with a real/fake sigmoid head and a scene head."""

    def __init__(
        self,
        in_channels: int,
        n_filters: int,
        n_classes: int,
        hidden: int = 64,
        alpha: float = 0.2,
        dropout: float = 0.0,
        seed: int = 0,
    ):
        self.config = {
            "in_channels": in_channels,
            "n_filters": n_filters,
            "n_classes": n_classes,
            "hidden": hidden,
            "alpha": alpha,
            "dropout": dropout,
            "seed": seed,
        }
        seeds = _layer_seeds(seed, 4)
        self.l1 = Dense(in_channels * n_filters, hidden, seed=seeds[0], name="disc_l1")
        self.act = LeakyReLU(alpha)
        self.dropout = Dropout(dropout, seed=seeds[1]) if dropout > 0 else None
        self.source_head = Dense(hidden, 1, seed=seeds[2], name="source_head")
        self.scene_head = Dense(hidden, n_classes, seed=seeds[3], name="disc_scene_head")
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False):
        """Returns (source probabilities (B,), scene probabilities (B, C))."""
        b = x.shape[0]
        h = self.act.forward(self.l1.forward(x.reshape(b, -1), train), train)
        hd = self.dropout.forward(h, train) if self.dropout else h
        src_logit = self.source_head.forward(hd, train)[:, 0]
        scene_logits = self.scene_head.forward(hd, train)
        p_src = sigmoid(src_logit)
        p_scene = softmax(scene_logits)
        self._cache = (x.shape, p_src, p_scene)
        return p_src, p_scene

    def backward(self, dp_src: np.ndarray, dp_scene: np.ndarray) -> np.ndarray:
        """Backpropagate gradients w.r.t. the output probabilities; returns
        the gradient w.r.t. the input (for generator training)."""
        x_shape, p_src, p_scene = self._cache
        dlogit_src = (dp_src * p_src * (1.0 - p_src))[:, None]
        inner = (dp_scene * p_scene).sum(axis=1, keepdims=True)
        dlogits_scene = p_scene * (dp_scene - inner)
        g = self.source_head.backward(dlogit_src) + self.scene_head.backward(dlogits_scene)
        if self.dropout:
            g = self.dropout.backward(g)
        g = self.l1.backward(self.act.backward(g))
        return g.reshape(x_shape)

    def params(self) -> list:
        return self.l1.params() + self.source_head.params() + self.scene_head.params()

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()


_MODEL_KINDS = {
    "frame_classifier": FrameClassifier,
    "generator": Generator,
    "discriminator": Discriminator,
}


def _model_kind(model) -> str:
    for kind, cls in _MODEL_KINDS.items():
        if isinstance(model, cls):
            return kind
    raise CheckpointError(f"cannot checkpoint a {type(model).__name__}")


def save_checkpoint(model, path) -> None:
    """Write config JSON plus f32 parameters with a trailing CRC32."""
    config_blob = json.dumps({"kind": _model_kind(model), "config": model.config}).encode()
    params = model.params()
    parts = [
        _CKPT_MAGIC,
        struct.pack("<HI", _CKPT_VERSION, len(config_blob)),
        config_blob,
        struct.pack("<I", len(params)),
    ]
    for p in params:
        payload = np.ascontiguousarray(p.values, dtype="<f4").tobytes()
        parts.append(struct.pack("<I", len(payload)))
        parts.append(payload)
    body = b"".join(parts)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    Path(path).write_bytes(body + struct.pack("<I", crc))


def load_checkpoint(path):
    """Rebuild a model from its config and load the stored parameters."""
    raw = Path(path).read_bytes()
    if len(raw) < 14:
        raise CheckpointError(f"file too small ({len(raw)} bytes) for a checkpoint")
    if raw[:4] != _CKPT_MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}")
    (stored_crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError("checksum mismatch")
    version, config_len = struct.unpack_from("<HI", raw, 4)
    if version != _CKPT_VERSION:
        raise CheckpointError(f"unsupported version {version}")
    pos = 10
    doc = json.loads(raw[pos : pos + config_len].decode())
    pos += config_len
    (n_params,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if doc["kind"] not in _MODEL_KINDS:
        raise CheckpointError(f"unknown model kind {doc['kind']!r}")
    model = _MODEL_KINDS[doc["kind"]](**doc["config"])
    params = model.params()
    if len(params) != n_params:
        raise CheckpointError(f"checkpoint has {n_params} params, model expects {len(params)}")
    for p in params:
        (nbytes,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        flat = np.frombuffer(raw[pos : pos + nbytes], dtype="<f4")
        pos += nbytes
        if flat.size != p.values.size:
            raise CheckpointError(
                f"parameter {p.name}: stored {flat.size} values, expected {p.values.size}"
            )
        p.values[...] = flat.reshape(p.values.shape)
    return model
