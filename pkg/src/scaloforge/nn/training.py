"""Deterministic classifier training with plateau-driven learning rates.

Frame-wise training: every frame of every segment is a sample carrying its
segment's labels. Validation loss is the frame-level scene cross-entropy.
Runs are reproducible bit for bit from the config seed; the curve rows
(epoch, train_loss, val_loss, lr) can be written as CSV.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import softmax_xent
from .networks import FrameClassifier
from .optim import EarlyStopPolicy, adam_init, adam_step

__all__ = [
    "TrainConfig",
    "CurveRow",
    "train_classifier",
    "train_classifier_segments",
    "write_curve_csv",
    "flatten_segments",
]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 50
    policy: str = "fast"
    seed: int = 0
    gamma_city: float = 1.0  # weight on the adversarial branch loss when present


@dataclass(frozen=True)
class CurveRow:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


def flatten_segments(maps, scene_labels, city_labels=None):
    """Stack segment maps into one frame array with per-frame labels."""
    frames = []
    scenes = []
    cities = []
    for i, m in enumerate(maps):
        data = m.data if hasattr(m, "data") else np.asarray(m)
        frames.append(data)
        scenes.append(np.full(data.shape[0], scene_labels[i], dtype=np.int64))
        if city_labels is not None:
            cities.append(np.full(data.shape[0], city_labels[i], dtype=np.int64))
    x = np.concatenate(frames, axis=0).astype(np.float64)
    y = np.concatenate(scenes)
    c = np.concatenate(cities) if city_labels is not None else None
    return x, y, c


def _epoch_val_loss(model: FrameClassifier, x_val, y_val, batch_size: int) -> float:
    total = 0.0
    count = 0
    for start in range(0, len(x_val), batch_size):
        xb = x_val[start : start + batch_size]
        yb = y_val[start : start + batch_size]
        logits, _ = model.forward_frames(xb, train=False)
        loss, _ = softmax_xent(logits, yb)
        total += loss * len(xb)
        count += len(xb)
    return total / count


def train_classifier_segments(
    model: FrameClassifier,
    train_maps: list,
    train_scenes,
    val_maps: list,
    val_scenes,
    cfg: TrainConfig,
) -> list:
    """Segment-mode training for models with a temporal stage.

    One update per segment (its frames form the batch) so the per-segment
    chunk transform can cache and backpropagate cleanly. Validation loss is
    the mean frame cross-entropy over the transformed validation segments.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params = model.params()
    state = adam_init(params, lr=cfg.lr)
    policy = EarlyStopPolicy.from_mode(cfg.policy)
    curve = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_maps))
        total = 0.0
        count = 0
        for i in order:
            seg = np.asarray(train_maps[i].data if hasattr(train_maps[i], "data") else train_maps[i], dtype=np.float64)
            y = np.full(seg.shape[0], train_scenes[i], dtype=np.int64)
            model.zero_grad()
            transformed = model.transform_segment(seg, train=True)
            logits, _ = model.forward_frames(transformed, train=True)
            loss, dscene = softmax_xent(logits, y)
            dseg = model.backward(dscene)
            model.backward_segment(dseg)
            adam_step(params, state)
            total += loss * seg.shape[0]
            count += seg.shape[0]
        val_total = 0.0
        val_count = 0
        for i in range(len(val_maps)):
            seg = np.asarray(val_maps[i].data if hasattr(val_maps[i], "data") else val_maps[i], dtype=np.float64)
            y = np.full(seg.shape[0], val_scenes[i], dtype=np.int64)
            logits, _ = model.forward_frames(model.transform_segment(seg, train=False), train=False)
            loss, _ = softmax_xent(logits, y)
            val_total += loss * seg.shape[0]
            val_count += seg.shape[0]
        val_loss = val_total / val_count
        curve.append(CurveRow(epoch=epoch, train_loss=total / count, val_loss=val_loss, lr=state.lr))
        action = policy.update(val_loss)
        if action == "halve_lr":
            state.lr *= 0.5
        elif action == "stop":
            break
    return curve


def train_classifier(
    model: FrameClassifier,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    cfg: TrainConfig,
    city_train: np.ndarray | None = None,
) -> list:
    """Train in place; returns the list of CurveRow per completed epoch.

    With a city branch and ``city_train`` labels, each step minimizes the
    scene loss while the reversal layer feeds the scaled negative city
    gradient into the shared features (the branch itself still minimizes
    the city loss).
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params = model.params()
    state = adam_init(params, lr=cfg.lr)
    policy = EarlyStopPolicy.from_mode(cfg.policy)
    use_city = model.has_city_branch and city_train is not None
    curve = []
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(len(x_train))
        total = 0.0
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            model.zero_grad()
            scene_logits, city_logits = model.forward_frames(xb, train=True)
            loss, dscene = softmax_xent(scene_logits, yb)
            dcity = None
            if use_city:
                city_loss, dcity = softmax_xent(city_logits, city_train[idx])
                dcity = cfg.gamma_city * dcity
            model.backward(dscene, dcity)
            adam_step(params, state)
            total += loss * len(idx)
        train_loss = total / len(perm)
        val_loss = _epoch_val_loss(model, x_val, y_val, cfg.batch_size)
        curve.append(CurveRow(epoch=epoch, train_loss=train_loss, val_loss=val_loss, lr=state.lr))
        action = policy.update(val_loss)
        if action == "halve_lr":
            state.lr *= 0.5
        elif action == "stop":
            break
    return curve


def write_curve_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for row in curve:
            writer.writerow([row.epoch, f"{row.train_loss:.9g}", f"{row.val_loss:.9g}", f"{row.lr:.9g}"])
