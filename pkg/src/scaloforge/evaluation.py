"""Segment-level scoring, system fusion and accuracy reporting.

A frame-wise classifier scores a segment by the mean of its per-frame log
probabilities; fusion averages those log-probability vectors across systems
(optionally weighted) before the argmax. Ties everywhere break toward the
lowest class index. The headline metric is overall accuracy, the fraction
of correctly classified segments, which differs from the mean of class-wise
accuracies when classes are imbalanced.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .features import FeatureMap, NormalizationStateError
from .nn.networks import FrameClassifier

__all__ = [
    "EvalReport",
    "PredictionError",
    "segment_log_probability",
    "score_segments",
    "fuse_average_voting",
    "evaluate",
    "write_logprob_csv",
    "read_logprob_csv",
    "write_predictions_csv",
    "read_predictions_csv",
    "write_confusion_csv",
]

_LOG_PROB_FLOOR = 1e-12


class PredictionError(ValueError):
    """Predictions are missing segments or systems are misaligned."""


def segment_log_probability(model: FrameClassifier, fmap: FeatureMap) -> np.ndarray:
    """Mean per-frame log probability vector for one segment.

    Requires normalized features; scoring raw log energies silently
    degrades, so the flag is a hard contract.
    """
    if not fmap.normalized:
        raise NormalizationStateError("segment scoring requires normalized features")
    probs = model.predict_proba(np.asarray(fmap.data, dtype=np.float64))
    return np.log(np.maximum(probs, _LOG_PROB_FLOOR)).mean(axis=0)


def score_segments(model: FrameClassifier, features: dict) -> dict:
    """Log-probability table {segment id -> (C,) vector}."""
    return {sid: segment_log_probability(model, fmap) for sid, fmap in features.items()}


def fuse_average_voting(tables: list, weights=None) -> dict:
    """Argmax of the (weighted) mean log-probability across systems.

    All tables must cover the same segment ids. Uniform weights by default;
    ties resolve to the lowest class index.
    """
    if not tables:
        raise ValueError("need at least one system to fuse")
    ids = set(tables[0])
    for i, table in enumerate(tables[1:], start=2):
        if set(table) != ids:
            missing = ids.symmetric_difference(table)
            raise PredictionError(f"system {i} misaligned on ids: {sorted(missing)[:5]}")
    if weights is None:
        weights = np.ones(len(tables))
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(tables),):
            raise ValueError(f"got {len(weights)} weights for {len(tables)} systems")
    weights = weights / weights.sum()
    out = {}
    for sid in ids:
        stacked = np.stack([t[sid] for t in tables])
        out[sid] = int(np.argmax(weights @ stacked))
    return out


@dataclass(frozen=True)
class EvalReport:
    """Overall and class-wise accuracy, confusion counts, per-city split."""

    overall: float
    class_accuracy: dict
    confusion: np.ndarray
    per_city: dict
    n_segments: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "overall": self.overall,
                "class_accuracy": self.class_accuracy,
                "per_city": self.per_city,
                "n_segments": self.n_segments,
                "confusion": self.confusion.tolist(),
            },
            indent=2,
        )


def evaluate(predictions: dict, manifest, seen_cities=None) -> EvalReport:
    """Score predictions {id -> class index} against the manifest labels.

    ``seen_cities`` marks which cities occurred in training; entries from
    other cities aggregate into the "unseen" bucket. Without it every city
    counts as seen.
    """
    n_classes = len(manifest.scene_vocabulary)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    seen_correct = seen_total = unseen_correct = unseen_total = 0
    seen = set(manifest.city_vocabulary) if seen_cities is None else set(seen_cities)
    for entry in manifest.entries:
        if entry.id not in predictions:
            raise PredictionError(f"missing prediction for segment {entry.id!r}")
        true = manifest.scene_index(entry.scene_label)
        pred = int(predictions[entry.id])
        if not 0 <= pred < n_classes:
            raise PredictionError(f"prediction {pred} out of range for {entry.id!r}")
        confusion[true, pred] += 1
        hit = int(pred == true)
        if entry.city_label in seen:
            seen_correct += hit
            seen_total += 1
        else:
            unseen_correct += hit
            unseen_total += 1
    total = int(confusion.sum())
    if total == 0:
        raise PredictionError("empty manifest")
    overall = float(np.trace(confusion) / total)
    class_accuracy = {}
    for c, label in enumerate(manifest.scene_vocabulary):
        support = confusion[c].sum()
        class_accuracy[label] = float(confusion[c, c] / support) if support else float("nan")
    per_city = {
        "seen": float(seen_correct / seen_total) if seen_total else None,
        "unseen": float(unseen_correct / unseen_total) if unseen_total else None,
    }
    return EvalReport(
        overall=overall,
        class_accuracy=class_accuracy,
        confusion=confusion,
        per_city=per_city,
        n_segments=total,
    )


def write_logprob_csv(table: dict, n_classes: int, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"logp_{c}" for c in range(n_classes)])
        for sid in sorted(table):
            writer.writerow([sid] + [f"{v:.12g}" for v in table[sid]])


def read_logprob_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "id":
        raise PredictionError(f"{path}: not a log-probability table")
    return {row[0]: np.array([float(v) for v in row[1:]]) for row in rows[1:]}


def write_predictions_csv(predictions: dict, manifest, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "predicted_scene"])
        for sid in sorted(predictions):
            writer.writerow([sid, manifest.scene_vocabulary[predictions[sid]]])


def read_predictions_csv(path, manifest) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["id", "predicted_scene"]:
        raise PredictionError(f"{path}: not a predictions table")
    return {row[0]: manifest.scene_index(row[1]) for row in rows[1:]}


def write_confusion_csv(report: EvalReport, manifest, path) -> None:
    labels = list(manifest.scene_vocabulary)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + labels)
        for c, label in enumerate(labels):
            writer.writerow([label] + report.confusion[c].tolist())
