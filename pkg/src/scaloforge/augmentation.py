"""Iterative dataset augmentation with a conditional GAN and a margin filter.

One iteration: split the dataset, train a reference classifier (``clf_A``,
fast early stop) and the conditional GAN on the training half, generate
candidate frames from several late generator checkpoints, keep only frames
the reference classifier scores near the decision boundary (probability of
the target scene within ``margin`` of 1/C, open interval), train a second
classifier on the training half plus the retained fakes plus previously
accepted fakes, and compare both classifiers on the testing half. Strictly
higher accuracy accepts the iteration (the fakes join the accumulated
database); a tie or worse rejects it. The scheme halts after a fixed
iteration budget or once rejections exceed the allowed streak, then trains
a final classifier (slow early stop) on everything real plus everything
accepted.

Every iteration appends one JSON-serializable audit record; reruns with the
same seed chain reproduce the verdict sequence bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
import numpy as np

from .features import FeatureMap
from .nn.networks import Discriminator, FrameClassifier, Generator
from .nn.optim import DivergenceError, adam_init, adam_step
from .nn.training import TrainConfig, flatten_segments, train_classifier
from .signal_io import DatasetManifest, ManifestEntry

__all__ = [
    "PROB_CLAMP",
    "CollapseError",
    "SplitStrategyError",
    "AcganBatchLoss",
    "AcganConfig",
    "SampleFilterConfig",
    "SplitStrategy",
    "SplitResult",
    "IterationRecord",
    "AugmentationState",
    "AugmentationConfig",
    "FilteredSamples",
    "SchemeResult",
    "acgan_source_loss",
    "acgan_scene_loss",
    "acgan_training_step",
    "train_acgan",
    "sample_filter_framewise",
    "sample_filter_segmentwise",
    "split_dataset",
    "run_iteration",
    "run_scheme",
    "write_audit_trail",
    "make_cluster_benchmark",
    "ClusterBenchmark",
]

PROB_CLAMP = 1e-7  # keeps GAN logs finite at discriminator saturation


class CollapseError(FloatingPointError):
    """GAN training produced a non-finite loss."""


class SplitStrategyError(ValueError):
    """Dataset cannot be split under the requested strategy."""


def _clamped(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def acgan_source_loss(d_real: np.ndarray, d_fake: np.ndarray) -> float:
    """Real/fake loss: -sum(log p_real + log(1 - p_fake)), clamped."""
    d_real = np.asarray(d_real, dtype=np.float64)
    d_fake = np.asarray(d_fake, dtype=np.float64)
    return float(-(np.log(_clamped(d_real)).sum() + np.log(1.0 - _clamped(d_fake)).sum()))


def acgan_scene_loss(p_real: np.ndarray, p_fake: np.ndarray, labels: np.ndarray) -> float:
    """Auxiliary class loss: negative log-likelihood of the true scene under
    both heads, summed over the batch."""
    p_real = np.asarray(p_real, dtype=np.float64)
    p_fake = np.asarray(p_fake, dtype=np.float64)
    labels = np.asarray(labels)
    for name, p in (("real", p_real), ("fake", p_fake)):
        if p.ndim != 2:
            raise ValueError(f"{name} scene probabilities must be 2-D (batch, classes)")
        if not np.allclose(p.sum(axis=1), 1.0, atol=1e-6):
            raise ValueError(f"{name} scene probabilities must sum to 1 per sample")
    n, c = p_real.shape
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    idx = np.arange(n)
    return float(
        -(np.log(_clamped(p_real[idx, labels])).sum() + np.log(_clamped(p_fake[idx, labels])).sum())
    )


def _dlog(p: np.ndarray) -> np.ndarray:
    """d/dp of log(clamp(p)): 1/p inside the clamp window, 0 outside."""
    out = np.zeros_like(p)
    inside = (p >= PROB_CLAMP) & (p <= 1.0 - PROB_CLAMP)
    out[inside] = 1.0 / p[inside]
    return out


def _dlog1m(p: np.ndarray) -> np.ndarray:
    """d/dp of log(1 - clamp(p))."""
    out = np.zeros_like(p)
    inside = (p >= PROB_CLAMP) & (p <= 1.0 - PROB_CLAMP)
    out[inside] = -1.0 / (1.0 - p[inside])
    return out


@dataclass(frozen=True)
class AcganBatchLoss:
    """One batch's adversarial losses under a given auxiliary weight."""

    l_source: float
    l_scene: float
    gamma_aux: float
    g_loss: float = float("nan")

    def __post_init__(self):
        if self.gamma_aux < 0:
            raise ValueError(f"gamma_aux must be >= 0, got {self.gamma_aux}")
        if self.l_source < 0 or self.l_scene < 0:
            raise ValueError("losses are negative log-likelihoods and must be >= 0")

    @property
    def d_objective(self) -> float:
        return self.l_source + self.gamma_aux * self.l_scene

    @property
    def g_objective(self) -> float:
        return -self.l_source + self.gamma_aux * self.l_scene


@dataclass(frozen=True)
class AcganConfig:
    """Conditional GAN training settings."""

    d_noise: int = 8
    hidden_g: int = 32
    hidden_d: int = 32
    lr: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 20
    gamma_aux: float = 0.2
    g_steps: int = 3
    checkpoint_fractions: tuple = (0.7, 0.8, 0.9, 1.0)

    def checkpoint_epochs(self) -> tuple:
        epochs = sorted({max(1, round(f * self.max_epochs)) for f in self.checkpoint_fractions})
        return tuple(epochs)


def acgan_training_step(
    disc: Discriminator,
    gen: Generator,
    real_x: np.ndarray,
    real_y: np.ndarray,
    opt_d,
    opt_g,
    cfg: AcganConfig,
    rng: np.random.Generator,
) -> AcganBatchLoss:
    """One discriminator update then ``g_steps`` generator updates.

    The discriminator minimizes source + gamma_aux * scene loss over the
    real and fake halves; each generator update minimizes
    -source + gamma_aux * scene restricted to the fake terms, with
    gradients flowing through the discriminator without updating it.
    """
    b = len(real_x)
    gamma = cfg.gamma_aux
    idx = np.arange(b)

    z = rng.standard_normal((b, cfg.d_noise))
    fake_x = gen.forward(z, real_y, train=True)

    disc.zero_grad()
    p_src_r, p_scene_r = disc.forward(real_x, train=True)
    l_source_real = -np.log(_clamped(p_src_r)).sum()
    l_scene_real = -np.log(_clamped(p_scene_r[idx, real_y])).sum()
    dp_src = -_dlog(p_src_r)
    dp_scene = np.zeros_like(p_scene_r)
    dp_scene[idx, real_y] = -gamma * _dlog(p_scene_r)[idx, real_y]
    disc.backward(dp_src, dp_scene)

    p_src_f, p_scene_f = disc.forward(fake_x, train=True)
    l_source_fake = -np.log(1.0 - _clamped(p_src_f)).sum()
    l_scene_fake = -np.log(_clamped(p_scene_f[idx, real_y])).sum()
    dp_src = -_dlog1m(p_src_f)
    dp_scene = np.zeros_like(p_scene_f)
    dp_scene[idx, real_y] = -gamma * _dlog(p_scene_f)[idx, real_y]
    disc.backward(dp_src, dp_scene)

    l_source = l_source_real + l_source_fake
    l_scene = l_scene_real + l_scene_fake
    d_loss = l_source + gamma * l_scene
    if not np.isfinite(d_loss):
        raise CollapseError(f"non-finite discriminator loss {d_loss}")
    adam_step(disc.params(), opt_d)

    g_loss = 0.0
    for _ in range(cfg.g_steps):
        z = rng.standard_normal((b, cfg.d_noise))
        fake_x = gen.forward(z, real_y, train=True)
        disc.zero_grad()
        gen.zero_grad()
        p_src_f, p_scene_f = disc.forward(fake_x, train=True)
        # minimized: sum log(1 - p_fake) - gamma * sum log p_scene_fake[y]
        g_loss = float(
            np.log(1.0 - _clamped(p_src_f)).sum()
            - gamma * np.log(_clamped(p_scene_f[idx, real_y])).sum()
        )
        if not np.isfinite(g_loss):
            raise CollapseError(f"non-finite generator loss {g_loss}")
        dp_src = _dlog1m(p_src_f)
        dp_scene = np.zeros_like(p_scene_f)
        dp_scene[idx, real_y] = -gamma * _dlog(p_scene_f)[idx, real_y]
        dx = disc.backward(dp_src, dp_scene)
        gen.backward(dx)
        adam_step(gen.params(), opt_g)

    return AcganBatchLoss(
        l_source=float(l_source), l_scene=float(l_scene), gamma_aux=gamma, g_loss=g_loss
    )


def train_acgan(
    frames: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    cfg: AcganConfig,
    seed: int = 0,
):
    """Train the conditional pair on labeled frames.

    Returns (discriminator, generator, checkpoints) where checkpoints are
    frozen generator copies taken at the configured late epochs.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    c, n = frames.shape[1], frames.shape[2]
    seeds = np.random.SeedSequence(seed).generate_state(2)
    gen = Generator(n_classes, c, n, d_noise=cfg.d_noise, hidden=cfg.hidden_g, seed=int(seeds[0]))
    disc = Discriminator(c, n, n_classes, hidden=cfg.hidden_d, seed=int(seeds[1]))
    opt_d = adam_init(disc.params(), lr=cfg.lr)
    opt_g = adam_init(gen.params(), lr=cfg.lr)
    checkpoint_epochs = cfg.checkpoint_epochs()
    checkpoints = []
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(len(frames))
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            acgan_training_step(disc, gen, frames[idx], labels[idx], opt_d, opt_g, cfg, rng)
        if epoch in checkpoint_epochs:
            checkpoints.append(gen.copy())
    return disc, gen, checkpoints


@dataclass(frozen=True)
class SampleFilterConfig:
    """Margin filter settings: keep only candidates whose target-scene
    probability lies in the open interval (1/C - margin, 1/C + margin)."""

    n_classes: int
    margin: float
    n_sample: int
    t_sample: int
    generator_epochs: tuple = ()

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if not 0 < self.margin < 1.0 / self.n_classes:
            raise ValueError(
                f"margin must lie in (0, 1/{self.n_classes}), got {self.margin}"
            )
        if self.n_sample < 1 or self.t_sample < 1:
            raise ValueError("n_sample and t_sample must be >= 1")


@dataclass
class FilteredSamples:
    """Retained candidates plus per-scene/per-generator audit counts."""

    samples: list
    labels: list
    retained_per_scene: dict
    attempts: dict  # (scene, generator index) -> draws used
    frames_discarded: int

    def __len__(self) -> int:
        return len(self.samples)


def sample_filter_framewise(
    classifier,
    generators,
    cfg: SampleFilterConfig,
    frame_len: int,
    rng: np.random.Generator,
) -> FilteredSamples:
    """Margin-filter frame generators into whole labeled samples.

    ``classifier`` maps a frame batch (B, c, n) to (B, C) probabilities;
    each generator maps (count, scene, rng) to (count, c, n) frames. Each
    (scene, generator) pair may draw at most ``t_sample`` batches and
    contributes at most frame_len * n_sample / len(generators) frames, so
    a scene never yields more than ``n_sample`` reassembled samples.
    Leftover frames short of a full sample are discarded.
    """
    if not generators:
        raise ValueError("need at least one generator")
    lo = 1.0 / cfg.n_classes - cfg.margin
    hi = 1.0 / cfg.n_classes + cfg.margin
    frame_cap = (frame_len * cfg.n_sample) // len(generators)
    samples: list = []
    labels: list = []
    retained_per_scene = {}
    attempts = {}
    discarded = 0
    for scene in range(cfg.n_classes):
        kept_frames: list = []
        for gi, gen in enumerate(generators):
            n_kept = 0
            t_used = 0
            while t_used < cfg.t_sample and n_kept < frame_cap:
                batch = gen(frame_cap, scene, rng)
                probs = np.asarray(classifier(batch))
                mask = (probs[:, scene] > lo) & (probs[:, scene] < hi)
                take = np.nonzero(mask)[0][: frame_cap - n_kept]
                if take.size:
                    kept_frames.append(batch[take])
                    n_kept += int(take.size)
                t_used += 1
            attempts[(scene, gi)] = t_used
        flat = np.concatenate(kept_frames, axis=0) if kept_frames else np.empty((0, 0, 0))
        n_full = len(flat) // frame_len
        discarded += len(flat) - n_full * frame_len
        retained_per_scene[scene] = n_full
        for s in range(n_full):
            samples.append(np.array(flat[s * frame_len : (s + 1) * frame_len]))
            labels.append(scene)
    return FilteredSamples(
        samples=samples,
        labels=labels,
        retained_per_scene=retained_per_scene,
        attempts=attempts,
        frames_discarded=discarded,
    )


def sample_filter_segmentwise(
    classifier,
    generators,
    cfg: SampleFilterConfig,
    rng: np.random.Generator,
) -> FilteredSamples:
    """Margin-filter whole generated segments.

    ``classifier`` maps segments (B, L, c, n) to (B, C) probabilities and
    generators map (count, scene, rng) to (count, L, c, n). ``n_sample``
    counts segments per scene; the budget is spread over the generators
    (ceil split) and capped per scene.
    """
    if not generators:
        raise ValueError("need at least one generator")
    lo = 1.0 / cfg.n_classes - cfg.margin
    hi = 1.0 / cfg.n_classes + cfg.margin
    per_gen_cap = -(-cfg.n_sample // len(generators))
    samples: list = []
    labels: list = []
    retained_per_scene = {}
    attempts = {}
    for scene in range(cfg.n_classes):
        total = 0
        for gi, gen in enumerate(generators):
            n_kept = 0
            t_used = 0
            while t_used < cfg.t_sample and n_kept < per_gen_cap and total < cfg.n_sample:
                batch = gen(per_gen_cap, scene, rng)
                probs = np.asarray(classifier(batch))
                mask = (probs[:, scene] > lo) & (probs[:, scene] < hi)
                budget = min(per_gen_cap - n_kept, cfg.n_sample - total)
                take = np.nonzero(mask)[0][:budget]
                for s in take:
                    samples.append(np.array(batch[s]))
                    labels.append(scene)
                n_kept += int(take.size)
                total += int(take.size)
                t_used += 1
            attempts[(scene, gi)] = t_used
        retained_per_scene[scene] = total
    return FilteredSamples(
        samples=samples,
        labels=labels,
        retained_per_scene=retained_per_scene,
        attempts=attempts,
        frames_discarded=0,
    )


@dataclass(frozen=True)
class SplitStrategy:
    """How the database splits each iteration: ``fixed`` (one seeded split,
    halves swapped on odd iterations), ``random`` (fresh derived seed each
    iteration) or ``city`` (cities partitioned, never shared)."""

    kind: str
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("fixed", "random", "city"):
            raise ValueError(f"unknown split strategy {self.kind!r}")


@dataclass(frozen=True)
class SplitResult:
    train_ids: tuple
    test_ids: tuple
    seed_used: int


def _derived_seed(base: int, k: int) -> int:
    return int(np.random.SeedSequence([base, k]).generate_state(1)[0])


def split_dataset(manifest: DatasetManifest, strategy: SplitStrategy, k: int) -> SplitResult:
    """Split the manifest for iteration ``k`` under the strategy."""
    ids = list(manifest.ids)
    if len(ids) < 2:
        raise SplitStrategyError("need at least 2 entries to split")
    if strategy.kind == "fixed":
        rng = np.random.Generator(np.random.PCG64(strategy.seed))
        perm = rng.permutation(len(ids))
        half = len(ids) // 2
        a = tuple(ids[i] for i in perm[:half])
        b = tuple(ids[i] for i in perm[half:])
        if k % 2 == 0:
            return SplitResult(train_ids=a, test_ids=b, seed_used=strategy.seed)
        return SplitResult(train_ids=b, test_ids=a, seed_used=strategy.seed)
    if strategy.kind == "random":
        seed = _derived_seed(strategy.seed, k)
        rng = np.random.Generator(np.random.PCG64(seed))
        perm = rng.permutation(len(ids))
        half = len(ids) // 2
        return SplitResult(
            train_ids=tuple(ids[i] for i in perm[:half]),
            test_ids=tuple(ids[i] for i in perm[half:]),
            seed_used=seed,
        )
    # city strategy: partition cities so none is shared, balancing samples
    by_city: dict = {}
    for e in manifest.entries:
        by_city.setdefault(e.city_label, []).append(e.id)
    if len(by_city) < 2:
        raise SplitStrategyError("city strategy needs at least 2 cities")
    seed = _derived_seed(strategy.seed, k)
    rng = np.random.Generator(np.random.PCG64(seed))
    cities = list(by_city)
    rng.shuffle(cities)
    cities.sort(key=lambda c: -len(by_city[c]))  # stable: ties stay shuffled
    side_ids = ([], [])
    side_counts = [0, 0]
    for city in cities:
        if side_counts[0] < side_counts[1]:
            side = 0
        elif side_counts[1] < side_counts[0]:
            side = 1
        else:
            side = int(rng.integers(2))
        side_ids[side].extend(by_city[city])
        side_counts[side] += len(by_city[city])
    return SplitResult(train_ids=tuple(side_ids[0]), test_ids=tuple(side_ids[1]), seed_used=seed)


@dataclass(frozen=True)
class IterationRecord:
    k: int
    strategy: str
    split_seed: int
    acc_a: float
    acc_b: float | None
    n_filtered: int
    verdict: str  # "accept" | "reject"
    streak: int
    cause: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "strategy": self.strategy,
                "split_seed": self.split_seed,
                "acc_A": self.acc_a,
                "acc_B": self.acc_b,
                "n_filtered": self.n_filtered,
                "verdict": self.verdict,
                "streak": self.streak,
                "cause": self.cause,
            }
        )


@dataclass
class AugmentationState:
    """The scheme's ledger: accumulated fakes, records, rejection streak."""

    base_seed: int
    iteration: int = 0
    fake_samples: list = field(default_factory=list)
    fake_labels: list = field(default_factory=list)
    records: list = field(default_factory=list)
    consecutive_rejections: int = 0


@dataclass(frozen=True)
class AugmentationConfig:
    strategy: SplitStrategy
    sample_filter: SampleFilterConfig
    acgan: AcganConfig = AcganConfig()
    seed: int = 0
    max_iterations: int = 10
    max_rejection_streak: int = 3
    clf_hidden: int = 32
    clf_lr: float = 1e-3
    clf_batch: int = 128
    clf_max_epochs: int = 30
    final_max_epochs: int = 40
    final_val_fraction: float = 0.2


def _segment_accuracy(model: FrameClassifier, maps: list, labels: np.ndarray) -> float:
    correct = 0
    for m, y in zip(maps, labels):
        data = m.data if hasattr(m, "data") else np.asarray(m)
        probs = model.predict_proba(data)
        log_probs = np.log(np.maximum(probs, PROB_CLAMP)).mean(axis=0)
        if int(np.argmax(log_probs)) == y:
            correct += 1
    return correct / len(maps)


def _subset(manifest: DatasetManifest, features: dict, ids) -> tuple:
    maps = [features[i] for i in ids]
    entry_by_id = {e.id: e for e in manifest.entries}
    scenes = np.array([manifest.scene_index(entry_by_id[i].scene_label) for i in ids])
    return maps, scenes


def _train_frame_classifier(
    maps, scenes, val_maps, val_scenes, config: AugmentationConfig, policy: str, max_epochs: int, seed: int
) -> FrameClassifier:
    x_train, y_train, _ = flatten_segments(maps, scenes)
    x_val, y_val, _ = flatten_segments(val_maps, val_scenes)
    c, n = x_train.shape[1], x_train.shape[2]
    n_scenes = int(max(y_train.max(), y_val.max())) + 1
    model = FrameClassifier(c, n, n_scenes, hidden=config.clf_hidden, seed=seed)
    cfg = TrainConfig(
        lr=config.clf_lr,
        batch_size=config.clf_batch,
        max_epochs=max_epochs,
        policy=policy,
        seed=seed,
    )
    train_classifier(model, x_train, y_train, x_val, y_val, cfg)
    return model


def run_iteration(
    state: AugmentationState,
    manifest: DatasetManifest,
    features: dict,
    config: AugmentationConfig,
) -> IterationRecord:
    """Execute one split/train/filter/compare round and update the state."""
    if state.consecutive_rejections > config.max_rejection_streak:
        raise RuntimeError("scheme already terminated by rejection streak")
    if state.iteration >= config.max_iterations:
        raise RuntimeError("scheme already exhausted its iteration budget")
    k = state.iteration
    seeds = np.random.SeedSequence([config.seed, k]).generate_state(5)
    split = split_dataset(manifest, config.strategy, k)
    train_maps, train_scenes = _subset(manifest, features, split.train_ids)
    test_maps, test_scenes = _subset(manifest, features, split.test_ids)
    n_scenes = len(manifest.scene_vocabulary)
    frame_len = train_maps[0].data.shape[0] if hasattr(train_maps[0], "data") else train_maps[0].shape[0]

    acc_a = float("nan")
    acc_b = None
    n_filtered = 0
    cause = ""
    try:
        clf_a = _train_frame_classifier(
            train_maps, train_scenes, test_maps, test_scenes, config,
            policy="fast", max_epochs=config.clf_max_epochs, seed=int(seeds[0]),
        )
        acc_a = _segment_accuracy(clf_a, test_maps, test_scenes)

        x_gan, y_gan, _ = flatten_segments(train_maps, train_scenes)
        _, _, checkpoints = train_acgan(x_gan, y_gan, n_scenes, config.acgan, seed=int(seeds[1]))
        gen_fns = [g.sample for g in checkpoints]
        filt_rng = np.random.Generator(np.random.PCG64(int(seeds[2])))
        filtered = sample_filter_framewise(
            clf_a.predict_proba, gen_fns, config.sample_filter, frame_len, filt_rng
        )
        n_filtered = len(filtered)

        if n_filtered == 0:
            verdict = "reject"
            cause = "no_samples"
        else:
            maps_b = list(train_maps) + filtered.samples + state.fake_samples
            scenes_b = np.concatenate(
                [train_scenes, np.array(filtered.labels, dtype=np.int64),
                 np.array(state.fake_labels, dtype=np.int64)]
            ) if (filtered.labels or state.fake_labels) else train_scenes
            clf_b = _train_frame_classifier(
                maps_b, scenes_b, test_maps, test_scenes, config,
                policy="fast", max_epochs=config.clf_max_epochs, seed=int(seeds[3]),
            )
            acc_b = _segment_accuracy(clf_b, test_maps, test_scenes)
            verdict = "accept" if acc_b > acc_a else "reject"
    except (CollapseError, DivergenceError) as exc:
        verdict = "reject"
        cause = f"divergence: {exc}"

    if verdict == "accept":
        state.fake_samples.extend(filtered.samples)
        state.fake_labels.extend(filtered.labels)
        state.consecutive_rejections = 0
    else:
        state.consecutive_rejections += 1
    record = IterationRecord(
        k=k,
        strategy=config.strategy.kind,
        split_seed=split.seed_used,
        acc_a=float(acc_a),
        acc_b=None if acc_b is None else float(acc_b),
        n_filtered=n_filtered,
        verdict=verdict,
        streak=state.consecutive_rejections,
        cause=cause,
    )
    state.records.append(record)
    state.iteration += 1
    return record


@dataclass
class SchemeResult:
    state: AugmentationState
    final_model: FrameClassifier
    report: dict


def run_scheme(
    manifest: DatasetManifest, features: dict, config: AugmentationConfig
) -> SchemeResult:
    """Iterate to termination, then train the final classifier on the whole
    database (real entries plus all accepted fakes)."""
    state = AugmentationState(base_seed=config.seed)
    terminated = "max_iterations"
    while state.iteration < config.max_iterations:
        run_iteration(state, manifest, features, config)
        if state.consecutive_rejections > config.max_rejection_streak:
            terminated = "rejection_streak"
            break

    final_model = train_final_classifier(
        manifest, features, state.fake_samples, state.fake_labels, config
    )
    report = {
        "iterations": [json.loads(r.to_json()) for r in state.records],
        "terminated": terminated,
        "accepted_iterations": sum(1 for r in state.records if r.verdict == "accept"),
        "n_fake_samples": len(state.fake_samples),
        "no_augmentation": len(state.fake_samples) == 0,
    }
    return SchemeResult(state=state, final_model=final_model, report=report)


def train_final_classifier(
    manifest: DatasetManifest,
    features: dict,
    fake_samples: list,
    fake_labels: list,
    config: AugmentationConfig,
) -> FrameClassifier:
    """Slow-early-stop training on everything real plus accepted fakes.

    A seeded fraction of the real entries is held out to drive the stop
    policy; fakes never enter the validation split.
    """
    maps, scenes = _subset(manifest, features, manifest.ids)
    seeds = np.random.SeedSequence([config.seed, config.max_iterations + 1]).generate_state(2)
    rng = np.random.Generator(np.random.PCG64(int(seeds[0])))
    perm = rng.permutation(len(maps))
    n_val = max(1, int(round(config.final_val_fraction * len(maps))))
    val_idx = set(perm[:n_val].tolist())
    train_maps = [maps[i] for i in range(len(maps)) if i not in val_idx]
    train_scenes = [scenes[i] for i in range(len(maps)) if i not in val_idx]
    val_maps = [maps[i] for i in perm[:n_val]]
    val_scenes = [scenes[i] for i in perm[:n_val]]
    all_maps = train_maps + list(fake_samples)
    all_scenes = np.array(list(train_scenes) + list(fake_labels), dtype=np.int64)
    return _train_frame_classifier(
        all_maps, all_scenes, val_maps, np.array(val_scenes), config,
        policy="slow", max_epochs=config.final_max_epochs, seed=int(seeds[1]),
    )


def write_audit_trail(records, path) -> None:
    """One JSON line per iteration record."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


@dataclass(frozen=True)
class ClusterBenchmark:
    """Synthetic separable clusters with a per-city mean shift."""

    train_manifest: DatasetManifest
    train_features: dict
    test_manifest: DatasetManifest
    test_features: dict


def make_cluster_benchmark(
    n_train: int = 2000,
    n_test: int = 500,
    n_classes: int = 4,
    n_cities: int = 2,
    frames: int = 6,
    channels: int = 1,
    filters: int = 8,
    class_scale: float = 0.8,
    city_scale: float = 1.1,
    frame_noise: float = 1.3,
    seed: int = 0,
) -> ClusterBenchmark:
    """Labeled Gaussian clusters rendered as small feature maps.

    Each sample is ``frames`` noisy views of a class center shifted by its
    city's offset. Test entries draw from the same distribution with fresh
    noise (all cities appear in both pools).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    dim = channels * filters
    centers = class_scale * rng.standard_normal((n_classes, dim))
    city_shift = city_scale * rng.standard_normal((n_cities, dim))

    def build(count: int, prefix: str) -> tuple:
        entries = []
        feats = {}
        for i in range(count):
            c = int(rng.integers(n_classes))
            v = int(rng.integers(n_cities))
            point = centers[c] + city_shift[v]
            data = point[None, :] + frame_noise * rng.standard_normal((frames, dim))
            fid = f"{prefix}{i:05d}"
            entries.append(
                ManifestEntry(
                    id=fid, source="synthetic:cluster", scene_label=f"s{c}", city_label=f"c{v}"
                )
            )
            feats[fid] = FeatureMap(
                data=data.reshape(frames, channels, filters).astype(np.float64),
                kind="synthetic",
                channel_mode="left-right",
            )
        manifest = DatasetManifest(
            entries=tuple(entries),
            scene_vocabulary=tuple(f"s{c}" for c in range(n_classes)),
            city_vocabulary=tuple(f"c{v}" for v in range(n_cities)),
        )
        return manifest, feats

    train_manifest, train_features = build(n_train, "tr")
    test_manifest, test_features = build(n_test, "te")
    return ClusterBenchmark(
        train_manifest=train_manifest,
        train_features=train_features,
        test_manifest=test_manifest,
        test_features=test_features,
    )
