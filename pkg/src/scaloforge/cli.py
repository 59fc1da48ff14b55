"""Command-line orchestration: extract, train, augment, evaluate, fuse.

Every command reads one TOML experiment config plus a dataset manifest and
writes its outputs (and a ``run_manifest.json`` recording input hashes,
seeds and output hashes) under ``--out``. Commands are deterministic for a
given config and seeds: reruns produce byte-identical artifacts.

Exit codes: 0 success, 1 partial failure or empty input, 2 config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import augmentation as aug
from . import evaluation as ev
from .features import (
    FBANK_STFT,
    SCALOGRAM_STFT,
    StftConfig,
    apply_normalization,
    extract_fbank,
    extract_longterm_fbank,
    extract_scalogram,
    fit_normalization,
    load_features,
    load_norm_stats,
    save_features,
    save_norm_stats,
)
from .filterbank import WaveletScaleParams, build_mel_scale, build_wavelet_scale, digitize
from .nn.networks import FrameClassifier, load_checkpoint, save_checkpoint
from .nn.training import (
    TrainConfig,
    flatten_segments,
    train_classifier,
    train_classifier_segments,
    write_curve_csv,
)
from .signal_io import load_clip, load_manifest

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "main"]


class ConfigError(ValueError):
    """Config violates the schema; the message carries the field path."""


class _Section:
    def __init__(self, name: str, table: dict):
        self.name = name
        self.table = table

    def get(self, key: str, types, default=...):
        if key not in self.table:
            if default is ...:
                raise ConfigError(f"[{self.name}].{key}: required key missing")
            return default
        value = self.table[key]
        if not isinstance(value, types):
            want = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
            raise ConfigError(
                f"[{self.name}].{key}: expected {want}, got {type(value).__name__}"
            )
        return value

    def get_number(self, key: str, default=...):
        return float(self.get(key, (int, float), default))


@dataclass(frozen=True)
class FeatureSection:
    kind: str
    channel_mode: str
    f_h: float
    f_l: float
    t_max: float
    q: int
    window: float
    shift: float
    fft_size: int
    shape: str
    n_mel: int
    with_deltas: bool
    train_ids: str

    def stft(self) -> StftConfig:
        return StftConfig(window=self.window, shift=self.shift, fft_size=self.fft_size)


@dataclass(frozen=True)
class TrainSection:
    seeds: tuple
    features_dir: str
    hidden: int
    dropout: float
    lr: float
    batch_size: int
    max_epochs: int
    policy: str
    val_fraction: float
    gamma_adv: float
    dct_chunk: int


@dataclass(frozen=True)
class AugmentSection:
    features_dir: str
    strategy: str
    seed: int
    margin: float
    n_sample: int
    t_sample: int
    max_iterations: int
    max_rejection_streak: int
    acgan_epochs: int
    acgan_lr: float
    acgan_hidden: int
    acgan_noise: int
    gamma_aux: float
    g_steps: int
    clf_hidden: int
    clf_lr: float
    clf_max_epochs: int
    final_max_epochs: int


@dataclass(frozen=True)
class EvaluateSection:
    checkpoints: tuple
    features_dir: str
    norm_stats: str
    train_manifest: str


@dataclass(frozen=True)
class FuseSection:
    inputs: tuple
    weights: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    feature: FeatureSection | None
    train: TrainSection | None
    augment: AugmentSection | None
    evaluate: EvaluateSection | None
    fuse: FuseSection | None
    path: str


def load_config(path) -> ExperimentConfig:
    try:
        doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}") from None

    feature = None
    if "feature" in doc:
        s = _Section("feature", doc["feature"])
        kind = s.get("kind", str)
        if kind not in ("scalogram", "fbank", "fbank-long"):
            raise ConfigError(f"[feature].kind: unknown kind {kind!r}")
        mode = s.get("channel_mode", str, "ave-diff")
        if mode not in ("left-right", "ave-diff"):
            raise ConfigError(f"[feature].channel_mode: unknown mode {mode!r}")
        default_stft = SCALOGRAM_STFT if kind != "fbank" else FBANK_STFT
        feature = FeatureSection(
            kind=kind,
            channel_mode=mode,
            f_h=s.get_number("f_h", 24000.0),
            f_l=s.get_number("f_l", 0.5 if kind == "scalogram" else 0.0),
            t_max=s.get_number("t_max", 0.341),
            q=int(s.get("q", int, 35)),
            window=s.get_number("window", default_stft.window),
            shift=s.get_number("shift", default_stft.shift),
            fft_size=int(s.get("fft_size", int, default_stft.fft_size)),
            shape=s.get("shape", str, "gaussian"),
            n_mel=int(s.get("n_mel", int, 128 if kind == "fbank" else 290)),
            with_deltas=s.get("with_deltas", bool, True),
            train_ids=s.get("train_ids", str, ""),
        )

    train = None
    if "train" in doc:
        s = _Section("train", doc["train"])
        seeds = tuple(s.get("seeds", list))
        if not seeds or not all(isinstance(x, int) for x in seeds):
            raise ConfigError("[train].seeds: expected a non-empty list of integers")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("[train].seeds: seeds must be distinct")
        train = TrainSection(
            seeds=seeds,
            features_dir=s.get("features_dir", str),
            hidden=int(s.get("hidden", int, 64)),
            dropout=s.get_number("dropout", 0.0),
            lr=s.get_number("lr", 1e-3),
            batch_size=int(s.get("batch_size", int, 128)),
            max_epochs=int(s.get("max_epochs", int, 50)),
            policy=s.get("policy", str, "slow"),
            val_fraction=s.get_number("val_fraction", 0.15),
            gamma_adv=s.get_number("gamma_adv", 0.0),
            dct_chunk=int(s.get("dct_chunk", int, 0)),
        )
        if train.policy not in ("slow", "fast"):
            raise ConfigError(f"[train].policy: expected slow or fast, got {train.policy!r}")

    augment = None
    if "augment" in doc:
        s = _Section("augment", doc["augment"])
        strategy = s.get("strategy", str, "city")
        if strategy not in ("fixed", "random", "city"):
            raise ConfigError(f"[augment].strategy: unknown strategy {strategy!r}")
        augment = AugmentSection(
            features_dir=s.get("features_dir", str),
            strategy=strategy,
            seed=int(s.get("seed", int, 0)),
            margin=s.get_number("margin", 0.03),
            n_sample=int(s.get("n_sample", int, 8)),
            t_sample=int(s.get("t_sample", int, 10)),
            max_iterations=int(s.get("max_iterations", int, 10)),
            max_rejection_streak=int(s.get("max_rejection_streak", int, 3)),
            acgan_epochs=int(s.get("acgan_epochs", int, 20)),
            acgan_lr=s.get_number("acgan_lr", 1e-3),
            acgan_hidden=int(s.get("acgan_hidden", int, 32)),
            acgan_noise=int(s.get("acgan_noise", int, 8)),
            gamma_aux=s.get_number("gamma_aux", 0.2),
            g_steps=int(s.get("g_steps", int, 3)),
            clf_hidden=int(s.get("clf_hidden", int, 32)),
            clf_lr=s.get_number("clf_lr", 1e-3),
            clf_max_epochs=int(s.get("clf_max_epochs", int, 30)),
            final_max_epochs=int(s.get("final_max_epochs", int, 40)),
        )

    evaluate = None
    if "evaluate" in doc:
        s = _Section("evaluate", doc["evaluate"])
        checkpoints = tuple(s.get("checkpoints", list))
        if not checkpoints:
            raise ConfigError("[evaluate].checkpoints: need at least one checkpoint")
        evaluate = EvaluateSection(
            checkpoints=checkpoints,
            features_dir=s.get("features_dir", str),
            norm_stats=s.get("norm_stats", str, ""),
            train_manifest=s.get("train_manifest", str, ""),
        )

    fuse = None
    if "fuse" in doc:
        s = _Section("fuse", doc["fuse"])
        inputs = tuple(s.get("inputs", list))
        if not inputs:
            raise ConfigError("[fuse].inputs: need at least one log-probability table")
        weights = tuple(s.get("weights", list, []))
        fuse = FuseSection(inputs=inputs, weights=weights)

    return ExperimentConfig(
        feature=feature, train=train, augment=augment, evaluate=evaluate, fuse=fuse, path=str(path)
    )


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_run_manifest(out_dir: Path, command: str, config_path, manifest_path, seeds, outputs):
    doc = {
        "command": command,
        "config": _sha256(config_path) if config_path else None,
        "manifest": _sha256(manifest_path) if manifest_path else None,
        "seeds": list(seeds),
        "outputs": {name: _sha256(out_dir / name) for name in sorted(outputs)},
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True))


def _require_feature(config) -> FeatureSection:
    if config.feature is None:
        raise ConfigError("[feature]: section required for this command")
    return config.feature


def _require_exists(path, field: str):
    if not Path(path).exists():
        raise ConfigError(f"{field}: path {path!r} does not exist")


def _build_matrix(feat: FeatureSection, rate: int):
    if feat.kind == "scalogram":
        params = WaveletScaleParams(f_h=feat.f_h, f_l=feat.f_l, T_max=feat.t_max, Q=feat.q)
        bank = build_wavelet_scale(params, shape=feat.shape)
    else:
        f_h = feat.f_h if feat.f_h <= rate / 2 else rate / 2
        bank = build_mel_scale(feat.f_l, f_h, feat.n_mel, shape="triangle")
    return digitize(bank, feat.fft_size, rate)


def _extract_entry(feat: FeatureSection, source: str, matrices: dict):
    clip = load_clip(source)
    if clip.sample_rate not in matrices:
        matrices[clip.sample_rate] = _build_matrix(feat, clip.sample_rate)
    matrix = matrices[clip.sample_rate]
    stft = feat.stft()
    if feat.kind == "scalogram":
        params = WaveletScaleParams(f_h=feat.f_h, f_l=feat.f_l, T_max=feat.t_max, Q=feat.q)
        return extract_scalogram(clip, feat.channel_mode, params, stft, feat.shape, matrix=matrix)
    if feat.kind == "fbank":
        return extract_fbank(
            clip, feat.channel_mode, stft, feat.n_mel, feat.with_deltas, feat.f_l, matrix=matrix
        )
    return extract_longterm_fbank(clip, feat.channel_mode, stft, feat.n_mel, feat.f_l, matrix=matrix)


_POOL_STATE: dict = {}


def _pool_init(feat: FeatureSection):
    _POOL_STATE["feat"] = feat
    _POOL_STATE["matrices"] = {}


def _pool_extract(source: str):
    try:
        return ("ok", _extract_entry(_POOL_STATE["feat"], source, _POOL_STATE["matrices"]))
    except Exception as exc:
        return ("err", f"{type(exc).__name__}: {exc}")


def _extract_all(feat: FeatureSection, manifest, workers: int):
    """Per-entry results in manifest order; the digitized matrix is built
    once per process and shared read-only across entries."""
    if workers <= 1:
        matrices: dict = {}
        out = []
        for entry in manifest.entries:
            try:
                out.append(("ok", _extract_entry(feat, entry.source, matrices)))
            except Exception as exc:
                out.append(("err", f"{type(exc).__name__}: {exc}"))
        return out
    import multiprocessing

    with multiprocessing.Pool(workers, initializer=_pool_init, initargs=(feat,)) as pool:
        return pool.map(_pool_extract, [e.source for e in manifest.entries])


def cmd_extract(config: ExperimentConfig, manifest_path, out_dir, workers: int = 1) -> int:
    feat = _require_feature(config)
    _require_exists(manifest_path, "--manifest")
    manifest = load_manifest(manifest_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if len(manifest) == 0:
        print("extract: empty manifest, nothing to do", file=sys.stderr)
        _write_run_manifest(out, "extract", config.path, manifest_path, [], [])
        return 1
    train_ids = None
    if feat.train_ids:
        _require_exists(feat.train_ids, "[feature].train_ids")
        train_ids = set(Path(feat.train_ids).read_text().split())
    outputs = []
    failures = []
    norm_corpus = []
    results = _extract_all(feat, manifest, workers)
    for entry, (status, payload) in zip(manifest.entries, results):
        if status == "err":
            failures.append((entry.id, payload))
            continue
        name = f"{entry.id}.sclf"
        save_features(payload, out / name)
        outputs.append(name)
        if train_ids is None or entry.id in train_ids:
            norm_corpus.append(payload)
    if norm_corpus:
        stats = fit_normalization(norm_corpus, corpus_id=str(manifest_path))
        save_norm_stats(stats, out / "norm_stats.json")
        outputs.append("norm_stats.json")
    _write_run_manifest(out, "extract", config.path, manifest_path, [], outputs)
    for fid, msg in failures:
        print(f"extract: {fid}: {msg}", file=sys.stderr)
    return 1 if failures else 0


def _load_normalized_features(features_dir, norm_stats_path, manifest) -> dict:
    stats = load_norm_stats(norm_stats_path)
    features = {}
    for entry in manifest.entries:
        fmap = load_features(Path(features_dir) / f"{entry.id}.sclf")
        features[entry.id] = apply_normalization(fmap, stats)
    return features


def cmd_train(config: ExperimentConfig, manifest_path, out_dir) -> int:
    if config.train is None:
        raise ConfigError("[train]: section required for this command")
    tr = config.train
    _require_exists(manifest_path, "--manifest")
    _require_exists(tr.features_dir, "[train].features_dir")
    manifest = load_manifest(manifest_path)
    if len(manifest) == 0:
        print("train: empty manifest", file=sys.stderr)
        return 1
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    features = _load_normalized_features(
        tr.features_dir, Path(tr.features_dir) / "norm_stats.json", manifest
    )
    maps = [features[e.id] for e in manifest.entries]
    scenes = np.array([manifest.scene_index(e.scene_label) for e in manifest.entries])
    cities = np.array([manifest.city_index(e.city_label) for e in manifest.entries])
    n_scenes = len(manifest.scene_vocabulary)
    n_cities = len(manifest.city_vocabulary) if tr.gamma_adv > 0 else 0

    split_rng = np.random.Generator(np.random.PCG64(tr.seeds[0]))
    perm = split_rng.permutation(len(maps))
    n_val = max(1, int(round(tr.val_fraction * len(maps))))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    if len(train_idx) == 0:
        print("train: no segments left for training after the validation split", file=sys.stderr)
        return 1

    c, n = maps[0].data.shape[1], maps[0].data.shape[2]
    outputs = []
    for seed in tr.seeds:
        model = FrameClassifier(
            c,
            n,
            n_scenes,
            hidden=tr.hidden,
            n_cities=n_cities,
            gamma_adv=tr.gamma_adv,
            dropout=tr.dropout,
            dct_chunk=tr.dct_chunk,
            seed=seed,
        )
        cfg = TrainConfig(
            lr=tr.lr,
            batch_size=tr.batch_size,
            max_epochs=tr.max_epochs,
            policy=tr.policy,
            seed=seed,
        )
        if tr.dct_chunk > 0:
            curve = train_classifier_segments(
                model,
                [maps[i] for i in train_idx],
                scenes[train_idx],
                [maps[i] for i in val_idx],
                scenes[val_idx],
                cfg,
            )
        else:
            x_train, y_train, c_train = flatten_segments(
                [maps[i] for i in train_idx],
                scenes[train_idx],
                cities[train_idx] if n_cities else None,
            )
            x_val, y_val, _ = flatten_segments([maps[i] for i in val_idx], scenes[val_idx])
            curve = train_classifier(model, x_train, y_train, x_val, y_val, cfg, city_train=c_train)
        ckpt = f"clf_seed{seed}.sclm"
        curve_name = f"curve_seed{seed}.csv"
        save_checkpoint(model, out / ckpt)
        write_curve_csv(curve, out / curve_name)
        outputs += [ckpt, curve_name]
    _write_run_manifest(out, "train", config.path, manifest_path, tr.seeds, outputs)
    return 0


def cmd_augment(config: ExperimentConfig, manifest_path, out_dir) -> int:
    if config.augment is None:
        raise ConfigError("[augment]: section required for this command")
    ag = config.augment
    _require_exists(manifest_path, "--manifest")
    _require_exists(ag.features_dir, "[augment].features_dir")
    manifest = load_manifest(manifest_path)
    if len(manifest) == 0:
        print("augment: empty manifest", file=sys.stderr)
        return 1
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    features = _load_normalized_features(
        ag.features_dir, Path(ag.features_dir) / "norm_stats.json", manifest
    )
    scheme_config = aug.AugmentationConfig(
        strategy=aug.SplitStrategy(kind=ag.strategy, seed=ag.seed),
        sample_filter=aug.SampleFilterConfig(
            n_classes=len(manifest.scene_vocabulary),
            margin=ag.margin,
            n_sample=ag.n_sample,
            t_sample=ag.t_sample,
        ),
        acgan=aug.AcganConfig(
            d_noise=ag.acgan_noise,
            hidden_g=ag.acgan_hidden,
            hidden_d=ag.acgan_hidden,
            lr=ag.acgan_lr,
            max_epochs=ag.acgan_epochs,
            gamma_aux=ag.gamma_aux,
            g_steps=ag.g_steps,
        ),
        seed=ag.seed,
        max_iterations=ag.max_iterations,
        max_rejection_streak=ag.max_rejection_streak,
        clf_hidden=ag.clf_hidden,
        clf_lr=ag.clf_lr,
        clf_max_epochs=ag.clf_max_epochs,
        final_max_epochs=ag.final_max_epochs,
    )
    result = aug.run_scheme(manifest, features, scheme_config)
    outputs = ["audit.jsonl", "report.json", "final.sclm"]
    aug.write_audit_trail(result.state.records, out / "audit.jsonl")
    (out / "report.json").write_text(json.dumps(result.report, indent=2))
    save_checkpoint(result.final_model, out / "final.sclm")
    if result.state.fake_samples:
        from .features import FeatureMap

        fakes_dir = out / "fakes"
        fakes_dir.mkdir(exist_ok=True)
        index_rows = ["id\tscene_label"]
        for i, (sample, label) in enumerate(
            zip(result.state.fake_samples, result.state.fake_labels)
        ):
            name = f"fake{i:05d}"
            save_features(
                FeatureMap(data=np.asarray(sample, dtype=np.float32), kind="synthetic"),
                fakes_dir / f"{name}.sclf",
            )
            index_rows.append(f"{name}\t{manifest.scene_vocabulary[label]}")
            outputs.append(f"fakes/{name}.sclf")
        (out / "fakes_index.tsv").write_text("\n".join(index_rows) + "\n")
        outputs.append("fakes_index.tsv")
    _write_run_manifest(out, "augment", config.path, manifest_path, [ag.seed], outputs)
    return 0


def cmd_evaluate(config: ExperimentConfig, manifest_path, out_dir) -> int:
    if config.evaluate is None:
        raise ConfigError("[evaluate]: section required for this command")
    section = config.evaluate
    _require_exists(manifest_path, "--manifest")
    _require_exists(section.features_dir, "[evaluate].features_dir")
    for ckpt in section.checkpoints:
        _require_exists(ckpt, "[evaluate].checkpoints")
    manifest = load_manifest(manifest_path)
    if len(manifest) == 0:
        print("evaluate: empty manifest", file=sys.stderr)
        return 1
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    norm_path = section.norm_stats or str(Path(section.features_dir) / "norm_stats.json")
    features = _load_normalized_features(section.features_dir, norm_path, manifest)
    tables = []
    for ckpt in section.checkpoints:
        model = load_checkpoint(ckpt)
        tables.append(ev.score_segments(model, features))
    n_classes = len(manifest.scene_vocabulary)
    averaged = {
        sid: np.mean([t[sid] for t in tables], axis=0) for sid in tables[0]
    }
    predictions = ev.fuse_average_voting(tables)
    seen = None
    if section.train_manifest:
        seen = set(load_manifest(section.train_manifest).city_vocabulary)
    report = ev.evaluate(predictions, manifest, seen_cities=seen)
    ev.write_logprob_csv(averaged, n_classes, out / "logprobs.csv")
    ev.write_predictions_csv(predictions, manifest, out / "predictions.csv")
    (out / "report.json").write_text(report.to_json())
    ev.write_confusion_csv(report, manifest, out / "confusion.csv")
    _write_run_manifest(
        out,
        "evaluate",
        config.path,
        manifest_path,
        [],
        ["logprobs.csv", "predictions.csv", "report.json", "confusion.csv"],
    )
    print(f"overall accuracy: {report.overall:.4f}")
    return 0


def cmd_fuse(config: ExperimentConfig, manifest_path, out_dir) -> int:
    if config.fuse is None:
        raise ConfigError("[fuse]: section required for this command")
    section = config.fuse
    _require_exists(manifest_path, "--manifest")
    for table in section.inputs:
        _require_exists(table, "[fuse].inputs")
    manifest = load_manifest(manifest_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = [ev.read_logprob_csv(p) for p in section.inputs]
    weights = list(section.weights) if section.weights else None
    predictions = ev.fuse_average_voting(tables, weights=weights)
    outputs = ["predictions.csv"]
    ev.write_predictions_csv(predictions, manifest, out / "predictions.csv")
    if len(manifest):
        report = ev.evaluate(predictions, manifest)
        (out / "report.json").write_text(report.to_json())
        ev.write_confusion_csv(report, manifest, out / "confusion.csv")
        outputs += ["report.json", "confusion.csv"]
        print(f"fused overall accuracy: {report.overall:.4f}")
    _write_run_manifest(out, "fuse", config.path, manifest_path, [], outputs)
    return 0


_COMMANDS = {
    "extract": cmd_extract,
    "train": cmd_train,
    "augment": cmd_augment,
    "evaluate": cmd_evaluate,
    "fuse": cmd_fuse,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="scaloforge",
        description="Long-term wavelet scalogram features and GAN-based dataset augmentation.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="experiment TOML file")
    parser.add_argument("--manifest", default=None, help="dataset manifest TSV")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--workers", type=int, default=1, help="extraction worker processes")
    args = parser.parse_args(argv)
    try:
        _require_exists(args.config, "--config")
        config = load_config(args.config)
        if args.manifest is None:
            raise ConfigError("--manifest is required")
        if args.command == "extract":
            return cmd_extract(config, args.manifest, args.out, workers=args.workers)
        return _COMMANDS[args.command](config, args.manifest, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
