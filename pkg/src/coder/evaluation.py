"""Run manifests, accuracy reports, and ablation sweeps over text families.

A manifest pins every input of a run (bundles, mode, config, seed) so a run
is reproducible from the file alone. Reports serialize with sorted keys and
floats fixed to 9 significant digits for golden-file comparison.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bundle import EmbeddingBundle, TextFamily, read_bundle
from .core import ClassPartition, build_coder, stage1_logits
from .errors import CoderError, InvariantError, ManifestError, PipelineError
from .fewshot import (
    AdapterParams,
    NormMode,
    SupportCache,
    adapt_logits,
    build_support_cache,
    predict,
)
from .zeroshot import DiskPairStore, RerankConfig, rerank_result

MODES = ("zeroshot", "zeroshot_rerank", "fewshot")

ZS_SCALE_DEFAULT = 100.0


def quantize_floats(obj):
    """Round every float to 9 significant digits, recursively."""
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: quantize_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [quantize_floats(v) for v in obj]
    return obj


def dumps_report(obj) -> bytes:
    return json.dumps(quantize_floats(obj), sort_keys=True,
                      separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass
class RunManifest:
    """Everything a run depends on; the config snapshot fully determines it."""

    dataset_tag: str
    image_bundle: Path
    text_bundle: Path
    mode: str
    config: dict = field(default_factory=dict)
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ManifestError(f"mode {self.mode!r} not one of {MODES}")
        for label, path in (("image_bundle", self.image_bundle),
                            ("text_bundle", self.text_bundle)):
            if not Path(path).exists():
                raise ManifestError(f"{label} {path} does not exist")
        if self.mode == "fewshot":
            support = self.config.get("support_bundle")
            if not support:
                raise ManifestError("fewshot mode requires config.support_bundle")
            if not Path(support).exists():
                raise ManifestError(f"support_bundle {support} does not exist")
            norm = self.config.get("norm_mode", "minmax")
            if norm not in ("minmax", "l2"):
                raise ManifestError(f"unknown norm_mode {norm!r}")
            zs_source = self.config.get("zs_source", "class_name")
            if zs_source not in ("class_name", "stage1"):
                raise ManifestError(f"unknown zs_source {zs_source!r}")
        if self.mode == "zeroshot_rerank":
            pairs_dir = self.config.get("pairs_dir")
            if not pairs_dir:
                raise ManifestError("zeroshot_rerank mode requires config.pairs_dir")
            if not Path(pairs_dir).is_dir():
                raise ManifestError(f"pairs_dir {pairs_dir} is not a directory")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunManifest":
        try:
            doc = json.loads(Path(path).read_text("utf-8"))
        except OSError as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
        missing = {"dataset_tag", "image_bundle", "text_bundle", "mode"} - doc.keys()
        if missing:
            raise ManifestError(f"manifest missing keys: {sorted(missing)}")
        manifest = cls(
            dataset_tag=doc["dataset_tag"],
            image_bundle=Path(doc["image_bundle"]),
            text_bundle=Path(doc["text_bundle"]),
            mode=doc["mode"],
            config=dict(doc.get("config", {})),
            seed=int(doc.get("seed", 0)),
        )
        manifest.validate()
        return manifest


@dataclass
class Report:
    """Accuracy summary of one run; accuracy is exactly correct/total."""

    dataset_tag: str
    mode: str
    accuracy: float
    per_class_accuracy: list
    counts: dict
    config: dict
    seed: int
    wall_time_s: float

    def to_json_dict(self) -> dict:
        return {
            "dataset_tag": self.dataset_tag,
            "mode": self.mode,
            "accuracy": self.accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "counts": self.counts,
            "config": self.config,
            "seed": self.seed,
            "wall_time_s": self.wall_time_s,
        }

    def to_json_bytes(self, wall_time_override: float | None = None) -> bytes:
        doc = self.to_json_dict()
        if wall_time_override is not None:
            doc["wall_time_s"] = wall_time_override
        return dumps_report(doc)


def class_name_logits(coder: np.ndarray, partition: ClassPartition,
                      scale: float = 1.0) -> np.ndarray:
    """Plain zero-shot logits: scaled mean class-name similarity per class."""
    coder = np.asarray(coder)
    squeeze = coder.ndim == 1
    if squeeze:
        coder = coder[None, :]
    out = np.empty((coder.shape[0], partition.num_classes), dtype=np.float64)
    for j in range(partition.num_classes):
        cols = partition.ori[j]
        if cols.size == 0:
            raise InvariantError(f"class {j} has no class-name texts")
        out[:, j] = coder[:, cols].mean(axis=1, dtype=np.float64) * scale
    return out[0] if squeeze else out


def _score_predictions(preds: np.ndarray, labels: np.ndarray, num_classes: int,
                       dataset_tag: str, mode: str, config: dict, seed: int,
                       wall_time_s: float) -> Report:
    correct = int(np.sum(preds == labels))
    total = int(labels.shape[0])
    per_total = np.bincount(labels, minlength=num_classes)
    per_correct = np.bincount(labels[preds == labels], minlength=num_classes)
    per_acc = [
        (int(c) / int(t)) if t else None
        for c, t in zip(per_correct, per_total)
    ]
    return Report(
        dataset_tag=dataset_tag,
        mode=mode,
        accuracy=correct / total,
        per_class_accuracy=per_acc,
        counts={
            "correct": correct,
            "total": total,
            "per_class_correct": per_correct.astype(int).tolist(),
            "per_class_total": per_total.astype(int).tolist(),
        },
        config=config,
        seed=seed,
        wall_time_s=wall_time_s,
    )


def _zeroshot_rerank_predictions(images: EmbeddingBundle, logits: np.ndarray,
                                 store: DiskPairStore, cfg: RerankConfig,
                                 workers: int = 1) -> np.ndarray:
    """Rerank every image; results gathered by image index."""

    def run(i: int) -> int:
        try:
            return rerank_result(logits[i], images.features.data[i], store, cfg).final_class
        except CoderError as exc:
            raise PipelineError(images.records[i].id, exc) from exc

    indices = range(logits.shape[0])
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            preds = list(pool.map(run, indices))
    else:
        preds = [run(i) for i in indices]
    return np.asarray(preds, dtype=np.int64)


def _mask_columns(partition: ClassPartition) -> np.ndarray | None:
    """Columns the partition covers; None when that is every text column."""
    parts = []
    for fam in (partition.ori, partition.att, partition.ana, partition.syn):
        parts.extend(fam)
    cols = np.unique(np.concatenate(parts)) if parts else np.empty(0, np.int64)
    if cols.size == partition.n_texts:
        return None
    return cols


def _fewshot_logits(coder: np.ndarray, partition: ClassPartition,
                    cache: SupportCache, config: dict) -> np.ndarray:
    """Adapter logits; affinity sees only the columns the partition covers."""
    params = AdapterParams(
        alpha=float(config.get("alpha", 1.0)),
        beta=float(config.get("beta", 5.5)),
        T=float(config.get("T", 3.0)),
        norm_mode=NormMode(config.get("norm_mode", "minmax")),
    )
    scale = float(config.get("zs_scale", ZS_SCALE_DEFAULT))
    if config.get("zs_source", "class_name") == "stage1":
        zs = stage1_logits(coder, partition) * scale
    else:
        zs = class_name_logits(coder, partition, scale=scale)
    cols = _mask_columns(partition)
    if cols is not None:
        cache = SupportCache(s_train=np.ascontiguousarray(cache.s_train[:, cols]),
                             l_train=cache.l_train, n_ways=cache.n_ways,
                             m_shots=cache.m_shots)
        coder = coder[:, cols]
    return adapt_logits(zs, coder, cache, params)


def _load_support_cache(texts: EmbeddingBundle, config: dict) -> SupportCache:
    support = read_bundle(config["support_bundle"])
    return build_support_cache(
        support, texts,
        normalize_image_features=bool(config.get("normalize_image_features", False)),
    )


def evaluate(manifest: RunManifest, workers: int = 1) -> Report:
    """Run the configured pipeline over every image in the manifest.

    Deterministic given frozen bundles and pair caches; any per-image
    failure aborts with a PipelineError naming the image id.
    """
    manifest.validate()
    start = time.perf_counter()
    images = read_bundle(manifest.image_bundle)
    texts = read_bundle(manifest.text_bundle)
    if images.features.rows == 0:
        raise InvariantError("image bundle is empty")
    labels = images.labels()
    num_classes = len(texts.class_names)
    partition = ClassPartition.from_records(texts.records, num_classes)
    config = dict(manifest.config)

    if manifest.mode == "fewshot":
        coder = build_coder(images.features, texts.features,
                            normalize_images=bool(config.get("normalize_image_features", False)))
        cache = _load_support_cache(texts, config)
        preds = predict(_fewshot_logits(coder, partition, cache, config))
    else:
        coder = build_coder(images.features, texts.features)
        logits = stage1_logits(coder, partition)
        if manifest.mode == "zeroshot":
            preds = predict(logits)
        else:
            cfg = RerankConfig(
                top_k=int(config.get("top_k", 5)),
                gate_margin=float(config.get("gate_margin", 0.02)),
                enabled=bool(config.get("gate_enabled", True)),
            )
            store = DiskPairStore(
                config["pairs_dir"], texts.class_names, texts.encoder_tag,
                offline=bool(config.get("offline", True)),
            )
            preds = _zeroshot_rerank_predictions(images, logits, store, cfg, workers=workers)

    wall = time.perf_counter() - start
    return _score_predictions(preds, labels, num_classes, manifest.dataset_tag,
                              manifest.mode, config, manifest.seed, wall)


def ablation_sweep(manifest: RunManifest,
                   family_sets: Sequence[Sequence[TextFamily | str]],
                   workers: int = 1) -> list[Report]:
    """One report per enabled-family subset, sharing one neighbor matrix.

    Subsets mask text columns by family; masking is equivalent to physically
    filtering the text bundle. Every subset must include the class-name
    family. Supported modes: zeroshot and fewshot.
    """
    manifest.validate()
    if manifest.mode not in ("zeroshot", "fewshot"):
        raise ValueError("ablation sweeps support modes zeroshot and fewshot")
    images = read_bundle(manifest.image_bundle)
    texts = read_bundle(manifest.text_bundle)
    labels = images.labels()
    num_classes = len(texts.class_names)
    normalize = bool(manifest.config.get("normalize_image_features", False))
    coder = build_coder(images.features, texts.features,
                        normalize_images=True if manifest.mode == "zeroshot" else normalize)
    cache = _load_support_cache(texts, manifest.config) if manifest.mode == "fewshot" else None

    reports = []
    for subset in family_sets:
        start = time.perf_counter()
        families = [TextFamily.from_wire(f) if isinstance(f, str) else f for f in subset]
        if not families:
            raise ValueError("empty family subset")
        partition = ClassPartition.from_records(texts.records, num_classes, families=families)
        partition.validate_coverage()
        config = dict(manifest.config)
        config["families"] = sorted(f.wire for f in families)
        if manifest.mode == "zeroshot":
            preds = predict(stage1_logits(coder, partition))
        else:
            preds = predict(_fewshot_logits(coder, partition, cache, config))
        wall = time.perf_counter() - start
        reports.append(_score_predictions(preds, labels, num_classes, manifest.dataset_tag,
                                          manifest.mode, config, manifest.seed, wall))
    return reports
