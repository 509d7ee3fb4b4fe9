"""Neighbor-vector construction and the stage-1 heuristic classifier.

An image's neighbor vector is its cosine similarity against every text in
an ordered text set. Per class, the heuristic logit is the mean of the
attribute and analogous-class similarities concatenated with the single
best class-name/synonym similarity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .bundle import (
    EmbeddingBundle,
    FeatureMatrix,
    ImageRecord,
    TextFamily,
    TextRecord,
    normalize_rows,
)
from .errors import InvariantError


class PsiMapping(Enum):
    """Mapping applied to each similarity; only identity is implemented,
    kept as an explicit extension point."""

    IDENTITY = "identity"


_GENERAL_FAMILIES = (
    TextFamily.CLASS_NAME,
    TextFamily.ATTRIBUTE,
    TextFamily.ANALOGOUS_CLASS,
    TextFamily.SYNONYM,
)


@dataclass
class ClassPartition:
    """Per-class index slices into a neighbor vector, split by text family.

    For class j, `ori[j]`, `att[j]`, `ana[j]`, `syn[j]` index the columns
    holding that class's class-name, attribute, analogous-class and synonym
    texts. One-to-one records are never included. CSR-style flattenings of
    the mean-pool (att + ana) and max-pool (ori + syn) slices feed the
    reduction kernel.
    """

    num_classes: int
    n_texts: int
    ori: list[np.ndarray]
    att: list[np.ndarray]
    ana: list[np.ndarray]
    syn: list[np.ndarray]
    mean_idx: np.ndarray = field(repr=False, default=None)
    mean_start: np.ndarray = field(repr=False, default=None)
    max_idx: np.ndarray = field(repr=False, default=None)
    max_start: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_records(cls, records: Sequence[TextRecord], num_classes: int,
                     families: Iterable[TextFamily] | None = None) -> "ClassPartition":
        """Build the partition for a text-record list.

        `families` restricts which families are indexed (used by ablation
        masking); indices always refer to positions in the full record list,
        so the same neighbor matrix serves every subset.
        """
        allowed = set(_GENERAL_FAMILIES if families is None else families)
        allowed.discard(TextFamily.ONE_TO_ONE)
        if TextFamily.CLASS_NAME not in allowed:
            raise ValueError("a partition needs the class-name family")
        buckets = {f: [[] for _ in range(num_classes)] for f in _GENERAL_FAMILIES}
        for col, rec in enumerate(records):
            if rec.family == TextFamily.ONE_TO_ONE or rec.family not in allowed:
                continue
            if not 0 <= rec.class_id < num_classes:
                raise InvariantError(f"record {rec.id} class_id {rec.class_id} out of range")
            buckets[rec.family][rec.class_id].append(col)

        def arrs(f):
            return [np.asarray(ix, dtype=np.int64) for ix in buckets[f]]

        part = cls(
            num_classes=num_classes,
            n_texts=len(records),
            ori=arrs(TextFamily.CLASS_NAME),
            att=arrs(TextFamily.ATTRIBUTE),
            ana=arrs(TextFamily.ANALOGOUS_CLASS),
            syn=arrs(TextFamily.SYNONYM),
        )
        part._build_csr()
        return part

    def _build_csr(self) -> None:
        mean_chunks, max_chunks = [], []
        mean_start = np.zeros(self.num_classes + 1, dtype=np.int64)
        max_start = np.zeros(self.num_classes + 1, dtype=np.int64)
        for j in range(self.num_classes):
            mean = np.concatenate([self.att[j], self.ana[j]]) if (
                self.att[j].size or self.ana[j].size) else np.empty(0, dtype=np.int64)
            pool = np.concatenate([self.ori[j], self.syn[j]]) if (
                self.ori[j].size or self.syn[j].size) else np.empty(0, dtype=np.int64)
            mean_chunks.append(mean)
            max_chunks.append(pool)
            mean_start[j + 1] = mean_start[j] + mean.size
            max_start[j + 1] = max_start[j] + pool.size
        self.mean_idx = np.concatenate(mean_chunks) if mean_chunks else np.empty(0, np.int64)
        self.max_idx = np.concatenate(max_chunks) if max_chunks else np.empty(0, np.int64)
        self.mean_start = mean_start
        self.max_start = max_start

    def validate_coverage(self) -> None:
        """Every class must have at least one class-name or synonym text."""
        empty = np.nonzero(np.diff(self.max_start) == 0)[0]
        if empty.size:
            raise InvariantError(
                f"class {empty[0]} has no class-name or synonym texts to max-pool"
            )


def _as_feature_matrix(x) -> FeatureMatrix:
    return x if isinstance(x, FeatureMatrix) else FeatureMatrix(np.asarray(x))


def build_coder(image_features: FeatureMatrix | np.ndarray,
                text_features: FeatureMatrix | np.ndarray,
                psi: PsiMapping = PsiMapping.IDENTITY,
                normalize_images: bool = True) -> np.ndarray:
    """Neighbor matrix: row i holds image i's similarity to every text.

    Text rows are always unit-normalized. Image rows are unit-normalized by
    default (cosine); pass normalize_images=False to apply the text matrix
    to raw image features, as the few-shot adapter does. Products accumulate
    in float64 and are stored as float32, shape (n_images, n_texts).
    """
    if psi is not PsiMapping.IDENTITY:
        raise ValueError(f"unsupported psi mapping {psi!r}")
    imgs = _as_feature_matrix(image_features)
    texts = _as_feature_matrix(text_features)
    if imgs.dim != texts.dim:
        raise ValueError(f"feature dims differ: images {imgs.dim}, texts {texts.dim}")
    if not texts.normalized:
        texts = normalize_rows(texts)
    if normalize_images and not imgs.normalized:
        imgs = normalize_rows(imgs)
    left = imgs.data.astype(np.float64)
    right = texts.data.astype(np.float64)
    return (left @ right.T).astype(np.float32)


def coder_bundle(coder: np.ndarray, image_records: Sequence[ImageRecord],
                 class_names: Sequence[str], encoder_tag: str) -> EmbeddingBundle:
    """Wrap a neighbor matrix as a kind="coder" bundle for debugging dumps."""
    return EmbeddingBundle(
        kind="coder",
        features=FeatureMatrix(coder, normalized=False),
        records=list(image_records),
        class_names=list(class_names),
        encoder_tag=encoder_tag,
    )


def one_nn_class(coder: np.ndarray, partition: ClassPartition) -> int:
    """Class of the single highest class-name similarity (ties: lowest class id)."""
    coder = np.asarray(coder)
    if coder.ndim != 1:
        raise ValueError("one_nn_class takes a single neighbor vector")
    cols, owners = [], []
    for j in range(partition.num_classes):
        cols.append(partition.ori[j])
        owners.append(np.full(partition.ori[j].size, j, dtype=np.int64))
    all_cols = np.concatenate(cols) if cols else np.empty(0, np.int64)
    if all_cols.size == 0:
        raise InvariantError("no class-name texts in partition")
    all_owners = np.concatenate(owners)
    # columns are grouped by ascending class id, so argmax's first-hit
    # tie-breaking lands on the lowest class id
    return int(all_owners[np.argmax(coder[all_cols])])


def heuristic_logit(ori: np.ndarray, att: np.ndarray, ana: np.ndarray,
                    syn: np.ndarray) -> float:
    """mean(att + ana entries + [max over ori and syn]); float64 throughout.

    Empty att/ana slices contribute nothing; ori and syn may not both be
    empty.
    """
    ori = np.asarray(ori, dtype=np.float64).ravel()
    att = np.asarray(att, dtype=np.float64).ravel()
    ana = np.asarray(ana, dtype=np.float64).ravel()
    syn = np.asarray(syn, dtype=np.float64).ravel()
    pool = np.concatenate([ori, syn])
    if pool.size == 0:
        raise InvariantError("class-name and synonym slices are both empty")
    parts = np.concatenate([att, ana, [pool.max()]])
    return float(parts.mean())


def stage1_logits(coder: np.ndarray, partition: ClassPartition,
                  use_numba: bool | None = None) -> np.ndarray:
    """Heuristic logit per class, in class-name order.

    Accepts a single neighbor vector (returns shape (C,)) or a matrix of
    them (returns (n_images, C)).
    """
    coder = np.asarray(coder)
    squeeze = coder.ndim == 1
    if squeeze:
        coder = coder[None, :]
    if coder.shape[1] != partition.n_texts:
        raise ValueError(
            f"neighbor vector has {coder.shape[1]} entries, partition expects {partition.n_texts}"
        )
    partition.validate_coverage()
    out = kernels.stage1_reduce(
        coder, partition.mean_idx, partition.mean_start,
        partition.max_idx, partition.max_start, use_numba=use_numba,
    )
    return out[0] if squeeze else out


def argmax_lowest(scores: np.ndarray) -> int:
    """Argmax with ties broken by the lowest index, for determinism."""
    return int(np.argmax(scores))
