"""Training-free few-shot adapter over neighbor-vector affinities.

Support images are turned into neighbor vectors with the same text set as
test images; a sharpened affinity between the test image's neighbor vector
and the support rows weights the support labels, and that weighted label
mass corrects the zero-shot logits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import kernels
from .bundle import EmbeddingBundle
from .core import argmax_lowest, build_coder
from .errors import InvariantError

log = logging.getLogger(__name__)


class NormMode(Enum):
    MINMAX = "minmax"
    L2 = "l2"


@dataclass
class AdapterParams:
    """Correction strength alpha and affinity sharpness beta / T."""

    alpha: float = 1.0
    beta: float = 5.5
    T: float = 3.0
    norm_mode: NormMode = NormMode.MINMAX

    def validate(self) -> None:
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.T <= 0:
            raise ValueError(f"T must be > 0, got {self.T}")


@dataclass
class SupportCache:
    """Support-set neighbor rows and one-hot labels.

    `s_train` is (N*M, K) float32 built with the same text bundle used at
    test time; `l_train` is (N*M, C) one-hot float64.
    """

    s_train: np.ndarray
    l_train: np.ndarray
    n_ways: int
    m_shots: int

    @property
    def size(self) -> int:
        return self.s_train.shape[0]


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvariantError(
            f"label {labels.max() if labels.max() >= num_classes else labels.min()} "
            f"out of range [0, {num_classes})"
        )
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def build_support_cache(support_images: EmbeddingBundle, texts: EmbeddingBundle,
                        normalize_image_features: bool = False) -> SupportCache:
    """Neighbor rows + one-hot labels for a labeled support bundle.

    Support rows are the raw image features times the unit-norm text matrix;
    pass normalize_image_features=True to cosine-normalize them first.
    """
    if support_images.encoder_tag != texts.encoder_tag:
        log.warning(
            "support encoder %r differs from text encoder %r",
            support_images.encoder_tag, texts.encoder_tag,
        )
    labels = support_images.labels()
    s_train = build_coder(support_images.features, texts.features,
                          normalize_images=normalize_image_features)
    l_train = one_hot(labels, len(texts.class_names))
    ways = int(np.unique(labels).size)
    shots, rem = divmod(labels.shape[0], ways) if ways else (0, 0)
    return SupportCache(
        s_train=s_train,
        l_train=l_train,
        n_ways=ways,
        m_shots=shots if rem == 0 else 0,
    )


def affinity(s_i: np.ndarray, cache: SupportCache, p: AdapterParams) -> np.ndarray:
    """exp(-beta * (1 - Norm(s_i . S_train^T) / T)) per support sample.

    Accepts one neighbor vector (returns (NM,)) or a matrix (returns
    (n, NM)). Norm is applied within each test image's row of raw inner
    products.
    """
    p.validate()
    if cache.size == 0:
        raise InvariantError("support cache is empty")
    s_i = np.asarray(s_i, dtype=np.float64)
    squeeze = s_i.ndim == 1
    if squeeze:
        s_i = s_i[None, :]
    if s_i.shape[1] != cache.s_train.shape[1]:
        raise ValueError(
            f"neighbor vector length {s_i.shape[1]} != support width {cache.s_train.shape[1]}"
        )
    sims = s_i @ cache.s_train.astype(np.float64).T
    out = kernels.affinity_transform(sims, p.beta, p.T, p.norm_mode.value)
    return out[0] if squeeze else out


def adapt_logits(zs_logits: np.ndarray, s_i: np.ndarray, cache: SupportCache,
                 p: AdapterParams) -> np.ndarray:
    """alpha * (A . L_train) + zs_logits; affine in alpha by construction."""
    zs = np.asarray(zs_logits, dtype=np.float64)
    squeeze = zs.ndim == 1
    a = affinity(s_i, cache, p)
    if squeeze:
        a = a[None, :]
        zs = zs[None, :]
    if zs.shape[1] != cache.l_train.shape[1]:
        raise ValueError(
            f"zero-shot logits have {zs.shape[1]} classes, cache has {cache.l_train.shape[1]}"
        )
    if zs.shape[0] != a.shape[0]:
        raise ValueError("zero-shot logits and neighbor vectors disagree on image count")
    out = p.alpha * (a @ cache.l_train) + zs
    return out[0] if squeeze else out


def predict(logits: np.ndarray) -> np.ndarray:
    """Row-wise argmax with ties to the lowest class id."""
    logits = np.asarray(logits)
    if logits.ndim == 1:
        return np.int64(argmax_lowest(logits))
    return np.argmax(logits, axis=1).astype(np.int64)


def grid_search(params_grid: Sequence[AdapterParams], val_coder: np.ndarray,
                val_labels: np.ndarray, cache: SupportCache,
                zs_logits: np.ndarray) -> AdapterParams:
    """Grid point with the highest validation accuracy; ties keep grid order."""
    grid = list(params_grid)
    if not grid:
        raise ValueError("empty parameter grid")
    val_labels = np.asarray(val_labels, dtype=np.int64)
    if val_labels.size == 0:
        raise ValueError("empty validation set")
    best_acc = -1.0
    best = None
    for p in grid:
        preds = predict(adapt_logits(zs_logits, val_coder, cache, p))
        acc = float(np.mean(preds == val_labels))
        if acc > best_acc:
            best_acc, best = acc, p
    return best
