"""Two-stage zero-shot classification.

Stage 1 scores every class with the heuristic logits over the general text
set. Stage 2 takes the top-k classes, builds a per-pair neighbor vector
from one-to-one texts, and reorders the candidates by summed score gaps.
An uncertainty gate skips stage 2 when the stage-1 margin is already wide.
"""

from __future__ import annotations

import hashlib
import itertools
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .bundle import (
    EmbeddingBundle,
    FeatureMatrix,
    TextFamily,
    TextRecord,
    normalize_rows,
    read_bundle,
    write_bundle,
)
from .errors import InvariantError, PairStoreMissError


@dataclass
class RerankConfig:
    """Stage-2 settings.

    `enabled` switches the uncertainty gate: when True only images whose
    stage-1 top1-top2 margin falls below `gate_margin` are reranked; when
    False every image is reranked.
    """

    top_k: int = 5
    gate_margin: float = 0.02
    enabled: bool = True

    def validate(self) -> None:
        if self.top_k < 2:
            raise ValueError(f"top_k must be >= 2, got {self.top_k}")
        if self.gate_margin < 0:
            raise ValueError(f"gate_margin must be >= 0, got {self.gate_margin}")


def top_k_classes(logits: np.ndarray, k: int) -> np.ndarray:
    """The k classes with the highest logits, descending; ties by lowest id."""
    logits = np.asarray(logits, dtype=np.float64)
    if k > logits.shape[0]:
        raise ValueError(f"k={k} exceeds class count {logits.shape[0]}")
    order = np.lexsort((np.arange(logits.shape[0]), -logits))
    return order[:k].astype(np.int64)


def pair_set(classes: Sequence[int]) -> list[tuple[int, int]]:
    """All unordered pairs of the candidate set, in candidate order."""
    classes = list(classes)
    if len(classes) < 2:
        raise ValueError("pair_set needs at least two classes")
    return list(itertools.combinations(classes, 2))


class GapLedger:
    """Antisymmetric score gaps over the gated candidate set."""

    def __init__(self, classes: Sequence[int]):
        self.classes = [int(c) for c in classes]
        self._gaps: dict[tuple[int, int], float] = {}

    def record(self, a: int, b: int, gap_ab: float) -> None:
        self._gaps[(a, b)] = gap_ab
        self._gaps[(b, a)] = -gap_ab

    def gap(self, c: int, j: int) -> float:
        return self._gaps[(c, j)]

    def sum_for(self, c: int) -> float:
        return sum(self._gaps[(c, j)] for j in self.classes if j != c)

    def as_dict(self) -> dict[str, float]:
        return {f"{c}:{j}": g for (c, j), g in sorted(self._gaps.items())}


def one_to_one_scores(image_feature: np.ndarray, pair_bundle: EmbeddingBundle) -> dict[int, float]:
    """Mean one-to-one similarity per side of a pair bundle.

    The bundle must hold only one-to-one records for exactly two classes,
    each side non-empty. Returns {class_id: mean similarity}.
    """
    sides: dict[int, list[int]] = {}
    for col, rec in enumerate(pair_bundle.records):
        if not isinstance(rec, TextRecord) or rec.family != TextFamily.ONE_TO_ONE:
            raise InvariantError("pair bundle must contain only one-to-one text records")
        sides.setdefault(rec.class_id, []).append(col)
    if len(sides) != 2:
        raise InvariantError(f"pair bundle covers classes {sorted(sides)}, expected exactly 2")

    feats = pair_bundle.features
    if not feats.normalized:
        feats = normalize_rows(feats)
    x = np.asarray(image_feature, dtype=np.float64).ravel()
    nrm = np.linalg.norm(x)
    if nrm < 1e-12:
        raise InvariantError("degenerate image feature")
    sims = feats.data.astype(np.float64) @ (x / nrm)
    return {cls: float(sims[cols].mean()) for cls, cols in sides.items()}


class PairProvider(Protocol):
    """Anything that can hand out the one-to-one bundle for a class pair."""

    def get_pair(self, class_a: int, class_b: int) -> EmbeddingBundle: ...


@dataclass
class RerankResult:
    final_class: int
    gated: bool                      # True when this image went through stage 2
    stage1_top: list[int]
    ledger: GapLedger | None = None

    def gaps_dict(self) -> dict[str, float]:
        return self.ledger.as_dict() if self.ledger else {}


def rerank_result(logits: np.ndarray, image_feature: np.ndarray,
                  pair_store: PairProvider, cfg: RerankConfig) -> RerankResult:
    """Full stage-2 outcome for one image (used by the CLI and evaluator)."""
    cfg.validate()
    logits = np.asarray(logits, dtype=np.float64)
    top = top_k_classes(logits, cfg.top_k)
    if cfg.enabled:
        margin = float(logits[top[0]] - logits[top[1]])
        if margin >= cfg.gate_margin:
            return RerankResult(int(top[0]), gated=False, stage1_top=top.tolist())

    ledger = GapLedger(top)
    for a, b in pair_set(top):
        scores = one_to_one_scores(image_feature, pair_store.get_pair(int(a), int(b)))
        ledger.record(int(a), int(b), scores[int(a)] - scores[int(b)])

    sums = np.array([ledger.sum_for(int(c)) for c in top])
    # ties resolve to the lowest class id regardless of stage-1 order
    best = -np.inf
    winner = None
    for c, s in zip(top, sums):
        if s > best or (s == best and int(c) < winner):
            best, winner = s, int(c)
    return RerankResult(winner, gated=True, stage1_top=top.tolist(), ledger=ledger)


def rerank(logits: np.ndarray, image_feature: np.ndarray,
           pair_store: PairProvider, cfg: RerankConfig) -> int:
    """Final class for one image under the two-stage scheme."""
    return rerank_result(logits, image_feature, pair_store, cfg).final_class


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-") or "class"


def pair_bundle_filename(name_a: str, name_b: str, encoder_tag: str) -> str:
    """Stable filename for an unordered class pair and encoder."""
    lo, hi = sorted((name_a, name_b))
    digest = hashlib.sha256(f"{lo}\x00{hi}\x00{encoder_tag}".encode("utf-8")).hexdigest()[:12]
    return f"{_slug(lo)}__{_slug(hi)}__{digest}.codr"


class DiskPairStore:
    """One-to-one pair bundles cached on disk, keyed by unordered class pair.

    On a miss the store can generate the bundle if given a text generator
    (class names -> two record lists) and an encoder (records -> features);
    in offline mode, or without those hooks, a miss raises
    PairStoreMissError. Generation is single-flight per pair key.
    """

    def __init__(self, directory: str | Path, class_names: Sequence[str],
                 encoder_tag: str, offline: bool = True,
                 text_generator: Callable[[str, str], tuple[list[TextRecord], list[TextRecord]]] | None = None,
                 text_encoder: Callable[[list[TextRecord]], np.ndarray] | None = None):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.class_names = list(class_names)
        self.encoder_tag = encoder_tag
        self.offline = offline
        self.text_generator = text_generator
        self.text_encoder = text_encoder
        self.lookups = 0
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def path_for(self, class_a: int, class_b: int) -> Path:
        return self.dir / pair_bundle_filename(
            self.class_names[class_a], self.class_names[class_b], self.encoder_tag)

    def put_pair(self, bundle: EmbeddingBundle) -> Path:
        classes = sorted({r.class_id for r in bundle.records})
        if len(classes) != 2:
            raise InvariantError("pair bundle must cover exactly two classes")
        path = self.path_for(*classes)
        write_bundle(bundle, path)
        return path

    def get_pair(self, class_a: int, class_b: int) -> EmbeddingBundle:
        if class_a == class_b:
            raise ValueError("a pair needs two distinct classes")
        self.lookups += 1
        path = self.path_for(class_a, class_b)
        key = path.name
        with self._lock_for(key):
            if path.exists():
                return read_bundle(path)
            if self.offline or self.text_generator is None or self.text_encoder is None:
                raise PairStoreMissError(
                    f"no pair bundle for classes ({class_a}, {class_b}) at {path}"
                )
            name_a = self.class_names[class_a]
            name_b = self.class_names[class_b]
            recs_a, recs_b = self.text_generator(name_a, name_b)
            records = list(recs_a) + list(recs_b)
            got = {r.class_id for r in records}
            if got != {class_a, class_b}:
                raise InvariantError(
                    f"generator produced records for classes {sorted(got)}, "
                    f"expected {{{class_a}, {class_b}}}"
                )
            feats = np.asarray(self.text_encoder(records), dtype=np.float32)
            bundle = EmbeddingBundle(
                kind="text",
                features=normalize_rows(FeatureMatrix(feats)),
                records=records,
                class_names=self.class_names,
                encoder_tag=self.encoder_tag,
            )
            write_bundle(bundle, path)
            return read_bundle(path)
