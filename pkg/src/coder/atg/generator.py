"""Builders for the five text families and the general-text-set assembler.

All builders are pure given gateway/provider results. The general text set
is the union of class-name, attribute, analogous-class, and synonym records
for every class, deduplicated and canonically ordered; one-to-one records
never appear in it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..bundle import FeatureMatrix, TextFamily, TextRecord, normalize_rows
from ..errors import GatewayError, ResponseParseError
from .gateway import LlmGateway
from .parsing import dedupe_casefold, parse_list_response, split_pair_response
from .synonyms import SynonymProvider
from .templates import (
    ANALOGOUS_PROMPT,
    ATTRIBUTE_PROMPT,
    DEFAULT_TEMPLATES,
    ONE_TO_ONE_PROMPT,
    PromptTemplate,
    render,
)

log = logging.getLogger(__name__)

DEFAULT_COUNTS = {
    TextFamily.ATTRIBUTE: 10,
    TextFamily.ANALOGOUS_CLASS: 5,
    TextFamily.ONE_TO_ONE: 10,
}
DEFAULT_SIMILARITY_THRESHOLD = 0.85

Templates = dict[TextFamily, list[PromptTemplate]]


def _norm_name(name: str) -> str:
    return " ".join(name.strip().casefold().split())


@dataclass
class TextSetSpec:
    """What to generate: classes, enabled families, counts, filter threshold."""

    class_names: list[str]
    families_enabled: set[TextFamily] = field(default_factory=lambda: {
        TextFamily.CLASS_NAME, TextFamily.ATTRIBUTE,
        TextFamily.ANALOGOUS_CLASS, TextFamily.SYNONYM,
    })
    per_family_counts: dict[TextFamily, int] = field(default_factory=dict)
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD

    def count(self, family: TextFamily) -> int:
        return self.per_family_counts.get(family, DEFAULT_COUNTS.get(family, 0))

    def validate(self) -> None:
        if not self.class_names:
            raise ValueError("class_names must be non-empty")
        if any(not n.strip() for n in self.class_names):
            raise ValueError("class names must be non-empty strings")
        if TextFamily.CLASS_NAME not in self.families_enabled:
            raise ValueError("the class-name family cannot be disabled")
        for family in (TextFamily.ATTRIBUTE, TextFamily.ANALOGOUS_CLASS):
            if family in self.families_enabled and self.count(family) < 1:
                raise ValueError(f"requested count for {family.wire} must be >= 1")
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must be within [0, 1]")


def _tpls(templates: Templates | None, family: TextFamily) -> list[PromptTemplate]:
    table = templates if templates is not None else DEFAULT_TEMPLATES
    return table.get(family, DEFAULT_TEMPLATES[family])


def build_class_name_texts(spec: TextSetSpec, templates: Templates | None = None) -> list[TextRecord]:
    """One record per class per class-name template, canonical order."""
    spec.validate()
    out = []
    for class_id, name in enumerate(spec.class_names):
        for tpl in _tpls(templates, TextFamily.CLASS_NAME):
            out.append(TextRecord(
                id=len(out), text=tpl.format(**{"class": name}),
                family=TextFamily.CLASS_NAME, class_id=class_id,
                template_id=tpl.template_id,
            ))
    return out


def query_analogous_classes(class_name: str, gateway: LlmGateway) -> list[str]:
    """Candidate look-alike class names for one class, lowercased, deduped."""
    if not class_name.strip():
        raise ValueError("empty class name")
    prompt = render(ANALOGOUS_PROMPT, {"class": class_name})
    exchange = gateway.complete(prompt)
    items = [item.casefold() for item in parse_list_response(exchange.response)]
    return dedupe_casefold(items)


def filter_analogous(candidates: Sequence[str], dataset_class_names: Sequence[str],
                     name_features: FeatureMatrix, threshold: float) -> list[str]:
    """Drop candidates too close to an existing dataset class.

    `name_features` holds one unit row per candidate followed by one per
    dataset class. A candidate is dropped when its best cosine against any
    class name reaches the threshold, or when it matches a class name
    string exactly (case-insensitive), features notwithstanding.
    """
    n_cand = len(candidates)
    n_cls = len(dataset_class_names)
    if name_features.rows != n_cand + n_cls:
        raise ValueError(
            f"name_features has {name_features.rows} rows, expected {n_cand + n_cls}"
        )
    feats = name_features if name_features.normalized else normalize_rows(name_features)
    data = feats.data.astype(np.float64)
    cand_rows, cls_rows = data[:n_cand], data[n_cand:]
    existing = {_norm_name(n) for n in dataset_class_names}
    kept = []
    for i, cand in enumerate(candidates):
        if _norm_name(cand) in existing:
            continue
        if n_cls and float((cand_rows[i] @ cls_rows.T).max()) >= threshold:
            continue
        kept.append(cand)
    return kept


def drop_exact_matches(candidates: Sequence[str], dataset_class_names: Sequence[str]) -> list[str]:
    """String-only fallback of filter_analogous for when no features exist."""
    existing = {_norm_name(n) for n in dataset_class_names}
    return [c for c in candidates if _norm_name(c) not in existing]


def build_analogous_texts(class_name: str, class_id: int, kept: Sequence[str],
                          templates: Templates | None = None) -> list[TextRecord]:
    """One record per kept analogous class per analogous template."""
    out = []
    for analog in kept:
        for tpl in _tpls(templates, TextFamily.ANALOGOUS_CLASS):
            out.append(TextRecord(
                id=len(out),
                text=tpl.format(**{"class": class_name, "analogous class": analog}),
                family=TextFamily.ANALOGOUS_CLASS, class_id=class_id,
                template_id=tpl.template_id,
            ))
    return out


def build_synonym_texts(class_name: str, class_id: int, synonyms: SynonymProvider,
                        templates: Templates | None = None,
                        cap: int | None = None) -> list[TextRecord]:
    """One record per synonym per synonym template; the class name itself
    is never treated as its own synonym."""
    if not class_name.strip():
        raise ValueError("empty class name")
    if synonyms.sense_count(class_name) > 1:
        log.warning(
            "class %r has %d provider senses; consider disambiguating the class name",
            class_name, synonyms.sense_count(class_name),
        )
    names = [s for s in synonyms.synonyms(class_name) if _norm_name(s) != _norm_name(class_name)]
    if cap is not None:
        names = names[:cap]
    out = []
    for syn in names:
        for tpl in _tpls(templates, TextFamily.SYNONYM):
            out.append(TextRecord(
                id=len(out), text=tpl.format(**{"synonym class": syn}),
                family=TextFamily.SYNONYM, class_id=class_id,
                template_id=tpl.template_id,
            ))
    return out


def build_attribute_texts(class_name: str, class_id: int, gateway: LlmGateway,
                          templates: Templates | None = None,
                          count: int = DEFAULT_COUNTS[TextFamily.ATTRIBUTE]) -> list[TextRecord]:
    """Query the gateway for visual attributes and template each one."""
    if not class_name.strip():
        raise ValueError("empty class name")
    prompt = render(ATTRIBUTE_PROMPT, {"class": class_name})
    exchange = gateway.complete(prompt)
    attributes = dedupe_casefold(parse_list_response(exchange.response))[:count]
    out = []
    for attr in attributes:
        for tpl in _tpls(templates, TextFamily.ATTRIBUTE):
            out.append(TextRecord(
                id=len(out),
                text=tpl.format(**{"class": class_name, "attribute": attr}),
                family=TextFamily.ATTRIBUTE, class_id=class_id,
                template_id=tpl.template_id,
            ))
    return out


def _pair_slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.casefold()).strip("-") or "class"


class OneToOneTextStore:
    """Parsed one-to-one phrases on disk, keyed by unordered class-name pair.

    Generation through get_or_generate is single-flight per pair, so
    concurrent misses for the same pair issue one gateway call.
    """

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _path(self, name_a: str, name_b: str) -> Path:
        lo, hi = sorted((_norm_name(name_a), _norm_name(name_b)))
        digest = hashlib.sha256(f"{lo}\x00{hi}".encode("utf-8")).hexdigest()[:12]
        return self.dir / f"{_pair_slug(lo)}__{_pair_slug(hi)}__{digest}.json"

    def _lock_for(self, path: Path) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(path.name, threading.Lock())

    def get(self, name_a: str, name_b: str) -> dict[str, list[str]] | None:
        path = self._path(name_a, name_b)
        if not path.exists():
            return None
        doc = json.loads(path.read_text("utf-8"))
        return {k: list(v) for k, v in doc["phrases"].items()}

    def put(self, name_a: str, name_b: str, phrases: dict[str, list[str]]) -> None:
        path = self._path(name_a, name_b)
        doc = {"phrases": {_norm_name(k): list(v) for k, v in phrases.items()}}
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, ensure_ascii=False, sort_keys=True), "utf-8")
        tmp.replace(path)

    def get_or_generate(self, name_a: str, name_b: str,
                        generate: Callable[[], dict[str, list[str]]]) -> tuple[dict[str, list[str]], bool]:
        path = self._path(name_a, name_b)
        with self._lock_for(path):
            cached = self.get(name_a, name_b)
            if cached is not None:
                return cached, True
            phrases = {_norm_name(k): v for k, v in generate().items()}
            self.put(name_a, name_b, phrases)
            return phrases, False


def build_one_to_one_texts(class_a: str, class_b: str, gateway: LlmGateway,
                           class_a_id: int = 0, class_b_id: int = 1,
                           store: OneToOneTextStore | None = None,
                           cap: int = DEFAULT_COUNTS[TextFamily.ONE_TO_ONE],
                           templates: Templates | None = None,
                           ) -> tuple[list[TextRecord], list[TextRecord]]:
    """Distinguishing texts for a class pair, one list per side.

    Results are persisted in `store` under the unordered pair, so asking for
    (b, a) after (a, b) is a pure store hit with no gateway call.
    """
    if _norm_name(class_a) == _norm_name(class_b):
        raise ValueError(f"one-to-one texts need two distinct classes, got {class_a!r} twice")

    def generate() -> dict[str, list[str]]:
        prompt = render(ONE_TO_ONE_PROMPT, {"class 1": class_a, "class 2": class_b})
        exchange = gateway.complete(prompt)
        side_a, side_b = split_pair_response(exchange.response, class_a, class_b)
        return {class_a: side_a[:cap], class_b: side_b[:cap]}

    if store is not None:
        phrases, _ = store.get_or_generate(class_a, class_b, generate)
    else:
        phrases = {_norm_name(k): v for k, v in generate().items()}

    def side(name: str, other: str, class_id: int, pair_id: int, id_base: int) -> list[TextRecord]:
        out = []
        for phrase in phrases.get(_norm_name(name), [])[:cap]:
            for tpl in _tpls(templates, TextFamily.ONE_TO_ONE):
                out.append(TextRecord(
                    id=id_base + len(out),
                    text=tpl.format(**{"1v1 text": phrase, "class 1": name, "class 2": other}),
                    family=TextFamily.ONE_TO_ONE, class_id=class_id,
                    pair_class_id=pair_id, template_id=tpl.template_id,
                ))
        return out

    recs_a = side(class_a, class_b, class_a_id, class_b_id, 0)
    recs_b = side(class_b, class_a, class_b_id, class_a_id, len(recs_a))
    return recs_a, recs_b


def assemble_general_text_set(spec: TextSetSpec, gateway: LlmGateway | None = None,
                              synonyms: SynonymProvider | None = None,
                              name_features_fn: Callable[[list[str]], np.ndarray] | None = None,
                              templates: Templates | None = None) -> list[TextRecord]:
    """The general text set: every enabled family except one-to-one.

    Records are deduplicated on exact text (first family in canonical order
    wins), sorted by (class_id, family, generation order), and re-numbered
    0..N-1. A failing family for one class logs a warning and the assembly
    continues; with a frozen gateway cache the output is deterministic.
    Cosine filtering of analogous candidates runs only when
    `name_features_fn` supplies features; exact-name drops always apply.
    """
    spec.validate()
    staged: list[tuple[int, int, int, TextRecord]] = []
    seq = 0

    def stage(records: list[TextRecord]) -> None:
        nonlocal seq
        for rec in records:
            staged.append((rec.class_id, int(rec.family), seq, rec))
            seq += 1

    stage(build_class_name_texts(spec, templates))

    for class_id, name in enumerate(spec.class_names):
        if TextFamily.ATTRIBUTE in spec.families_enabled:
            try:
                stage(build_attribute_texts(name, class_id, gateway, templates,
                                            count=spec.count(TextFamily.ATTRIBUTE)))
            except (GatewayError, ResponseParseError) as exc:
                log.warning("attribute texts failed for %r: %s", name, exc)
        if TextFamily.ANALOGOUS_CLASS in spec.families_enabled:
            try:
                candidates = query_analogous_classes(name, gateway)
                if name_features_fn is not None:
                    feats = FeatureMatrix(np.asarray(
                        name_features_fn(list(candidates) + list(spec.class_names))))
                    kept = filter_analogous(candidates, spec.class_names, feats,
                                            spec.similarity_threshold)
                else:
                    kept = drop_exact_matches(candidates, spec.class_names)
                kept = kept[:spec.count(TextFamily.ANALOGOUS_CLASS)]
                stage(build_analogous_texts(name, class_id, kept, templates))
            except (GatewayError, ResponseParseError) as exc:
                log.warning("analogous texts failed for %r: %s", name, exc)
        if TextFamily.SYNONYM in spec.families_enabled and synonyms is not None:
            try:
                stage(build_synonym_texts(name, class_id, synonyms, templates,
                                          cap=spec.per_family_counts.get(TextFamily.SYNONYM)))
            except Exception as exc:
                log.warning("synonym texts failed for %r: %s", name, exc)

    staged.sort(key=lambda item: item[:3])
    seen_texts = set()
    out: list[TextRecord] = []
    for _, _, _, rec in staged:
        if rec.text in seen_texts:
            continue
        seen_texts.add(rec.text)
        out.append(TextRecord(
            id=len(out), text=rec.text, family=rec.family,
            class_id=rec.class_id, pair_class_id=rec.pair_class_id,
            template_id=rec.template_id,
        ))
    return out
