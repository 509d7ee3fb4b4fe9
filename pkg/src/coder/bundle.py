"""Embedding bundle file format and in-memory feature/record model.

A bundle packs a float32 feature matrix together with its row metadata in a
single file so features can never be paired with the wrong records. Layout
(all integers little-endian, no padding):

    bytes 0-3    magic ASCII "CODR"
    bytes 4-7    version u32 (currently 1)
    bytes 8-11   rows u32
    bytes 12-15  dim u32
    bytes 16-23  metadata_len u64
    ...          metadata_len bytes of UTF-8 JSON
    ...          rows * dim * 4 bytes of IEEE-754 float32, row-major

The JSON section holds records, class_names, encoder_tag, kind and the
normalized flag. Serialization is canonical (sorted keys, compact
separators) so rewriting an unchanged bundle is byte-identical.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    BadMagicError,
    DegenerateFeatureError,
    InvariantError,
    RecordCountMismatchError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

MAGIC = b"CODR"
VERSION = 1
HEADER_LEN = 24

# Row norms below this are not meaningfully normalizable in float32.
DEGENERATE_NORM = 1e-12
# Tolerance on unit norms when the normalized flag is set.
UNIT_NORM_TOL = 1e-4

BUNDLE_KINDS = ("text", "image", "coder")


class TextFamily(IntEnum):
    """The five text families; declaration order is the canonical sort order."""

    CLASS_NAME = 0
    ATTRIBUTE = 1
    ANALOGOUS_CLASS = 2
    SYNONYM = 3
    ONE_TO_ONE = 4

    @property
    def wire(self) -> str:
        return _FAMILY_WIRE[self]

    @classmethod
    def from_wire(cls, name: str) -> "TextFamily":
        try:
            return _FAMILY_FROM_WIRE[name]
        except KeyError:
            raise InvariantError(f"unknown text family {name!r}") from None


_FAMILY_WIRE = {
    TextFamily.CLASS_NAME: "class_name",
    TextFamily.ATTRIBUTE: "attribute",
    TextFamily.ANALOGOUS_CLASS: "analogous_class",
    TextFamily.SYNONYM: "synonym",
    TextFamily.ONE_TO_ONE: "one_to_one",
}
_FAMILY_FROM_WIRE = {v: k for k, v in _FAMILY_WIRE.items()}


@dataclass(frozen=True)
class TextRecord:
    """One generated text with its family tag and provenance."""

    id: int
    text: str
    family: TextFamily
    class_id: int
    pair_class_id: int | None = None
    template_id: str = ""

    def validate(self) -> None:
        if not self.text:
            raise InvariantError(f"text record {self.id} has empty text")
        if self.family == TextFamily.ONE_TO_ONE:
            if self.pair_class_id is None:
                raise InvariantError(
                    f"one-to-one record {self.id} is missing pair_class_id"
                )
            if self.pair_class_id == self.class_id:
                raise InvariantError(
                    f"one-to-one record {self.id} pairs class {self.class_id} with itself"
                )
        elif self.pair_class_id is not None:
            raise InvariantError(
                f"record {self.id} ({self.family.wire}) must not carry pair_class_id"
            )

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "family": self.family.wire,
            "class_id": self.class_id,
            "pair_class_id": self.pair_class_id,
            "template_id": self.template_id,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TextRecord":
        return cls(
            id=int(d["id"]),
            text=d["text"],
            family=TextFamily.from_wire(d["family"]),
            class_id=int(d["class_id"]),
            pair_class_id=None if d.get("pair_class_id") is None else int(d["pair_class_id"]),
            template_id=d.get("template_id", ""),
        )


@dataclass(frozen=True)
class ImageRecord:
    """One image row: stable id, optional label, and source path."""

    id: int
    label_class_id: int | None = None
    source_path: str = ""

    def validate(self) -> None:
        pass

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "label_class_id": self.label_class_id,
            "source_path": self.source_path,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ImageRecord":
        return cls(
            id=int(d["id"]),
            label_class_id=None if d.get("label_class_id") is None else int(d["label_class_id"]),
            source_path=d.get("source_path", ""),
        )


Record = Union[TextRecord, ImageRecord]


@dataclass
class FeatureMatrix:
    """Row-major float32 feature matrix with a unit-norm flag."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise InvariantError(f"feature matrix must be 2-D, got shape {arr.shape}")
        self.data = arr

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def validate(self) -> None:
        if self.dim < 1:
            raise InvariantError("feature dimension must be >= 1")
        if not np.all(np.isfinite(self.data)):
            raise InvariantError("feature matrix contains NaN or Inf")
        if self.normalized and self.rows:
            norms = np.linalg.norm(self.data.astype(np.float64), axis=1)
            bad = np.nonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)[0]
            if bad.size:
                raise InvariantError(
                    f"normalized flag set but row {bad[0]} has norm {norms[bad[0]]:.6f}"
                )

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.normalized == other.normalized
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


def normalize_rows(m: FeatureMatrix) -> FeatureMatrix:
    """Scale each row to unit Euclidean norm.

    Norms are computed in float64 and results stored back as float32.
    Raises DegenerateFeatureError for any row with norm below 1e-12.
    """
    data = m.data.astype(np.float64)
    norms = np.linalg.norm(data, axis=1)
    bad = np.nonzero(norms < DEGENERATE_NORM)[0]
    if bad.size:
        raise DegenerateFeatureError(int(bad[0]), float(norms[bad[0]]))
    out = (data / norms[:, None]).astype(np.float32) if m.rows else m.data.copy()
    return FeatureMatrix(out, normalized=True)


def _canonical_key(kind: str, record: Record):
    if kind == "text":
        return (record.class_id, int(record.family), record.id)
    return (record.id,)


@dataclass
class EmbeddingBundle:
    """Feature matrix plus aligned records; the only interchange format.

    Row i of the feature matrix belongs to records[i]. Bundles are
    immutable values after load: share freely across threads, never
    mutate in place.
    """

    kind: str
    features: FeatureMatrix
    records: list = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)
    encoder_tag: str = ""

    def validate(self) -> None:
        if self.kind not in BUNDLE_KINDS:
            raise InvariantError(f"unknown bundle kind {self.kind!r}")
        self.features.validate()
        if len(self.records) != self.features.rows:
            raise RecordCountMismatchError(
                f"{len(self.records)} records for {self.features.rows} feature rows"
            )
        want = TextRecord if self.kind == "text" else ImageRecord
        n_classes = len(self.class_names)
        seen_ids = set()
        seen_keys = set()
        for rec in self.records:
            if not isinstance(rec, want):
                raise InvariantError(
                    f"bundle kind {self.kind!r} cannot hold {type(rec).__name__}"
                )
            rec.validate()
            if rec.id in seen_ids:
                raise InvariantError(f"duplicate record id {rec.id}")
            seen_ids.add(rec.id)
            if isinstance(rec, TextRecord):
                if not 0 <= rec.class_id < n_classes:
                    raise InvariantError(
                        f"record {rec.id} class_id {rec.class_id} out of range [0, {n_classes})"
                    )
                if rec.pair_class_id is not None and not 0 <= rec.pair_class_id < n_classes:
                    raise InvariantError(
                        f"record {rec.id} pair_class_id {rec.pair_class_id} out of range"
                    )
                key = (rec.text, rec.family, rec.class_id, rec.pair_class_id)
                if key in seen_keys:
                    raise InvariantError(f"duplicate text record {key!r}")
                seen_keys.add(key)
            elif rec.label_class_id is not None and not 0 <= rec.label_class_id < n_classes:
                raise InvariantError(
                    f"record {rec.id} label_class_id {rec.label_class_id} out of range"
                )

    def canonicalized(self) -> "EmbeddingBundle":
        """Return a copy with records (and rows) in canonical order.

        Text bundles sort by (class_id, family, id) so the neighbor-vector
        column layout is deterministic across runs; image and coder bundles
        sort by record id.
        """
        order = sorted(range(len(self.records)),
                       key=lambda i: _canonical_key(self.kind, self.records[i]))
        if order == list(range(len(self.records))):
            return self
        return EmbeddingBundle(
            kind=self.kind,
            features=FeatureMatrix(self.features.data[order], self.features.normalized),
            records=[self.records[i] for i in order],
            class_names=list(self.class_names),
            encoder_tag=self.encoder_tag,
        )

    def labels(self) -> np.ndarray:
        """Label vector for an image bundle; raises if any label is missing."""
        if self.kind == "text":
            raise InvariantError("text bundles carry no labels")
        out = np.empty(len(self.records), dtype=np.int64)
        for i, rec in enumerate(self.records):
            if rec.label_class_id is None:
                raise InvariantError(f"image record {rec.id} has no label")
            out[i] = rec.label_class_id
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingBundle):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.encoder_tag == other.encoder_tag
            and self.class_names == other.class_names
            and self.records == other.records
            and self.features == other.features
        )


def dumps_canonical(obj) -> bytes:
    """Deterministic JSON: sorted keys, compact separators, raw UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _metadata_dict(bundle: EmbeddingBundle) -> dict:
    return {
        "kind": bundle.kind,
        "class_names": list(bundle.class_names),
        "encoder_tag": bundle.encoder_tag,
        "normalized": bundle.features.normalized,
        "records": [r.to_json_dict() for r in bundle.records],
    }


def write_bundle(bundle: EmbeddingBundle, path: str | Path) -> None:
    """Serialize a bundle to `path` atomically (write temp, then rename).

    The bundle is validated and canonically ordered before any bytes are
    written, so an invalid bundle never leaves a file behind.
    """
    bundle.validate()
    bundle = bundle.canonicalized()
    meta = dumps_canonical(_metadata_dict(bundle))
    header = (
        MAGIC
        + VERSION.to_bytes(4, "little")
        + bundle.features.rows.to_bytes(4, "little")
        + bundle.features.dim.to_bytes(4, "little")
        + len(meta).to_bytes(8, "little")
    )
    payload = np.ascontiguousarray(bundle.features.data, dtype="<f4").tobytes()

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(header)
            f.write(meta)
            f.write(payload)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)  # mkstemp defaults to 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_bundle(path: str | Path) -> EmbeddingBundle:
    """Load and validate a bundle file.

    Raises BadMagicError, UnsupportedVersionError, TruncatedPayloadError or
    RecordCountMismatchError for the corresponding file defects.
    """
    blob = Path(path).read_bytes()
    if len(blob) < HEADER_LEN:
        raise TruncatedPayloadError(f"file is {len(blob)} bytes, header needs {HEADER_LEN}")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}")
    version = int.from_bytes(blob[4:8], "little")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported bundle version {version}")
    rows = int.from_bytes(blob[8:12], "little")
    dim = int.from_bytes(blob[12:16], "little")
    meta_len = int.from_bytes(blob[16:24], "little")
    if len(blob) < HEADER_LEN + meta_len:
        raise TruncatedPayloadError("metadata section truncated")
    try:
        meta = json.loads(blob[HEADER_LEN:HEADER_LEN + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvariantError(f"metadata is not valid JSON: {exc}") from exc

    payload = blob[HEADER_LEN + meta_len:]
    expected = rows * dim * 4
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload holds {len(payload) // (dim * 4) if dim else 0} rows, header declares {rows}"
        )
    if len(payload) > expected:
        raise InvariantError(f"{len(payload) - expected} trailing bytes after payload")

    kind = meta.get("kind")
    if kind not in BUNDLE_KINDS:
        raise InvariantError(f"metadata kind {kind!r} not one of {BUNDLE_KINDS}")
    record_dicts = meta.get("records", [])
    if len(record_dicts) != rows:
        raise RecordCountMismatchError(
            f"metadata lists {len(record_dicts)} records, header declares {rows} rows"
        )
    make = TextRecord.from_json_dict if kind == "text" else ImageRecord.from_json_dict
    records = [make(d) for d in record_dicts]

    data = np.frombuffer(payload, dtype="<f4").reshape(rows, dim).copy() if rows else \
        np.zeros((0, dim), dtype=np.float32)
    bundle = EmbeddingBundle(
        kind=kind,
        features=FeatureMatrix(data, normalized=bool(meta.get("normalized", False))),
        records=records,
        class_names=list(meta.get("class_names", [])),
        encoder_tag=meta.get("encoder_tag", ""),
    )
    bundle.validate()
    return bundle


def text_records_to_json(records: Iterable[TextRecord], class_names: Sequence[str]) -> bytes:
    """Canonical JSON export of a text set (records only, no features)."""
    return dumps_canonical({
        "class_names": list(class_names),
        "records": [r.to_json_dict() for r in records],
    })


def text_records_from_json(blob: bytes | str) -> tuple[list[TextRecord], list[str]]:
    """Inverse of text_records_to_json."""
    doc = json.loads(blob)
    records = [TextRecord.from_json_dict(d) for d in doc["records"]]
    return records, list(doc.get("class_names", []))
