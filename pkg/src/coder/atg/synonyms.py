"""Synonym providers: a TSV file and a WordNet database-file reader.

The TSV provider keeps the core path dependency-free: one line per class,
`name<TAB>synonym, synonym, ...`. The WordNet provider reads the standard
index.noun / data.noun files from a database directory.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

from ..errors import CoderError


class SynonymLookupError(CoderError):
    """Provider could not service a lookup."""


class SynonymProvider(Protocol):
    def synonyms(self, name: str) -> list[str]: ...

    def sense_count(self, name: str) -> int: ...


def _norm(name: str) -> str:
    return " ".join(name.strip().casefold().split())


class TsvSynonymProvider:
    """Synonyms from a TSV file; repeated lines for a name count as senses."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._table: dict[str, list[str]] = {}
        self._senses: dict[str, int] = {}
        try:
            text = self.path.read_text("utf-8")
        except OSError as exc:
            raise SynonymLookupError(f"cannot read synonym file {self.path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "\t" not in line:
                raise SynonymLookupError(f"{self.path}:{lineno}: expected name<TAB>synonyms")
            name, syns = line.split("\t", 1)
            key = _norm(name)
            items = [s.strip() for s in syns.split(",") if s.strip()]
            self._table.setdefault(key, [])
            for s in items:
                if _norm(s) not in {_norm(x) for x in self._table[key]}:
                    self._table[key].append(s)
            self._senses[key] = self._senses.get(key, 0) + 1

    def synonyms(self, name: str) -> list[str]:
        key = _norm(name)
        return [s for s in self._table.get(key, []) if _norm(s) != key]

    def sense_count(self, name: str) -> int:
        return self._senses.get(_norm(name), 0)


class WordNetFileProvider:
    """Reader for WordNet's noun database (index.noun + data.noun).

    Lemmas are looked up with spaces folded to underscores; synonyms are
    the other lemma words across all of the lemma's synsets, with
    underscores folded back to spaces.
    """

    def __init__(self, database_dir: str | Path):
        self.dir = Path(database_dir)
        self._index: dict[str, list[int]] = {}
        self._data_words: dict[int, list[str]] = {}
        self._load()

    def _load(self) -> None:
        index_path = self.dir / "index.noun"
        data_path = self.dir / "data.noun"
        if not index_path.exists() or not data_path.exists():
            raise SynonymLookupError(f"{self.dir} lacks index.noun/data.noun")
        for line in index_path.read_text("utf-8").splitlines():
            if line.startswith(" ") or not line.strip():
                continue
            fields = line.split()
            lemma = fields[0]
            synset_cnt = int(fields[2])
            p_cnt = int(fields[3])
            # offsets sit after: lemma pos synset_cnt p_cnt [ptrs] sense_cnt tagsense_cnt
            offsets = [int(x) for x in fields[4 + p_cnt + 2:4 + p_cnt + 2 + synset_cnt]]
            self._index[lemma] = offsets
        for line in data_path.read_text("utf-8").splitlines():
            if line.startswith(" ") or not line.strip():
                continue
            fields = line.split()
            offset = int(fields[0])
            w_cnt = int(fields[3], 16)
            words = [fields[4 + 2 * i] for i in range(w_cnt)]
            self._data_words[offset] = words

    @staticmethod
    def _key(name: str) -> str:
        return _norm(name).replace(" ", "_")

    def synonyms(self, name: str) -> list[str]:
        key = self._key(name)
        out: list[str] = []
        seen = {key}
        for offset in self._index.get(key, []):
            for word in self._data_words.get(offset, []):
                wkey = word.casefold()
                if wkey not in seen:
                    seen.add(wkey)
                    out.append(word.replace("_", " "))
        return out

    def sense_count(self, name: str) -> int:
        return len(self._index.get(self._key(name), []))
