"""Parsers for free-form list answers returned by the language model.

The gateway gives no shape guarantees, so the parser accepts numbered
lists, bulleted lists, and bare line-separated text, stripping enumerators,
surrounding quotes, and trailing punctuation.
"""

from __future__ import annotations

import re

from ..errors import ResponseParseError

_ENUMERATOR = re.compile(r"^\s*(?:[-*•·]|\(?\d+[.):])\s*")
_TRAILING_PUNCT = re.compile(r"[.,;:!]+$")


def _clean_item(line: str) -> str:
    line = _ENUMERATOR.sub("", line.strip())
    line = line.strip()
    if len(line) >= 2 and line[0] == line[-1] and line[0] in "\"'":
        line = line[1:-1].strip()
    line = _TRAILING_PUNCT.sub("", line).strip()
    return line


def parse_list_response(text: str) -> list[str]:
    """Items of a list-shaped response, cleaned, order preserved.

    Raises ResponseParseError when no items survive cleaning.
    """
    items = []
    for line in text.splitlines():
        cleaned = _clean_item(line)
        if cleaned:
            items.append(cleaned)
    if not items:
        raise ResponseParseError("no list items found in response", text)
    return items


def dedupe_casefold(items: list[str]) -> list[str]:
    """Order-preserving dedup; comparison is casefolded, output keeps the
    first spelling seen."""
    seen = set()
    out = []
    for item in items:
        key = item.casefold()
        if key not in seen:
            seen.add(key)
            out.append(item)
    return out


def _mentions(line: str, name: str) -> bool:
    n = name.casefold()
    if n.endswith("y"):
        pattern = rf"\b{re.escape(n[:-1])}(?:y|ies)\b"  # butterfly / butterflies
    else:
        pattern = rf"\b{re.escape(n)}(?:s|es)?\b"
    return re.search(pattern, line.casefold()) is not None


def split_pair_response(text: str, name_a: str, name_b: str) -> tuple[list[str], list[str]]:
    """Split a two-class comparison answer into per-class item lists.

    Tries section headers first (a line naming one class and ending with a
    colon, optionally bold-marked); otherwise attributes each list item to
    whichever class it mentions. Raises ResponseParseError when either side
    ends up empty.
    """
    sections: dict[str, list[str]] = {name_a: [], name_b: []}
    current: str | None = None
    saw_header = False
    for line in text.splitlines():
        stripped = line.strip().strip("*#").strip()
        if stripped.endswith(":"):
            head = stripped[:-1].strip()
            hit_a = _mentions(head, name_a)
            hit_b = _mentions(head, name_b)
            if hit_a != hit_b:
                current = name_a if hit_a else name_b
                saw_header = True
                continue
        cleaned = _clean_item(line)
        if not cleaned:
            continue
        if saw_header:
            if current is not None:
                sections[current].append(cleaned)
        else:
            hit_a = _mentions(cleaned, name_a)
            hit_b = _mentions(cleaned, name_b)
            if hit_a != hit_b:
                sections[name_a if hit_a else name_b].append(cleaned)

    side_a = dedupe_casefold(sections[name_a])
    side_b = dedupe_casefold(sections[name_b])
    if not side_a or not side_b:
        raise ResponseParseError(
            f"could not attribute items to both {name_a!r} and {name_b!r}", text
        )
    return side_a, side_b
