"""Prompt and text templates for the five text families.

Patterns use {placeholder} substitution; each family requires a fixed
placeholder set. Template files are JSON lists of
{"template_id": ..., "family": ..., "pattern": ...}.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from ..bundle import TextFamily
from ..errors import InvariantError

_PLACEHOLDER = re.compile(r"\{([^{}]+)\}")

# Placeholders each family's text template must use, exactly.
REQUIRED_PLACEHOLDERS: dict[TextFamily, frozenset[str]] = {
    TextFamily.CLASS_NAME: frozenset({"class"}),
    TextFamily.ATTRIBUTE: frozenset({"class", "attribute"}),
    TextFamily.ANALOGOUS_CLASS: frozenset({"class", "analogous class"}),
    TextFamily.SYNONYM: frozenset({"synonym class"}),
    TextFamily.ONE_TO_ONE: frozenset({"class 1", "class 2", "1v1 text"}),
}


def placeholders(pattern: str) -> set[str]:
    return set(_PLACEHOLDER.findall(pattern))


def render(pattern: str, values: dict[str, str]) -> str:
    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise KeyError(f"no value for placeholder {{{key}}}")
        return values[key]

    return _PLACEHOLDER.sub(sub, pattern)


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    family: TextFamily
    pattern: str

    def validate(self) -> None:
        found = placeholders(self.pattern)
        required = REQUIRED_PLACEHOLDERS[self.family]
        if found != required:
            raise InvariantError(
                f"template {self.template_id!r} ({self.family.wire}) uses placeholders "
                f"{sorted(found)}, requires exactly {sorted(required)}"
            )

    def format(self, **values: str) -> str:
        return render(self.pattern, values)


DEFAULT_TEMPLATES: dict[TextFamily, list[PromptTemplate]] = {
    TextFamily.CLASS_NAME: [
        PromptTemplate("class_name.photo", TextFamily.CLASS_NAME, "a photo of a {class}"),
    ],
    TextFamily.ATTRIBUTE: [
        PromptTemplate("attribute.which_has", TextFamily.ATTRIBUTE,
                       "a photo of a {class}, which has {attribute}"),
    ],
    TextFamily.ANALOGOUS_CLASS: [
        PromptTemplate("analogous.similar_to", TextFamily.ANALOGOUS_CLASS,
                       "a {class} similar to {analogous class}"),
    ],
    TextFamily.SYNONYM: [
        PromptTemplate("synonym.photo", TextFamily.SYNONYM, "a photo of {synonym class}"),
    ],
    TextFamily.ONE_TO_ONE: [
        PromptTemplate("one_to_one.because", TextFamily.ONE_TO_ONE,
                       "Because of {1v1 text}, {class 1} is different from {class 2}"),
    ],
}

# Query prompts sent to the language-model gateway.
ANALOGOUS_PROMPT = "What other categories are {class} visually similar to?"
ATTRIBUTE_PROMPT = "What are useful visual features for distinguishing a {class} in a photo?"
ONE_TO_ONE_PROMPT = (
    "What are different visual features between a {class 1} and a {class 2} "
    "in a photo? Focus on their key differences."
)


def load_templates(path: str | Path) -> dict[TextFamily, list[PromptTemplate]]:
    """Load a template file; families absent from the file keep defaults."""
    entries = json.loads(Path(path).read_text("utf-8"))
    out: dict[TextFamily, list[PromptTemplate]] = {k: list(v) for k, v in DEFAULT_TEMPLATES.items()}
    loaded: dict[TextFamily, list[PromptTemplate]] = {}
    for entry in entries:
        tpl = PromptTemplate(
            template_id=entry["template_id"],
            family=TextFamily.from_wire(entry["family"]),
            pattern=entry["pattern"],
        )
        tpl.validate()
        loaded.setdefault(tpl.family, []).append(tpl)
    out.update(loaded)
    return out
