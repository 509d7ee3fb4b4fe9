"""Auto text generation: templates, gateway, parsing, synonyms, builders."""

from .gateway import LlmExchange, LlmGateway, ResponseCache, cache_key
from .generator import (
    OneToOneTextStore,
    TextSetSpec,
    assemble_general_text_set,
    build_analogous_texts,
    build_attribute_texts,
    build_class_name_texts,
    build_one_to_one_texts,
    build_synonym_texts,
    drop_exact_matches,
    filter_analogous,
    query_analogous_classes,
)
from .parsing import dedupe_casefold, parse_list_response, split_pair_response
from .synonyms import SynonymProvider, TsvSynonymProvider, WordNetFileProvider
from .templates import (
    DEFAULT_TEMPLATES,
    PromptTemplate,
    load_templates,
)

__all__ = [
    "DEFAULT_TEMPLATES",
    "LlmExchange",
    "LlmGateway",
    "OneToOneTextStore",
    "PromptTemplate",
    "ResponseCache",
    "SynonymProvider",
    "TextSetSpec",
    "TsvSynonymProvider",
    "WordNetFileProvider",
    "assemble_general_text_set",
    "build_analogous_texts",
    "build_attribute_texts",
    "build_class_name_texts",
    "build_one_to_one_texts",
    "build_synonym_texts",
    "cache_key",
    "dedupe_casefold",
    "drop_exact_matches",
    "filter_analogous",
    "load_templates",
    "parse_list_response",
    "query_analogous_classes",
    "split_pair_response",
]
