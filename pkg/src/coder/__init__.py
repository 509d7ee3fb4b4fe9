"""Neighbor-representation toolkit over precomputed image/text embeddings.

Images are represented by their similarity profile against an ordered text
set; the profile drives a two-stage zero-shot classifier and a
training-free few-shot adapter. Texts come from an LLM-backed generator;
features arrive in bundle files produced by an external exporter.
"""

from .bundle import (
    EmbeddingBundle,
    FeatureMatrix,
    ImageRecord,
    TextFamily,
    TextRecord,
    normalize_rows,
    read_bundle,
    text_records_from_json,
    text_records_to_json,
    write_bundle,
)
from .core import (
    ClassPartition,
    PsiMapping,
    build_coder,
    coder_bundle,
    heuristic_logit,
    one_nn_class,
    stage1_logits,
)
from .evaluation import Report, RunManifest, ablation_sweep, class_name_logits, evaluate
from .fewshot import (
    AdapterParams,
    NormMode,
    SupportCache,
    adapt_logits,
    affinity,
    build_support_cache,
    grid_search,
)
from .zeroshot import (
    DiskPairStore,
    GapLedger,
    RerankConfig,
    RerankResult,
    one_to_one_scores,
    pair_set,
    rerank,
    rerank_result,
    top_k_classes,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterParams",
    "ClassPartition",
    "DiskPairStore",
    "EmbeddingBundle",
    "FeatureMatrix",
    "GapLedger",
    "ImageRecord",
    "NormMode",
    "PsiMapping",
    "Report",
    "RerankConfig",
    "RerankResult",
    "RunManifest",
    "SupportCache",
    "TextFamily",
    "TextRecord",
    "ablation_sweep",
    "adapt_logits",
    "affinity",
    "build_coder",
    "build_support_cache",
    "class_name_logits",
    "coder_bundle",
    "evaluate",
    "grid_search",
    "heuristic_logit",
    "normalize_rows",
    "one_nn_class",
    "one_to_one_scores",
    "pair_set",
    "read_bundle",
    "rerank",
    "rerank_result",
    "stage1_logits",
    "text_records_from_json",
    "text_records_to_json",
    "top_k_classes",
    "write_bundle",
]
