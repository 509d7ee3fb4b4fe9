"""Command-line entry point.

Subcommands:
    atg       generate the general text set as JSON from class names
    zeroshot  two-stage zero-shot predictions over image/text bundles
    fewshot   adapter-corrected predictions with a labeled support bundle
    eval      run a manifest and write an accuracy report
    ablate    run a manifest once per text-family subset
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .atg import (
    LlmGateway,
    TextSetSpec,
    TsvSynonymProvider,
    WordNetFileProvider,
    assemble_general_text_set,
    load_templates,
)
from .bundle import TextFamily, read_bundle, text_records_to_json
from .core import ClassPartition, build_coder, stage1_logits
from .errors import CoderError, ManifestError
from .evaluation import (
    RunManifest,
    ZS_SCALE_DEFAULT,
    ablation_sweep,
    class_name_logits,
    dumps_report,
    evaluate,
)
from .fewshot import (
    AdapterParams,
    NormMode,
    adapt_logits,
    build_support_cache,
    grid_search,
    predict,
)
from .zeroshot import DiskPairStore, RerankConfig, rerank_result

EXIT_OK = 0
EXIT_PIPELINE = 2
EXIT_MANIFEST = 3


def _write_json(path: str, payload) -> None:
    Path(path).write_bytes(dumps_report(payload) + b"\n")


def _cmd_atg(args) -> int:
    class_names = [ln.strip() for ln in Path(args.classes).read_text("utf-8").splitlines()
                   if ln.strip()]
    families = {TextFamily.CLASS_NAME}
    for name in (args.families.split(",") if args.families else
                 ["attribute", "analogous_class", "synonym"]):
        name = name.strip()
        if name:
            families.add(TextFamily.from_wire(name))
    spec = TextSetSpec(
        class_names=class_names,
        families_enabled=families,
        per_family_counts={
            TextFamily.ATTRIBUTE: args.attributes,
            TextFamily.ANALOGOUS_CLASS: args.analogous,
        },
        similarity_threshold=args.threshold,
    )
    gateway = None
    needs_gateway = families & {TextFamily.ATTRIBUTE, TextFamily.ANALOGOUS_CLASS}
    if needs_gateway:
        gateway = LlmGateway(
            model_tag=args.llm_model,
            endpoint=args.llm_endpoint,
            cache_path=args.cache,
            temperature=args.temperature,
            offline=args.offline,
        )
    synonyms = None
    if TextFamily.SYNONYM in families:
        if args.wordnet_dir:
            synonyms = WordNetFileProvider(args.wordnet_dir)
        elif args.synonyms:
            synonyms = TsvSynonymProvider(args.synonyms)
    templates = load_templates(args.templates) if args.templates else None
    records = assemble_general_text_set(spec, gateway, synonyms, templates=templates)
    Path(args.out).write_bytes(text_records_to_json(records, class_names) + b"\n")
    print(f"wrote {len(records)} records for {len(class_names)} classes to {args.out}")
    return EXIT_OK


def _cmd_zeroshot(args) -> int:
    images = read_bundle(args.images)
    texts = read_bundle(args.texts)
    partition = ClassPartition.from_records(texts.records, len(texts.class_names))
    coder = build_coder(images.features, texts.features)
    logits = stage1_logits(coder, partition)
    cfg = RerankConfig(top_k=args.top_k, gate_margin=args.gate_margin,
                       enabled=not args.no_gate)
    store = DiskPairStore(args.pairs_dir, texts.class_names, texts.encoder_tag,
                          offline=args.offline)
    predictions = {}
    for i, rec in enumerate(images.records):
        result = rerank_result(logits[i], images.features.data[i], store, cfg)
        predictions[str(rec.id)] = {
            "stage1_top5": result.stage1_top,
            "final_class": result.final_class,
            "gated": result.gated,
            "gaps": result.gaps_dict(),
        }
    _write_json(args.out, predictions)
    print(f"wrote predictions for {len(predictions)} images to {args.out}")
    return EXIT_OK


def _load_grid(path: str) -> list[AdapterParams]:
    entries = json.loads(Path(path).read_text("utf-8"))
    return [AdapterParams(
        alpha=float(e.get("alpha", 1.0)),
        beta=float(e.get("beta", 5.5)),
        T=float(e.get("T", 3.0)),
        norm_mode=NormMode(e.get("norm_mode", "minmax")),
    ) for e in entries]


def _cmd_fewshot(args) -> int:
    support = read_bundle(args.support)
    images = read_bundle(args.images)
    texts = read_bundle(args.texts)
    partition = ClassPartition.from_records(texts.records, len(texts.class_names))
    cache = build_support_cache(support, texts,
                                normalize_image_features=args.normalize_image_features)
    coder = build_coder(images.features, texts.features,
                        normalize_images=args.normalize_image_features)
    if args.zs_source == "stage1":
        zs = stage1_logits(coder, partition) * ZS_SCALE_DEFAULT
    else:
        zs = class_name_logits(coder, partition, scale=ZS_SCALE_DEFAULT)

    params = AdapterParams(alpha=args.alpha, beta=args.beta, T=args.T,
                           norm_mode=NormMode(args.norm))
    if args.grid:
        labels = images.labels()
        params = grid_search(_load_grid(args.grid), coder, labels, cache, zs)
        print(f"grid selected alpha={params.alpha} beta={params.beta} "
              f"T={params.T} norm={params.norm_mode.value}")
    adapted = adapt_logits(zs, coder, cache, params)
    zs_preds = predict(zs)
    preds = predict(adapted)
    predictions = {
        str(rec.id): {"final_class": int(preds[i]), "zs_class": int(zs_preds[i])}
        for i, rec in enumerate(images.records)
    }
    _write_json(args.out, predictions)
    print(f"wrote predictions for {len(predictions)} images to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    try:
        manifest = RunManifest.from_file(args.manifest)
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    try:
        report = evaluate(manifest, workers=args.workers)
    except CoderError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    Path(args.out).write_bytes(report.to_json_bytes() + b"\n")
    print(f"accuracy {report.accuracy:.4f} ({report.counts['correct']}/{report.counts['total']})")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    try:
        manifest = RunManifest.from_file(args.manifest)
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    family_sets = [
        [f.strip() for f in subset.split(",") if f.strip()]
        for subset in args.families.split("|")
    ]
    try:
        reports = ablation_sweep(manifest, family_sets)
    except (CoderError, ValueError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    payload = [json.loads(r.to_json_bytes()) for r in reports]
    _write_json(args.out, payload)
    for r in reports:
        print(f"{'+'.join(r.config['families'])}: accuracy {r.accuracy:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coder",
        description="Neighbor-representation classification over embedding bundles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("atg", help="generate the general text set as JSON")
    p.add_argument("--classes", required=True, help="file with one class name per line")
    p.add_argument("--out", required=True)
    p.add_argument("--llm-endpoint", default=None,
                   help="OpenAI-compatible chat-completions URL")
    p.add_argument("--llm-model", default="gpt-3.5-turbo")
    p.add_argument("--cache", default=None, help="JSONL exchange cache path")
    p.add_argument("--offline", action="store_true",
                   help="never hit the network; error on cache miss")
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--families", default=None,
                   help="comma list of extra families (class_name is always on)")
    p.add_argument("--attributes", type=int, default=10)
    p.add_argument("--analogous", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.85)
    p.add_argument("--synonyms", default=None, help="TSV synonym file")
    p.add_argument("--wordnet-dir", default=None, help="WordNet database directory")
    p.add_argument("--templates", default=None, help="JSON template file")
    p.set_defaults(fn=_cmd_atg)

    p = sub.add_parser("zeroshot", help="two-stage zero-shot predictions")
    p.add_argument("--images", required=True)
    p.add_argument("--texts", required=True)
    p.add_argument("--pairs-dir", required=True)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--gate-margin", type=float, default=0.02)
    p.add_argument("--no-gate", action="store_true", help="rerank every image")
    p.add_argument("--offline", action="store_true",
                   help="error on pair-bundle misses instead of generating")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_zeroshot)

    p = sub.add_parser("fewshot", help="adapter-corrected predictions")
    p.add_argument("--support", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--texts", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=5.5)
    p.add_argument("--T", type=float, default=3.0)
    p.add_argument("--norm", choices=["minmax", "l2"], default="minmax")
    p.add_argument("--grid", default=None,
                   help="JSON grid file; tunes on the labeled --images bundle")
    p.add_argument("--zs-source", choices=["class_name", "stage1"], default="class_name")
    p.add_argument("--normalize-image-features", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_fewshot)

    p = sub.add_parser("eval", help="run a manifest and write a report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("ablate", help="family-subset sweep over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--families", required=True,
                   help="subsets separated by '|', families by ',' "
                        "(e.g. 'class_name|class_name,attribute')")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CoderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
