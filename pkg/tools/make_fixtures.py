"""Generate the checked-in test fixtures under tests/data/.

Run once and commit the outputs; tests read them, never regenerate:

    python3 tools/make_fixtures.py

Produces three golden bundle files (text, image, coder kinds), the frozen
LLM exchange cache + synonym TSV for the ten-class satellite-style fixture,
and the golden evaluation report.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
DATA = REPO / "tests" / "data"

sys.path.insert(0, str(REPO / "src"))

from coder.atg import LlmGateway, TextSetSpec, TsvSynonymProvider, assemble_general_text_set
from coder.bundle import (
    EmbeddingBundle,
    FeatureMatrix,
    ImageRecord,
    TextFamily,
    TextRecord,
    read_bundle,
    text_records_to_json,
    write_bundle,
)
from coder.core import build_coder, coder_bundle
from coder.evaluation import RunManifest, evaluate

FIXTURE_MODEL = "fixture-model"

SAT_CLASSES = [
    "annual crop", "forest", "herbaceous vegetation", "highway", "industrial area",
    "pasture", "permanent crop", "residential area", "river", "sea lake",
]

# five visual attributes per class
SAT_ATTRIBUTES = {
    "annual crop": ["neat parallel crop rows", "uniform green planting", "bare soil strips",
                    "rectangular field boundaries", "seasonal color variation"],
    "forest": ["dense tree canopy", "dark green texture", "irregular natural edges",
               "continuous vegetation cover", "shadowed undergrowth"],
    "herbaceous vegetation": ["low grassy cover", "patchy light green tones", "no tall canopy",
                              "soft uneven texture", "scattered shrubs"],
    "highway": ["long straight paved lanes", "painted lane markings", "vehicles on the road",
                "interchange ramps", "guard rails along edges"],
    "industrial area": ["large flat warehouse roofs", "metallic gray surfaces",
                        "loading yards with trucks", "storage tanks", "regular building grid"],
    "pasture": ["open grazed grassland", "grazing animals", "fenced plots",
                "smooth green surface", "isolated trees"],
    "permanent crop": ["orderly orchard rows", "evenly spaced trees", "terraced planting",
                       "perennial woody plants", "drip irrigation lines"],
    "residential area": ["dense small rooftops", "street grid with houses", "gardens between homes",
                         "parked cars on streets", "varied roof colors"],
    "river": ["winding water channel", "reflective water surface", "vegetated banks",
              "sediment plumes", "bridges crossing the water"],
    "sea lake": ["wide open water surface", "uniform deep blue color", "shoreline boundary",
                 "waves or ripples", "no visible vegetation"],
}

# three look-alike candidates per class; exactly one is a dataset class name
# and gets dropped by the exact-match filter, leaving two
SAT_ANALOGOUS = {
    "annual crop": ["wheat field", "vegetable garden", "permanent crop"],
    "forest": ["jungle", "tree plantation", "herbaceous vegetation"],
    "herbaceous vegetation": ["meadow steppe", "scrubland", "pasture"],
    "highway": ["railway corridor", "airport runway", "river"],
    "industrial area": ["shipping terminal", "business park", "residential area"],
    "pasture": ["golf course", "hay field", "annual crop"],
    "permanent crop": ["vineyard", "olive grove", "annual crop"],
    "residential area": ["town center", "campus housing", "industrial area"],
    "river": ["canal", "mountain stream", "sea lake"],
    "sea lake": ["ocean bay", "reservoir", "river"],
}

SAT_SYNONYMS = {
    "forest": ["woodland", "timberland"],
    "highway": ["motorway", "freeway", "expressway"],
    "industrial area": ["factory district"],
    "pasture": ["grassland", "meadow"],
    "residential area": ["housing estate", "suburb"],
    "river": ["stream", "waterway"],
    "sea lake": ["sea", "lake", "lagoon"],
}


def fixture_transport(model_tag, prompt, temperature):
    for name in SAT_CLASSES:
        if prompt == f"What are useful visual features for distinguishing a {name} in a photo?":
            return "\n".join(f"- {a}" for a in SAT_ATTRIBUTES[name])
        if prompt == f"What other categories are {name} visually similar to?":
            return "\n".join(f"{i + 1}. {c}" for i, c in enumerate(SAT_ANALOGOUS[name]))
    raise AssertionError(f"unexpected prompt: {prompt!r}")


def make_sat_fixture():
    classes_file = DATA / "sat_classes.txt"
    classes_file.write_text("\n".join(SAT_CLASSES) + "\n", "utf-8")

    tsv = DATA / "sat_synonyms.tsv"
    tsv.write_text("".join(f"{k}\t{', '.join(v)}\n" for k, v in SAT_SYNONYMS.items()), "utf-8")

    cache_path = DATA / "sat_llm_cache.jsonl"
    if cache_path.exists():
        cache_path.unlink()
    gateway = LlmGateway(model_tag=FIXTURE_MODEL, transport=fixture_transport,
                         cache_path=cache_path)
    spec = TextSetSpec(class_names=SAT_CLASSES,
                       per_family_counts={TextFamily.ATTRIBUTE: 5,
                                          TextFamily.ANALOGOUS_CLASS: 5})
    records = assemble_general_text_set(spec, gateway, TsvSynonymProvider(tsv))
    counts = {}
    for r in records:
        counts[r.family.wire] = counts.get(r.family.wire, 0) + 1
    print(f"sat fixture: {len(records)} records {counts}")
    assert len(records) == 95, f"expected 95 records, got {len(records)}"

    # offline replay must reproduce the same set byte for byte
    offline = LlmGateway(model_tag=FIXTURE_MODEL, offline=True, cache_path=cache_path)
    replay = assemble_general_text_set(spec, offline, TsvSynonymProvider(tsv))
    assert text_records_to_json(replay, SAT_CLASSES) == text_records_to_json(records, SAT_CLASSES)
    (DATA / "sat_text_set.json").write_bytes(text_records_to_json(records, SAT_CLASSES) + b"\n")


def unit_rows(rng, n, dim):
    x = rng.standard_normal((n, dim))
    return (x / np.linalg.norm(x, axis=1, keepdims=True)).astype(np.float32)


def make_golden_bundles():
    rng = np.random.default_rng(1234)
    class_names = ["cat", "dog"]
    records = [
        TextRecord(0, "a photo of a cat", TextFamily.CLASS_NAME, 0,
                   template_id="class_name.photo"),
        TextRecord(1, "a photo of a cat, which has whiskers", TextFamily.ATTRIBUTE, 0,
                   template_id="attribute.which_has"),
        TextRecord(2, "a photo of a dog", TextFamily.CLASS_NAME, 1,
                   template_id="class_name.photo"),
        TextRecord(3, "a photo of hound", TextFamily.SYNONYM, 1,
                   template_id="synonym.photo"),
    ]
    texts = EmbeddingBundle(
        kind="text", features=FeatureMatrix(unit_rows(rng, 4, 8), normalized=True),
        records=records, class_names=class_names, encoder_tag="golden-encoder",
    )
    write_bundle(texts, DATA / "golden_text.codr")

    image_records = [ImageRecord(i, label_class_id=i % 2, source_path=f"golden/{i}.png")
                     for i in range(4)]
    images = EmbeddingBundle(
        kind="image", features=FeatureMatrix(unit_rows(rng, 4, 8), normalized=True),
        records=image_records, class_names=class_names, encoder_tag="golden-encoder",
    )
    write_bundle(images, DATA / "golden_image.codr")

    texts = read_bundle(DATA / "golden_text.codr")
    images = read_bundle(DATA / "golden_image.codr")
    coder = build_coder(images.features, texts.features)
    write_bundle(coder_bundle(coder, images.records, class_names, "golden-encoder"),
                 DATA / "golden_coder.codr")
    print("golden bundles written")


def make_golden_report():
    manifest = RunManifest(
        dataset_tag="golden-fixture",
        image_bundle=DATA / "golden_image.codr",
        text_bundle=DATA / "golden_text.codr",
        mode="zeroshot",
    )
    report = evaluate(manifest)
    (DATA / "golden_report.json").write_bytes(report.to_json_bytes(wall_time_override=0.0) + b"\n")
    print(f"golden report written (accuracy {report.accuracy})")


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    make_sat_fixture()
    make_golden_bundles()
    make_golden_report()
