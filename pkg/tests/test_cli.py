"""End-to-end CLI runs over tiny on-disk fixtures."""

import json
from pathlib import Path

import numpy as np
import pytest

from coder.bundle import (
    EmbeddingBundle,
    FeatureMatrix,
    ImageRecord,
    TextFamily,
    TextRecord,
    text_records_from_json,
    write_bundle,
)
from coder.cli import main
from coder.zeroshot import DiskPairStore

from conftest import unit_rows
from test_eval import two_class_setup
from test_zeroshot import pair_bundle

DATA = Path(__file__).parent / "data"


class TestAtgCommand:
    def test_offline_generation_from_fixture_cache(self, tmp_path, capsys):
        out = tmp_path / "texts.json"
        code = main([
            "atg",
            "--classes", str(DATA / "sat_classes.txt"),
            "--out", str(out),
            "--llm-model", "fixture-model",
            "--cache", str(DATA / "sat_llm_cache.jsonl"),
            "--offline",
            "--synonyms", str(DATA / "sat_synonyms.tsv"),
            "--attributes", "5",
        ])
        assert code == 0
        records, class_names = text_records_from_json(out.read_bytes())
        assert len(records) == 95
        assert len(class_names) == 10
        assert "wrote 95 records" in capsys.readouterr().out

    def test_offline_miss_fails(self, tmp_path):
        classes = tmp_path / "classes.txt"
        classes.write_text("pelican\n")
        code = main([
            "atg", "--classes", str(classes), "--out", str(tmp_path / "t.json"),
            "--llm-model", "fixture-model",
            "--cache", str(DATA / "sat_llm_cache.jsonl"), "--offline",
        ])
        # attribute/analogous families fail per class but class-name texts remain
        assert code == 0
        records, _ = text_records_from_json((tmp_path / "t.json").read_bytes())
        assert [r.family for r in records] == [TextFamily.CLASS_NAME]


class TestZeroshotCommand:
    def test_predictions_schema(self, tmp_path, warm_kernels):
        t, i = two_class_setup(tmp_path, [0, 1, 1])
        pairs = tmp_path / "pairs"
        store = DiskPairStore(pairs, ["cat", "dog"], "e", offline=False)
        bundle = pair_bundle(0, 1, [0.5], [0.3])
        bundle.class_names = ["cat", "dog"]
        bundle.encoder_tag = "e"
        # pair features live in dim 16 but the fixture bundles are dim 8;
        # rebuild the pair bundle in the right dimension
        rows = np.zeros((2, 8), np.float32)
        rows[0, 0], rows[0, 1] = 0.5, np.sqrt(1 - 0.25)
        rows[1, 0], rows[1, 2] = 0.3, np.sqrt(1 - 0.09)
        bundle.features = FeatureMatrix(rows, normalized=True)
        store.put_pair(bundle)

        out = tmp_path / "preds.json"
        code = main([
            "zeroshot", "--images", str(i), "--texts", str(t),
            "--pairs-dir", str(pairs), "--top-k", "2",
            "--gate-margin", "0.02", "--offline", "--out", str(out),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert set(doc.keys()) == {"0", "1", "2"}
        for entry in doc.values():
            assert set(entry) == {"stage1_top5", "final_class", "gated", "gaps"}
            assert entry["final_class"] in (0, 1)

    def test_gate_keeps_stage1_and_reports_ungated(self, tmp_path, warm_kernels):
        t, i = two_class_setup(tmp_path, [0, 1])
        out = tmp_path / "preds.json"
        code = main([
            "zeroshot", "--images", str(i), "--texts", str(t),
            "--pairs-dir", str(tmp_path / "pairs"), "--top-k", "2",
            "--gate-margin", "0.0", "--offline", "--out", str(out),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert all(entry["gated"] is False for entry in doc.values())
        assert doc["0"]["final_class"] == 0
        assert doc["1"]["final_class"] == 1

    def test_pair_miss_is_pipeline_error(self, tmp_path, warm_kernels, capsys):
        rng = np.random.default_rng(3)
        feats = unit_rows(rng, 2, 8)
        # images halfway between the two class features keep the margin tiny
        mid = feats.mean(axis=0)
        records = [TextRecord(0, "a photo of a cat", TextFamily.CLASS_NAME, 0),
                   TextRecord(1, "a photo of a dog", TextFamily.CLASS_NAME, 1)]
        texts = EmbeddingBundle(kind="text", features=FeatureMatrix(feats, normalized=True),
                                records=records, class_names=["cat", "dog"], encoder_tag="e")
        images = EmbeddingBundle(
            kind="image",
            features=FeatureMatrix((mid / np.linalg.norm(mid))[None, :], normalized=True),
            records=[ImageRecord(0, label_class_id=0)],
            class_names=["cat", "dog"], encoder_tag="e")
        t, i = tmp_path / "t.codr", tmp_path / "i.codr"
        write_bundle(texts, t)
        write_bundle(images, i)
        code = main([
            "zeroshot", "--images", str(i), "--texts", str(t),
            "--pairs-dir", str(tmp_path / "pairs"), "--top-k", "2",
            "--gate-margin", "0.5", "--offline", "--out", str(tmp_path / "p.json"),
        ])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestFewshotCommand:
    def test_grid_and_predictions(self, tmp_path, warm_kernels):
        from planted import make_planted
        data = make_planted(seed=7, n_images=60, n_val=30, shots=4)
        t, i, s = tmp_path / "t.codr", tmp_path / "i.codr", tmp_path / "s.codr"
        write_bundle(data["texts"], t)
        write_bundle(data["images"], i)
        write_bundle(data["support"], s)
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps([
            {"alpha": 0.0}, {"alpha": 16.0}, {"alpha": 64.0},
        ]))
        out = tmp_path / "preds.json"
        code = main([
            "fewshot", "--support", str(s), "--images", str(i), "--texts", str(t),
            "--grid", str(grid), "--out", str(out),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert len(doc) == 60
        assert all(set(v) == {"final_class", "zs_class"} for v in doc.values())


class TestEvalCommand:
    def test_exit_zero_and_report(self, tmp_path, warm_kernels):
        t, i = two_class_setup(tmp_path, [0, 1, 0])
        manifest = tmp_path / "run.json"
        manifest.write_text(json.dumps({
            "dataset_tag": "fixture", "image_bundle": str(i), "text_bundle": str(t),
            "mode": "zeroshot"}))
        out = tmp_path / "report.json"
        assert main(["eval", "--manifest", str(manifest), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["accuracy"] == 1.0

    def test_exit_three_on_manifest_error(self, tmp_path, capsys):
        manifest = tmp_path / "run.json"
        manifest.write_text(json.dumps({
            "dataset_tag": "fixture", "image_bundle": "/nonexistent.codr",
            "text_bundle": "/nonexistent.codr", "mode": "zeroshot"}))
        assert main(["eval", "--manifest", str(manifest),
                     "--out", str(tmp_path / "r.json")]) == 3
        assert "manifest error" in capsys.readouterr().err

    def test_exit_two_on_pipeline_error(self, tmp_path, warm_kernels, capsys):
        t, i = two_class_setup(tmp_path, [0, 1])
        pairs = tmp_path / "pairs"
        pairs.mkdir()
        manifest = tmp_path / "run.json"
        manifest.write_text(json.dumps({
            "dataset_tag": "fixture", "image_bundle": str(i), "text_bundle": str(t),
            "mode": "zeroshot_rerank",
            "config": {"pairs_dir": str(pairs), "top_k": 2, "gate_enabled": False}}))
        assert main(["eval", "--manifest", str(manifest),
                     "--out", str(tmp_path / "r.json")]) == 2
        assert "pipeline error" in capsys.readouterr().err


class TestAblateCommand:
    def test_two_subsets(self, tmp_path, warm_kernels, capsys):
        from planted import make_planted
        data = make_planted(seed=7, n_images=80, n_val=20)
        t, i = tmp_path / "t.codr", tmp_path / "i.codr"
        write_bundle(data["texts"], t)
        write_bundle(data["images"], i)
        manifest = tmp_path / "run.json"
        manifest.write_text(json.dumps({
            "dataset_tag": "planted", "image_bundle": str(i), "text_bundle": str(t),
            "mode": "zeroshot"}))
        out = tmp_path / "reports.json"
        code = main(["ablate", "--manifest", str(manifest),
                     "--families", "class_name|class_name,attribute,analogous_class",
                     "--out", str(out)])
        assert code == 0
        reports = json.loads(out.read_text())
        assert len(reports) == 2
        assert reports[0]["config"]["families"] == ["class_name"]
