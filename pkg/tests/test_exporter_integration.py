"""Exporter conformance: its bundles must be bit-compatible with this reader.

These tests drive the TypeScript exporter through its CLI and are skipped
when it has not been built (`cd exporter && npm install && npm run build`).
The primary suite never depends on them.
"""

import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from coder.bundle import TextFamily, TextRecord, read_bundle, text_records_to_json, write_bundle

REPO = Path(__file__).parent.parent
EXPORT_JS = REPO / "exporter" / "dist" / "export.js"

pytestmark = pytest.mark.skipif(
    not EXPORT_JS.exists() or shutil.which("node") is None,
    reason="exporter not built (cd exporter && npm install && npm run build)",
)


def run_export(*args):
    proc = subprocess.run(["node", str(EXPORT_JS), *args],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


@pytest.fixture
def texts_json(tmp_path):
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
    path = tmp_path / "texts.json"
    path.write_bytes(text_records_to_json(records, ["cat", "dog"]))
    return path


@pytest.fixture
def image_dir(tmp_path):
    rng = np.random.default_rng(11)
    dir_ = tmp_path / "imgs"
    dir_.mkdir()
    for i in range(4):
        (dir_ / f"img_{i}.png").write_bytes(rng.integers(0, 256, 200 + i * 37,
                                                         dtype=np.uint8).tobytes())
    (tmp_path / "labels.tsv").write_text(
        "".join(f"img_{i}.png\t{i % 2}\n" for i in range(4)))
    (tmp_path / "classes.txt").write_text("cat\ndog\n")
    return dir_


class TestTextExport:
    def test_read_bundle_accepts_and_round_trips(self, tmp_path, texts_json):
        out = tmp_path / "texts.codr"
        run_export("--model", "hash/64", "--texts", str(texts_json), "--out", str(out))
        bundle = read_bundle(out)
        assert bundle.kind == "text"
        assert bundle.features.rows == 4
        assert bundle.features.dim == 64
        assert bundle.features.normalized
        assert bundle.class_names == ["cat", "dog"]
        assert [r.family for r in bundle.records] == [
            TextFamily.CLASS_NAME, TextFamily.ATTRIBUTE,
            TextFamily.CLASS_NAME, TextFamily.SYNONYM]

        # python re-serialization reproduces the exporter's bytes exactly
        back = tmp_path / "roundtrip.codr"
        write_bundle(bundle, back)
        assert back.read_bytes() == out.read_bytes()

    def test_re_export_is_deterministic(self, tmp_path, texts_json):
        a, b = tmp_path / "a.codr", tmp_path / "b.codr"
        run_export("--model", "hash/64", "--texts", str(texts_json), "--out", str(a))
        run_export("--model", "hash/64", "--texts", str(texts_json), "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_two_passes_agree_in_cosine(self, tmp_path, texts_json):
        a, b = tmp_path / "a.codr", tmp_path / "b.codr"
        run_export("--model", "hash/32", "--texts", str(texts_json), "--out", str(a))
        run_export("--model", "hash/32", "--texts", str(texts_json), "--out", str(b))
        fa = read_bundle(a).features.data.astype(np.float64)
        fb = read_bundle(b).features.data.astype(np.float64)
        cos = np.sum(fa * fb, axis=1) / (
            np.linalg.norm(fa, axis=1) * np.linalg.norm(fb, axis=1))
        np.testing.assert_allclose(cos, 1.0, atol=1e-5)


class TestImageExport:
    def test_labeled_rows(self, tmp_path, image_dir):
        out = tmp_path / "imgs.codr"
        run_export("--model", "hash/64", "--images", str(image_dir),
                   "--labels", str(tmp_path / "labels.tsv"),
                   "--classes", str(tmp_path / "classes.txt"), "--out", str(out))
        bundle = read_bundle(out)
        assert bundle.kind == "image"
        assert [r.label_class_id for r in bundle.records] == [0, 1, 0, 1]
        assert bundle.class_names == ["cat", "dog"]
        back = tmp_path / "roundtrip.codr"
        write_bundle(bundle, back)
        assert back.read_bytes() == out.read_bytes()

    def test_unlabeled_image_fails(self, tmp_path, image_dir):
        (tmp_path / "labels.tsv").write_text("img_0.png\t0\n")
        proc = subprocess.run(
            ["node", str(EXPORT_JS), "--model", "hash/64", "--images", str(image_dir),
             "--labels", str(tmp_path / "labels.tsv"), "--out", str(tmp_path / "o.codr")],
            capture_output=True, text=True)
        assert proc.returncode == 1
        assert "no entry" in proc.stderr

    def test_exported_features_drive_the_pipeline(self, tmp_path, texts_json, image_dir):
        """Bundles from the exporter plug straight into the evaluator."""
        from coder.evaluation import RunManifest, evaluate
        t, i = tmp_path / "t.codr", tmp_path / "i.codr"
        run_export("--model", "hash/48", "--texts", str(texts_json), "--out", str(t))
        run_export("--model", "hash/48", "--images", str(image_dir),
                   "--labels", str(tmp_path / "labels.tsv"),
                   "--classes", str(tmp_path / "classes.txt"), "--out", str(i))
        report = evaluate(RunManifest("exporter-smoke", i, t, "zeroshot"))
        assert report.counts["total"] == 4
        assert 0.0 <= report.accuracy <= 1.0
