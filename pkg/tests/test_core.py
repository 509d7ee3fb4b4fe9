"""Neighbor-matrix construction and heuristic classifier against scalar oracles."""

import math

import numpy as np
import pytest

from coder.bundle import FeatureMatrix, TextFamily, TextRecord
from coder.core import (
    ClassPartition,
    PsiMapping,
    build_coder,
    heuristic_logit,
    one_nn_class,
    stage1_logits,
)
from coder.errors import DegenerateFeatureError, InvariantError

from conftest import unit_rows


def oracle_cosine(imgs, texts):
    """Plain-Python cosine matrix, one dot product at a time."""
    out = []
    for x in np.asarray(imgs, dtype=np.float64):
        nx = math.sqrt(sum(v * v for v in x))
        row = []
        for t in np.asarray(texts, dtype=np.float64):
            nt = math.sqrt(sum(v * v for v in t))
            dot = sum(a * b for a, b in zip(x, t))
            row.append(dot / (nx * nt))
        out.append(row)
    return np.array(out)


def oracle_heuristic(ori, att, ana, syn):
    pool = list(ori) + list(syn)
    parts = list(att) + list(ana) + [max(pool)]
    return sum(parts) / len(parts)


def records_for(families_per_class):
    """families_per_class: list over classes of {family: count}."""
    records = []
    for class_id, fams in enumerate(families_per_class):
        for family, count in fams.items():
            for k in range(count):
                records.append(TextRecord(
                    id=len(records), text=f"c{class_id} {family.wire} {k}",
                    family=family, class_id=class_id,
                ))
    return records


class TestBuildCoder:
    def test_identity_and_orthogonal(self):
        texts = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], np.float32)
        imgs = np.array([[1, 0, 0, 0]], np.float32)
        out = build_coder(imgs, texts)
        np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-7)

    def test_scale_invariance(self, rng):
        imgs = unit_rows(rng, 4, 16)
        texts = unit_rows(rng, 6, 16)
        a = build_coder(imgs, texts)
        b = build_coder(imgs * 7.0, texts)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_matches_scalar_oracle(self, rng):
        imgs = unit_rows(rng, 3, 8)
        texts = unit_rows(rng, 5, 8)
        out = build_coder(imgs, texts)
        np.testing.assert_allclose(out, oracle_cosine(imgs, texts), atol=1e-6)

    def test_range(self, rng):
        out = build_coder(unit_rows(rng, 20, 12), unit_rows(rng, 30, 12))
        assert np.all(out >= -1 - 1e-6)
        assert np.all(out <= 1 + 1e-6)

    def test_dim_mismatch(self, rng):
        with pytest.raises(ValueError):
            build_coder(unit_rows(rng, 2, 8), unit_rows(rng, 2, 9))

    def test_degenerate_image_row(self, rng):
        imgs = np.zeros((2, 4), np.float32)
        imgs[0, 0] = 1.0
        with pytest.raises(DegenerateFeatureError):
            build_coder(imgs, unit_rows(rng, 2, 4))

    def test_unnormalized_texts_are_normalized(self, rng):
        texts = rng.standard_normal((5, 8)).astype(np.float32) * 3
        imgs = unit_rows(rng, 3, 8)
        out = build_coder(imgs, FeatureMatrix(texts, normalized=False))
        np.testing.assert_allclose(out, oracle_cosine(imgs, texts), atol=1e-6)

    def test_raw_image_path_skips_normalization(self, rng):
        imgs = rng.standard_normal((3, 8)).astype(np.float32) * 2
        texts = unit_rows(rng, 4, 8)
        out = build_coder(imgs, texts, normalize_images=False)
        expected = imgs.astype(np.float64) @ texts.astype(np.float64).T
        np.testing.assert_allclose(out, expected, atol=1e-5)

    def test_only_identity_psi(self, rng):
        assert PsiMapping.IDENTITY.value == "identity"


class TestOneNN:
    def test_direct_max(self):
        records = records_for([{TextFamily.CLASS_NAME: 1}, {TextFamily.CLASS_NAME: 1}])
        part = ClassPartition.from_records(records, 2)
        assert one_nn_class(np.array([0.9, 0.1]), part) == 0
        assert one_nn_class(np.array([0.1, 0.9]), part) == 1

    def test_tie_breaks_to_lowest_class(self):
        records = records_for([{TextFamily.CLASS_NAME: 1},
                               {TextFamily.CLASS_NAME: 1},
                               {TextFamily.CLASS_NAME: 1}])
        part = ClassPartition.from_records(records, 3)
        assert one_nn_class(np.array([0.5, 0.2, 0.5]), part) == 0

    def test_ignores_non_class_name_entries(self):
        records = records_for([
            {TextFamily.CLASS_NAME: 1, TextFamily.ATTRIBUTE: 1},
            {TextFamily.CLASS_NAME: 1},
        ])
        part = ClassPartition.from_records(records, 2)
        # attribute column of class 0 carries the global max but is ignored
        coder = np.zeros(3)
        coder[part.att[0][0]] = 0.99
        coder[part.ori[0][0]] = 0.10
        coder[part.ori[1][0]] = 0.20
        assert one_nn_class(coder, part) == 1

    def test_no_class_name_entries(self):
        records = records_for([{TextFamily.SYNONYM: 1}])
        part = ClassPartition.from_records(records, 1)
        with pytest.raises(InvariantError):
            one_nn_class(np.array([0.5]), part)


class TestHeuristicLogit:
    def test_hand_example(self):
        got = heuristic_logit(ori=[0.2], att=[0.1, 0.2], ana=[0.4], syn=[0.3])
        assert got == pytest.approx(0.25, abs=1e-12)

    def test_single_element(self):
        assert heuristic_logit(ori=[0.7], att=[], ana=[], syn=[]) == pytest.approx(0.7)

    def test_submaximal_synonym_is_ignored(self):
        base = heuristic_logit(ori=[0.2], att=[0.1, 0.2], ana=[0.4], syn=[0.3])
        more = heuristic_logit(ori=[0.2], att=[0.1, 0.2], ana=[0.4], syn=[0.3, 0.1])
        assert more == pytest.approx(base, abs=1e-12)

    def test_both_pools_empty(self):
        with pytest.raises(InvariantError):
            heuristic_logit(ori=[], att=[0.5], ana=[], syn=[])

    def test_matches_oracle(self, rng):
        for _ in range(50):
            ori = rng.uniform(-1, 1, rng.integers(0, 3))
            syn = rng.uniform(-1, 1, rng.integers(0, 3))
            if ori.size + syn.size == 0:
                ori = rng.uniform(-1, 1, 1)
            att = rng.uniform(-1, 1, rng.integers(0, 4))
            ana = rng.uniform(-1, 1, rng.integers(0, 4))
            got = heuristic_logit(ori, att, ana, syn)
            assert got == pytest.approx(oracle_heuristic(ori, att, ana, syn), abs=1e-12)


class TestStage1:
    def test_reduces_to_similarities(self, warm_kernels):
        records = records_for([{TextFamily.CLASS_NAME: 1}, {TextFamily.CLASS_NAME: 1}])
        part = ClassPartition.from_records(records, 2)
        logits = stage1_logits(np.array([0.9, 0.1], np.float32), part)
        np.testing.assert_allclose(logits, [0.9, 0.1], atol=1e-7)

    def test_permutation_invariance(self, rng, warm_kernels):
        records = records_for([
            {TextFamily.CLASS_NAME: 1, TextFamily.ATTRIBUTE: 3, TextFamily.SYNONYM: 2},
            {TextFamily.CLASS_NAME: 2, TextFamily.ANALOGOUS_CLASS: 2},
            {TextFamily.CLASS_NAME: 1, TextFamily.ATTRIBUTE: 1},
        ])
        coder = rng.uniform(-1, 1, (4, len(records))).astype(np.float32)
        part = ClassPartition.from_records(records, 3)
        base = stage1_logits(coder, part)

        perm = rng.permutation(len(records))
        permuted_records = [records[i] for i in perm]
        permuted_part = ClassPartition.from_records(permuted_records, 3)
        permuted = stage1_logits(coder[:, perm], permuted_part)
        np.testing.assert_allclose(base, permuted, atol=1e-12)

    def test_matches_scalar_oracle(self, rng, warm_kernels):
        records = records_for([
            {TextFamily.CLASS_NAME: 2, TextFamily.ATTRIBUTE: 3},
            {TextFamily.CLASS_NAME: 1, TextFamily.SYNONYM: 2, TextFamily.ANALOGOUS_CLASS: 1},
            {TextFamily.CLASS_NAME: 1},
            {TextFamily.CLASS_NAME: 1, TextFamily.ATTRIBUTE: 2, TextFamily.SYNONYM: 1},
            {TextFamily.CLASS_NAME: 3},
        ])
        part = ClassPartition.from_records(records, 5)
        coder = rng.uniform(-1, 1, (6, len(records))).astype(np.float32)
        logits = stage1_logits(coder, part)
        for i in range(coder.shape[0]):
            for j in range(5):
                row = coder[i].astype(np.float64)
                expect = oracle_heuristic(
                    row[part.ori[j]], row[part.att[j]], row[part.ana[j]], row[part.syn[j]])
                assert logits[i, j] == pytest.approx(expect, abs=1e-6)

    def test_monotone_in_attribute_entries(self, rng, warm_kernels):
        records = records_for([
            {TextFamily.CLASS_NAME: 1, TextFamily.ATTRIBUTE: 2},
            {TextFamily.CLASS_NAME: 1, TextFamily.ATTRIBUTE: 2},
        ])
        part = ClassPartition.from_records(records, 2)
        coder = rng.uniform(-0.5, 0.5, len(records)).astype(np.float32)
        base = stage1_logits(coder, part)
        bumped = coder.copy()
        bumped[part.att[0][1]] += 0.25
        after = stage1_logits(bumped, part)
        assert after[0] > base[0]
        assert after[1] == pytest.approx(base[1], abs=1e-12)

    def test_one_nn_reduction(self, rng, warm_kernels):
        records = records_for([{TextFamily.CLASS_NAME: 1} for _ in range(10)])
        part = ClassPartition.from_records(records, 10)
        coder = rng.uniform(-1, 1, (64, 10)).astype(np.float32)
        logits = stage1_logits(coder, part)
        for i in range(coder.shape[0]):
            assert int(np.argmax(logits[i])) == one_nn_class(coder[i], part)

    def test_class_without_pool_texts(self, warm_kernels):
        records = records_for([{TextFamily.CLASS_NAME: 1}, {TextFamily.ATTRIBUTE: 1}])
        part = ClassPartition.from_records(records, 2)
        with pytest.raises(InvariantError):
            stage1_logits(np.zeros(2, np.float32), part)


class TestPartition:
    def test_excludes_one_to_one(self):
        records = [
            TextRecord(0, "a photo of a cat", TextFamily.CLASS_NAME, 0),
            TextRecord(1, "Because of x, cat is different from dog",
                       TextFamily.ONE_TO_ONE, 0, pair_class_id=1),
            TextRecord(2, "a photo of a dog", TextFamily.CLASS_NAME, 1),
        ]
        part = ClassPartition.from_records(records, 2)
        all_cols = np.concatenate([part.ori[0], part.att[0], part.ana[0], part.syn[0],
                                   part.ori[1], part.att[1], part.ana[1], part.syn[1]])
        assert 1 not in all_cols
        assert sorted(all_cols.tolist()) == [0, 2]

    def test_family_masking(self):
        records = records_for([
            {TextFamily.CLASS_NAME: 1, TextFamily.ATTRIBUTE: 2, TextFamily.SYNONYM: 1},
        ])
        part = ClassPartition.from_records(records, 1,
                                           families=[TextFamily.CLASS_NAME])
        assert part.att[0].size == 0
        assert part.syn[0].size == 0
        assert part.ori[0].size == 1

    def test_requires_class_name_family(self):
        with pytest.raises(ValueError):
            ClassPartition.from_records([], 1, families=[TextFamily.ATTRIBUTE])

    def test_slices_disjoint_and_cover(self, rng):
        records = records_for([
            {TextFamily.CLASS_NAME: 2, TextFamily.ATTRIBUTE: 1,
             TextFamily.ANALOGOUS_CLASS: 2, TextFamily.SYNONYM: 1},
            {TextFamily.CLASS_NAME: 1},
        ])
        part = ClassPartition.from_records(records, 2)
        seen = []
        for j in range(2):
            for arr in (part.ori[j], part.att[j], part.ana[j], part.syn[j]):
                seen.extend(arr.tolist())
        assert len(seen) == len(set(seen)) == len(records)
