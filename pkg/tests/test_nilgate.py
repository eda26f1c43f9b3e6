import json

import numpy as np
import pytest

from conlink.corpus import Corpus, make_record
from conlink.encoder import NGramEncoder
from conlink.errors import ValidationError
from conlink.index import LinkResult, build_index
from conlink.metric import DistanceKind
from conlink.nilgate import (
    NilThreshold,
    ThresholdStrategy,
    apply_gate,
    collect_distance_sets,
    fit_from_distances,
    fit_threshold,
    load_threshold,
    save_threshold,
)
from conlink.terminology import ConceptName, Terminology


class TestFitFromDistances:
    def test_min_fp_is_minimum(self):
        th = fit_from_distances(tp=[], fp=[0.9, 1.3], strategy=ThresholdStrategy.MIN_FP)
        assert th.value == 0.9
        assert th.n_fp == 2 and th.n_tp == 0

    def test_max_tp_is_maximum(self):
        th = fit_from_distances(tp=[0.2, 0.5], fp=[], strategy=ThresholdStrategy.MAX_TP)
        assert th.value == 0.5

    def test_weighted_hand_arithmetic(self):
        # n_tp=3, n_fp=1, t_min_fp=0.9, t_max_tp=0.5 -> 0.75*0.9 + 0.25*0.5
        th = fit_from_distances(
            tp=[0.2, 0.5, 0.3], fp=[0.9], strategy=ThresholdStrategy.WEIGHTED
        )
        assert th.value == 0.75 * 0.9 + 0.25 * 0.5
        assert th.t_min_fp == 0.9 and th.t_max_tp == 0.5

    def test_weighted_complement_flag(self):
        th = fit_from_distances(
            tp=[0.2, 0.5, 0.3], fp=[0.9], strategy=ThresholdStrategy.WEIGHTED,
            complement_weights=True,
        )
        assert th.value == 0.25 * 0.9 + 0.75 * 0.5

    def test_weighted_lies_between_components(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            tp = list(rng.uniform(0, 1, size=rng.integers(1, 8)))
            fp = list(rng.uniform(0, 2, size=rng.integers(1, 8)))
            th = fit_from_distances(tp, fp, ThresholdStrategy.WEIGHTED)
            lo, hi = sorted([th.t_min_fp, th.t_max_tp])
            assert lo <= th.value <= hi

    def test_min_fp_without_fp_cases(self):
        with pytest.raises(ValidationError, match="min_fp"):
            fit_from_distances(tp=[0.2], fp=[], strategy=ThresholdStrategy.MIN_FP)

    def test_max_tp_without_tp_cases(self):
        with pytest.raises(ValidationError, match="max_tp"):
            fit_from_distances(tp=[], fp=[0.9], strategy=ThresholdStrategy.MAX_TP)

    def test_weighted_needs_both(self):
        with pytest.raises(ValidationError, match="weighted"):
            fit_from_distances(tp=[], fp=[0.9], strategy=ThresholdStrategy.WEIGHTED)


def _fixture_world():
    """Hand-set 1-D encoder: single-char texts encode to chosen scalars.

    Names: y -> 1.0 (cui CA), z -> 16.0 (cui CB).
    Dev mentions: q=1.5 (nil gold, nearest dist 0.5), s=1.25 (TP 0.25),
    u=0.875 (TP 0.125), v=1.125 (TP 0.125). All values binary-exact.
    """
    enc = NGramEncoder(np.zeros((1 << 12, 1)), hash_seed=0)
    values = {"y": 1.0, "z": 16.0, "q": 1.5, "s": 1.25, "u": 0.875, "v": 1.125}
    buckets = {ch: int(enc.featurize(ch)[0]) for ch in values}
    assert len(set(buckets.values())) == len(buckets), "bucket collision; adjust seed"
    for ch, value in values.items():
        enc.table[buckets[ch]] = value

    t = Terminology([ConceptName("y", "CA"), ConceptName("z", "CB")], {})
    ix = build_index(t, enc, DistanceKind.EUCLIDEAN)
    dev = Corpus(
        "dev",
        (
            make_record("d0", "q", set()),
            make_record("d1", "s", {"CA"}),
            make_record("d2", "u", {"CA"}),
            make_record("d3", "v", {"CA"}),
        ),
    )
    return enc, ix, dev


class TestFitThresholdEndToEnd:
    def test_distance_sets_exact(self):
        enc, ix, dev = _fixture_world()
        tp, fp = collect_distance_sets(ix, enc, dev)
        assert sorted(tp) == [0.125, 0.125, 0.25]
        assert fp == [0.5]

    def test_fitted_values_exact(self):
        enc, ix, dev = _fixture_world()
        th_fp = fit_threshold(ix, enc, dev, ThresholdStrategy.MIN_FP)
        assert th_fp.value == 0.5
        th_tp = fit_threshold(ix, enc, dev, ThresholdStrategy.MAX_TP)
        assert th_tp.value == 0.25
        th_w = fit_threshold(ix, enc, dev, ThresholdStrategy.WEIGHTED)
        assert th_w.value == 0.75 * 0.5 + 0.25 * 0.25
        assert (th_w.n_tp, th_w.n_fp) == (3, 1)

    def test_fit_is_deterministic(self):
        enc, ix, dev = _fixture_world()
        a = fit_threshold(ix, enc, dev, ThresholdStrategy.WEIGHTED)
        b = fit_threshold(ix, enc, dev, ThresholdStrategy.WEIGHTED)
        assert a == b

    def test_wrong_top1_is_neither_tp_nor_fp(self):
        enc, ix, dev = _fixture_world()
        # mention "u" (0.875) is nearest to y (CA); gold CB makes it a miss
        wrong = Corpus("dev", dev.records[:1] + (make_record("d9", "u", {"CB"}),) + dev.records[1:])
        tp, fp = collect_distance_sets(ix, enc, wrong)
        assert sorted(tp) == [0.125, 0.125, 0.25]
        assert fp == [0.5]

    def test_composite_records_excluded(self):
        enc, ix, dev = _fixture_world()
        with_comp = Corpus(
            "dev", dev.records + (make_record("d8", "y + z", {"CA", "CB"}),)
        )
        assert collect_distance_sets(ix, enc, with_comp) == collect_distance_sets(ix, enc, dev)


def _res(nearest):
    return LinkResult(ranked=[("CX", nearest), ("CY", nearest + 1.0)])


class TestApplyGate:
    def test_farther_than_threshold_is_nil(self):
        th = NilThreshold(1.0, ThresholdStrategy.MIN_FP, 0, 1, 1.0, None)
        assert apply_gate(_res(1.2), th) is None

    def test_boundary_is_kept(self):
        th = NilThreshold(1.0, ThresholdStrategy.MIN_FP, 0, 1, 1.0, None)
        res = _res(1.0)
        assert apply_gate(res, th) is res

    def test_below_threshold_unchanged(self):
        th = NilThreshold(1.0, ThresholdStrategy.MIN_FP, 0, 1, 1.0, None)
        res = _res(0.3)
        out = apply_gate(res, th)
        assert out is res
        assert out.ranked == [("CX", 0.3), ("CY", 1.3)]

    def test_none_stays_none(self):
        th = NilThreshold(1.0, ThresholdStrategy.MIN_FP, 0, 1, 1.0, None)
        assert apply_gate(None, th) is None


class TestThresholdJson:
    def test_exact_wire_keys(self, tmp_path):
        th = NilThreshold(0.8, ThresholdStrategy.WEIGHTED, 3, 1, 0.9, 0.5)
        path = str(tmp_path / "th.json")
        save_threshold(th, path)
        raw = json.loads(open(path).read())
        assert raw == {
            "strategy": "weighted",
            "value": 0.8,
            "n_tp": 3,
            "n_fp": 1,
            "t_min_fp": 0.9,
            "t_max_tp": 0.5,
        }

    def test_roundtrip(self, tmp_path):
        th = NilThreshold(0.4375, ThresholdStrategy.MAX_TP, 5, 0, None, 0.4375)
        path = str(tmp_path / "th.json")
        save_threshold(th, path)
        assert load_threshold(path) == th
