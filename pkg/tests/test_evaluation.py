import json

import numpy as np
import pytest

from cslsel.evaluation import compare, format_report, format_table, score
from cslsel.separation import select, threshold_baseline
from cslsel.synthgen import SynthConfig, generate


def test_counting_example():
    w = np.array([1.0, 1.0, 0.0, 0.0])
    gt = np.array([0, 1, 0, 1])
    pred = np.array([0, 0, 0, 0])
    r = score(w, pred, gt)
    assert r.hard_sampling_rate == 0.5
    assert r.accuracy_hard == 0.5
    assert r.soft_sampling_rate == 0.5


def test_perfect_case():
    gt = np.array([[0, 1], [2, 2]])
    r = score(np.ones((2, 2)), gt, gt)
    assert r.hard_sampling_rate == r.soft_sampling_rate == r.accuracy_hard == r.accuracy_soft == 1.0
    assert r.recall == {0: 1.0, 1: 1.0, 2: 1.0}
    assert r.mean_recall == 1.0


def test_empty_selection():
    gt = np.array([0, 1, 1])
    r = score(np.zeros(3), gt, gt)
    assert r.hard_sampling_rate == 0.0 and r.soft_sampling_rate == 0.0
    assert r.accuracy_hard is None and r.accuracy_soft is None
    assert json.loads(r.to_json())["accuracy_hard"] is None


def test_ignore_index_and_recall():
    gt = np.array([0, 0, 1, 255, 2])
    pred = np.array([0, 1, 1, 0, 0])
    w = np.array([1.0, 1.0, 0.5, 1.0, 1.0])
    r = score(w, pred, gt)
    assert r.n_pixels == 4 and r.n_ignored == 1
    # class 2 pred wrong; class 1 pixel not hard-selected
    assert r.recall == {0: 0.5, 1: 0.0, 2: 0.0}
    assert r.mean_recall == pytest.approx(1 / 6)
    assert r.accuracy_hard == pytest.approx(1 / 3)
    assert r.accuracy_soft == pytest.approx((1 + 0.5) / 3.5)
    assert r.per_class[0]["accuracy"] == pytest.approx(0.5)  # one right, one wrong among non-ignored predictions of 0
    assert r.per_class[1]["sampling"] == 0.0


def test_explicit_hard_mask_overrides_weights():
    gt = np.array([0, 1])
    r = score(np.array([0.9, 0.9]), gt, gt, hard_mask=np.array([True, False]))
    assert r.hard_sampling_rate == 0.5


def test_errors():
    with pytest.raises(ValueError):
        score(np.ones(3), np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        score(np.array([1.5, 0.0]), np.zeros(2), np.zeros(2))


def test_compare_identical_and_single():
    gt = np.array([[0, 1], [1, 0]])
    w = np.array([[1.0, 0.2], [1.0, 0.0]])
    t = compare([("b", w), ("a", w)], gt, gt)
    assert [m["name"] for m in t["methods"]] == ["a", "b"]
    assert len(t["deltas"]) == 1
    d = t["deltas"][0]
    assert (d["first"], d["second"]) == ("a", "b")
    assert all(d[k] == 0.0 for k in ("accuracy_hard", "hard_sampling_rate", "soft_sampling_rate", "mean_recall"))
    single = compare([("only", w)], gt, gt)
    assert len(single["methods"]) == 1 and single["deltas"] == []
    with pytest.raises(ValueError):
        compare([], gt, gt)
    with pytest.raises(ValueError):
        compare([("x", w), ("x", w)], gt, gt)
    assert "only" in format_table(single)
    assert "accuracy_hard" in format_table(t)


def test_csl_vs_threshold_on_overlap_data():
    probs, gt, _ = generate(SynthConfig(height=96, width=96, seed=5))
    pred = probs.argmax(axis=0)
    t = compare([("csl", select(probs)), ("thr", threshold_baseline(probs, 0.95))], pred, gt)
    rows = {m["name"]: m for m in t["methods"]}
    assert rows["csl"]["accuracy_hard"] >= rows["thr"]["accuracy_hard"]


def test_format_report():
    gt = np.array([0, 1])
    text = format_report(score(np.zeros(2), gt, gt))
    assert "accuracy_hard" in text and "-" in text
