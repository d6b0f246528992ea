"""Bundled ground-truth generators: exact anchors and sampling sanity."""

import numpy as np
import pytest

from dpsynth.datasets import (TRUTH_KINDS, bayes_accuracy, joint_distribution,
                              majority_baseline, make_desk_truth,
                              make_smoke_truth, make_truth, truth_schema)
from dpsynth.errors import InvalidConfig


def test_schemas():
    desk = truth_schema("desk")
    assert [a.cardinality for a in desk.attributes] == [4, 3, 5, 2, 2]
    assert desk.label_index == 4
    smoke = truth_schema("smoke")
    assert [a.cardinality for a in smoke.attributes] == [3, 2, 2]
    assert smoke.label_index == 2


def test_joint_sums_to_one_and_matches_brute_force():
    for kind in TRUTH_KINDS:
        probs = joint_distribution(kind)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert (probs > 0).all()
    # spot-check one desk cell by hand: a=0,b=0,c=0,d=0,y=0
    probs = joint_distribution("desk")
    assert probs[0] == pytest.approx(0.65 * 0.38 * 0.47 * 0.33 * 0.67, rel=1e-12)
    # and the matching y=1 cell
    assert probs[1] == pytest.approx(0.35 * 0.12 * 0.21 * 0.07 * 0.33, rel=1e-12)


def test_population_anchors():
    assert majority_baseline("desk") == pytest.approx(0.65)
    assert bayes_accuracy("desk") == pytest.approx(0.80592, abs=5e-4)
    assert majority_baseline("smoke") == pytest.approx(0.60)
    assert bayes_accuracy("smoke") == pytest.approx(0.745, abs=1e-3)
    # learnable margin between baseline and Bayes on both datasets
    for kind in TRUTH_KINDS:
        assert bayes_accuracy(kind) - majority_baseline(kind) > 0.1


def test_desk_sample_shape_and_determinism():
    d = make_desk_truth()
    assert d.n == 20000
    assert d.rows.shape == (20000, 5)
    again = make_desk_truth()
    assert np.array_equal(d.rows, again.rows)
    other = make_desk_truth(seed=8)
    assert not np.array_equal(d.rows, other.rows)


def test_desk_sample_tracks_population():
    d = make_desk_truth()
    rate = d.labels().mean()
    assert rate == pytest.approx(0.35, abs=0.02)
    # conditional feature frequencies near their population tables
    rows = d.rows
    y1 = rows[rows[:, 4] == 1]
    freq = np.bincount(y1[:, 0], minlength=4) / len(y1)
    assert np.allclose(freq, [0.12, 0.20, 0.30, 0.38], atol=0.03)
    y0 = rows[rows[:, 4] == 0]
    freq0 = np.bincount(y0[:, 3], minlength=2) / len(y0)
    assert np.allclose(freq0, [0.67, 0.33], atol=0.03)


def test_posterior_argmax_hits_bayes_accuracy_in_sample():
    d = make_desk_truth()
    schema = truth_schema("desk")
    cards = tuple(a.cardinality for a in schema.attributes)
    table = joint_distribution("desk").reshape(cards)
    predict = (table[..., 1] > table[..., 0]).astype(np.int64)
    feats = d.rows[:, :4]
    pred = predict[tuple(feats.T)]
    acc = float((pred == d.labels()).mean())
    assert acc == pytest.approx(bayes_accuracy("desk"), abs=0.02)


def test_smoke_sample():
    d = make_smoke_truth()
    assert d.n == 400
    assert d.rows.shape == (400, 3)
    assert np.array_equal(d.rows, make_smoke_truth().rows)
    assert d.labels().mean() == pytest.approx(0.40, abs=0.08)


def test_make_truth_validation():
    with pytest.raises(InvalidConfig):
        make_truth("nope", 10, 0)
    with pytest.raises(InvalidConfig):
        make_truth("desk", 0, 0)
