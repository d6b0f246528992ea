"""Metrics, splitting, and benchmark-runner behavior."""

import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsynth.accounting import PrivacyBudget
from dpsynth.data import Attribute, Dataset, Schema
from dpsynth.ensembles import SynthesisPlan
from dpsynth.errors import EmptyDataset, InvalidConfig
from dpsynth.evaluation import (BenchmarkConfig, CSV_COLUMNS, EvalReport,
                                accuracy, benchmark_csv_text, ece,
                                ece_from_bins, evaluate, majority_rate,
                                plan_cell, read_benchmark_csv,
                                reliability_table, run_benchmark,
                                train_test_split, write_benchmark_outputs)
from dpsynth.mechanisms import MechanismConfig
from dpsynth.models import ModelConfig


class FixedModel:
    """Inference stub emitting a fixed positive-class probability per row."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=np.float64)

    def confidence(self, d):
        assert len(self.probs) == d.n
        return self.probs.copy()


def labeled(labels):
    schema = Schema((Attribute("y", 2),), label_index=0)
    rows = np.asarray(labels, dtype=np.int64).reshape(-1, 1)
    return Dataset(schema, rows)


def two_col(labels, xs):
    schema = Schema((Attribute("x", 4), Attribute("y", 2)), label_index=1)
    rows = np.column_stack([np.asarray(xs, dtype=np.int64),
                            np.asarray(labels, dtype=np.int64)])
    return Dataset(schema, rows)


def straight_ece(probs, labels, bins):
    """Independent scalar: explicit right-closed interval scan, pure python."""
    pairs = []
    for c, y in zip(probs, labels):
        pred = 1 if c >= 0.5 else 0
        conf = c if pred == 1 else 1.0 - c
        pairs.append((conf, 1.0 if pred == y else 0.0))
    total = 0.0
    n = len(pairs)
    for b in range(bins):
        lo, hi = b / bins, (b + 1) / bins
        members = [pc for pc in pairs
                   if (pc[0] > lo or (b == 0 and pc[0] == 0.0)) and pc[0] <= hi]
        if not members:
            continue
        acc = sum(m[1] for m in members) / len(members)
        conf = sum(m[0] for m in members) / len(members)
        total += (len(members) / n) * abs(acc - conf)
    return total


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

def test_accuracy_perfect_oracle():
    d = labeled([0, 1, 0, 1, 1])
    model = FixedModel([0.1, 0.9, 0.2, 0.8, 0.7])
    assert accuracy(model, d) == 1.0


def test_accuracy_constant_positive_matches_base_rate():
    d = labeled([1] * 3 + [0] * 7)
    model = FixedModel([0.99] * 10)
    assert accuracy(model, d) == pytest.approx(0.3)


def test_accuracy_three_of_five():
    d = labeled([1, 1, 1, 0, 0])
    model = FixedModel([0.9, 0.9, 0.1, 0.1, 0.9])
    assert accuracy(model, d) == pytest.approx(0.6)


def test_accuracy_empty_rejected():
    schema = Schema((Attribute("y", 2),), label_index=0)
    empty = Dataset(schema, np.zeros((0, 1), dtype=np.int64))
    with pytest.raises(EmptyDataset):
        accuracy(FixedModel([]), empty)
    with pytest.raises(EmptyDataset):
        ece(FixedModel([]), empty)
    with pytest.raises(EmptyDataset):
        majority_rate(empty)


def test_majority_rate():
    assert majority_rate(labeled([1, 1, 1, 0])) == pytest.approx(0.75)
    assert majority_rate(labeled([0, 0, 0, 1])) == pytest.approx(0.75)


# ---------------------------------------------------------------------------
# ece
# ---------------------------------------------------------------------------

def test_ece_hand_case_single_bin():
    d = labeled([1] * 6 + [0] * 4)
    model = FixedModel([0.75] * 10)
    value, table = ece(model, d, bins=10)
    assert value == abs(0.75 - 0.6)
    assert value == pytest.approx(0.15)
    occupied = [row for row in table if row["count"]]
    assert len(occupied) == 1
    assert occupied[0]["lower"] == 0.7 and occupied[0]["upper"] == 0.8
    assert occupied[0]["count"] == 10
    assert occupied[0]["accuracy"] == pytest.approx(0.6)
    assert occupied[0]["confidence"] == pytest.approx(0.75)


def test_ece_oracle_confidence_one_is_zero():
    d = labeled([0, 1, 0, 1])
    model = FixedModel([0.0, 1.0, 0.0, 1.0])
    value, _ = ece(model, d, bins=10)
    assert value == 0.0


def test_ece_coin_flip_on_balanced_data_is_calibrated():
    d = labeled([0, 1] * 50)
    model = FixedModel([0.5] * 100)
    value, _ = ece(model, d, bins=10)
    assert value == pytest.approx(0.0)


def test_ece_bit_exact_recompute_from_table():
    rng = np.random.default_rng(7)
    for _ in range(25):
        n = int(rng.integers(1, 60))
        probs = rng.uniform(0, 1, size=n)
        labels = rng.integers(0, 2, size=n)
        value, table = ece(FixedModel(probs), labeled(labels), bins=10)
        assert ece_from_bins(table, n) == value
        assert sum(row["count"] for row in table) == n


def test_ece_matches_straight_formula_on_100_random_instances():
    rng = np.random.default_rng(12345)
    for _ in range(100):
        n = int(rng.integers(1, 80))
        bins = int(rng.integers(2, 20))
        probs = rng.uniform(0, 1, size=n)
        labels = rng.integers(0, 2, size=n)
        value, _ = ece(FixedModel(probs), labeled(labels), bins=bins)
        oracle = straight_ece(probs.tolist(), labels.tolist(), bins)
        assert value == pytest.approx(oracle, abs=1e-12)


def test_ece_bins_are_right_closed():
    # conf exactly 0.8 must land in (0.7, 0.8], not (0.8, 0.9]
    d = labeled([1, 1])
    value, table = ece(FixedModel([0.8, 0.8]), d, bins=10)
    assert table[7]["count"] == 2
    assert table[8]["count"] == 0
    assert value == pytest.approx(0.2)


def test_ece_requires_two_bins():
    with pytest.raises(InvalidConfig):
        ece(FixedModel([0.5]), labeled([1]), bins=1)


@given(st.lists(st.tuples(st.floats(0.0, 1.0), st.integers(0, 1)),
                min_size=1, max_size=200),
       st.integers(2, 30))
@settings(max_examples=150, deadline=None)
def test_ece_bounds_and_recompute_property(pairs, bins):
    probs = [p for p, _ in pairs]
    labels = [y for _, y in pairs]
    value, table = ece(FixedModel(probs), labeled(labels), bins=bins)
    assert 0.0 <= value <= 1.0
    assert ece_from_bins(table, len(pairs)) == value
    assert sum(row["count"] for row in table) == len(pairs)


def test_eval_report_round_trip():
    d = labeled([1, 0, 1, 1])
    report = evaluate(FixedModel([0.9, 0.2, 0.8, 0.6]), d, bins=10, seed=5,
                      plan_digest="abc123", ledger_total={"epsilon": 3.0,
                                                          "delta": 3e-6})
    clone = EvalReport.from_dict(json.loads(json.dumps(report.to_dict())))
    assert clone.accuracy == report.accuracy
    assert clone.ece == report.ece
    assert clone.bins == report.bins
    assert clone.n_test == 4
    assert clone.plan_digest == "abc123"


# ---------------------------------------------------------------------------
# train/test split
# ---------------------------------------------------------------------------

def test_split_balanced_hundred_rows():
    labels = [0] * 50 + [1] * 50
    d = two_col(labels, list(range(4)) * 25)
    train, test = train_test_split(d, 0.5, np.random.default_rng(0))
    assert train.n == 50 and test.n == 50
    for side in (train, test):
        pos = int(side.labels().sum())
        assert abs(pos - 25) <= 1


def test_split_small_fraction():
    d = labeled([0, 1] * 5)
    train, test = train_test_split(d, 0.2, np.random.default_rng(1))
    assert test.n == 2
    assert train.n == 8


def test_split_same_seed_identical():
    d = two_col([0, 1] * 30, list(range(4)) * 15)
    a_train, a_test = train_test_split(d, 0.25, np.random.default_rng(9))
    b_train, b_test = train_test_split(d, 0.25, np.random.default_rng(9))
    assert np.array_equal(a_train.rows, b_train.rows)
    assert np.array_equal(a_test.rows, b_test.rows)


def test_split_different_seed_differs():
    d = two_col([0, 1] * 30, list(range(4)) * 15)
    _, a_test = train_test_split(d, 0.25, np.random.default_rng(9))
    _, b_test = train_test_split(d, 0.25, np.random.default_rng(10))
    assert not np.array_equal(a_test.rows, b_test.rows)


def test_split_partitions_rows_exactly():
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 2, size=37)
    xs = rng.integers(0, 4, size=37)
    d = two_col(labels, xs)
    train, test = train_test_split(d, 0.3, np.random.default_rng(4))
    combined = np.concatenate([train.rows, test.rows])
    assert sorted(map(tuple, combined)) == sorted(map(tuple, d.rows))


def test_split_rejects_bad_fraction():
    d = labeled([0, 1] * 5)
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(InvalidConfig):
            train_test_split(d, bad, np.random.default_rng(0))


def test_split_rejects_empty_side():
    d = labeled([0, 1])
    with pytest.raises(InvalidConfig):
        train_test_split(d, 0.01, np.random.default_rng(0))


def test_split_rejects_empty_dataset():
    schema = Schema((Attribute("y", 2),), label_index=0)
    empty = Dataset(schema, np.zeros((0, 1), dtype=np.int64))
    with pytest.raises(EmptyDataset):
        train_test_split(empty, 0.2, np.random.default_rng(0))


@given(st.integers(10, 120), st.floats(0.1, 0.9), st.integers(0, 2 ** 31))
@settings(max_examples=60, deadline=None)
def test_split_stratification_property(n, fraction, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    d = labeled(labels)
    target = int(round(fraction * n))
    if target < 1 or target > n - 1:
        return
    train, test = train_test_split(d, fraction, np.random.default_rng(seed))
    assert train.n + test.n == n
    assert test.n == target
    for c in (0, 1):
        share = fraction * int((labels == c).sum())
        got = int((test.labels() == c).sum())
        assert abs(got - share) <= 1.0


# ---------------------------------------------------------------------------
# benchmark runner
# ---------------------------------------------------------------------------

def bench_schema():
    return Schema((Attribute("x0", 2), Attribute("x1", 2), Attribute("y", 2)),
                  label_index=2)


def bench_dataset(n=400, seed=0):
    rng = np.random.default_rng(seed)
    x0 = rng.integers(0, 2, size=n)
    x1 = rng.integers(0, 2, size=n)
    noise = rng.random(n) < 0.15
    y = np.where(noise, 1 - x0, x0)
    return Dataset(bench_schema(), np.column_stack([x0, x1, y]).astype(np.int64))


def make_bench_plan(strategy="without-ensemble", k=1, p=None):
    return SynthesisPlan(
        strategy=strategy,
        total_budget=PrivacyBudget(3.0, 3e-6),
        mechanism=MechanismConfig(kind="independent-marginals", output_rows=300),
        model=ModelConfig("random-forest", {"trees": 5, "max_depth": 3}),
        k=k, p=p)


def test_benchmark_single_plan_single_repeat_one_row():
    cfg = BenchmarkConfig(plans=(make_bench_plan(),), repeats=1, seed=11)
    rows, summary = run_benchmark(cfg, bench_dataset())
    assert len(rows) == 1
    row = rows[0]
    assert row["status"] == "ok"
    assert row["strategy"] == "without-ensemble"
    assert row["mechanism"] == "independent-marginals"
    assert row["model"] == "random-forest"
    assert 0.0 <= row["accuracy"] <= 1.0
    assert 0.0 <= row["ece"] <= 1.0
    assert row["ledger_eps"] == pytest.approx(3.0, abs=1e-9)
    assert row["ledger_delta"] == pytest.approx(3e-6, abs=1e-15)
    assert summary["n_test"] == 80
    assert summary["n_train"] == 320


def test_benchmark_row_count_is_plans_times_repeats():
    plans = (make_bench_plan(),
             make_bench_plan("simple-dp-ensemble", k=3),
             make_bench_plan("dp-ensemble-subsampling", k=3, p=0.5))
    cfg = BenchmarkConfig(plans=plans, repeats=2, seed=21)
    rows, summary = run_benchmark(cfg, bench_dataset())
    assert len(rows) == 6
    assert all(r["status"] == "ok" for r in rows)
    assert len(summary["cells"]) == 3
    for cell in summary["cells"].values():
        assert cell["rows"] == 2 and cell["ok"] == 2
        for metric in ("accuracy", "ece"):
            stats = cell[metric]
            assert set(stats) == {"median", "q1", "q3", "min", "max"}
            assert stats["min"] <= stats["q1"] <= stats["median"]
            assert stats["median"] <= stats["q3"] <= stats["max"]


def test_benchmark_audit_mode_rows_identical():
    cfg = BenchmarkConfig(plans=(make_bench_plan("simple-dp-ensemble", k=3),),
                          repeats=5, seed=33, audit_mode=True)
    rows, _ = run_benchmark(cfg, bench_dataset())
    assert len(rows) == 5
    assert all(r == rows[0] for r in rows[1:])
    assert rows[0]["wall_ms"] == 0


def test_benchmark_failures_are_tagged_rows():
    # p so small every subsample retry comes back empty
    failing = SynthesisPlan(
        strategy="dp-ensemble-subsampling",
        total_budget=PrivacyBudget(3.0, 0.0),
        mechanism=MechanismConfig(kind="independent-marginals", output_rows=50),
        model=ModelConfig("logistic", {}),
        k=2, p=1e-12)
    cfg = BenchmarkConfig(plans=(failing, make_bench_plan()), repeats=2, seed=5)
    rows, summary = run_benchmark(cfg, bench_dataset(n=60))
    assert len(rows) == 4
    failed = [r for r in rows if r["strategy"] == "dp-ensemble-subsampling"]
    assert all(r["status"] == "error:EmptySubsample" for r in failed)
    assert all(r["accuracy"] is None and r["ece"] is None for r in failed)
    ok = [r for r in rows if r["strategy"] == "without-ensemble"]
    assert all(r["status"] == "ok" for r in ok)
    cell = summary["cells"][plan_cell(failing)]
    assert cell["errors"] == 2 and cell["accuracy"] is None


def test_benchmark_deterministic_and_seed_sensitive():
    cfg = BenchmarkConfig(plans=(make_bench_plan("model-ensemble", k=3),),
                          repeats=2, seed=77)
    rows_a, summary_a = run_benchmark(cfg, bench_dataset())
    rows_b, summary_b = run_benchmark(cfg, bench_dataset())
    assert rows_a == rows_b
    assert summary_a == summary_b
    other = BenchmarkConfig(plans=cfg.plans, repeats=2, seed=78)
    rows_c, _ = run_benchmark(other, bench_dataset())
    assert rows_a != rows_c


def test_benchmark_repeats_differ_without_audit():
    cfg = BenchmarkConfig(plans=(make_bench_plan("simple-dp-ensemble", k=3),),
                          repeats=2, seed=13)
    rows, _ = run_benchmark(cfg, bench_dataset())
    assert rows[0]["seed"] != rows[1]["seed"]
    assert rows[0]["repeat"] == 0 and rows[1]["repeat"] == 1


def test_benchmark_config_validation():
    plan = make_bench_plan()
    with pytest.raises(InvalidConfig):
        BenchmarkConfig(plans=())
    with pytest.raises(InvalidConfig):
        BenchmarkConfig(plans=(plan,), repeats=0)
    with pytest.raises(InvalidConfig):
        BenchmarkConfig(plans=(plan,), ece_bins=1)
    with pytest.raises(InvalidConfig):
        BenchmarkConfig(plans=(plan,), test_fraction=1.0)
    with pytest.raises(InvalidConfig):
        BenchmarkConfig(plans=(plan,), seed=-1)


def test_benchmark_config_round_trip():
    cfg = BenchmarkConfig(plans=(make_bench_plan(), make_bench_plan("simple-dp-ensemble", k=3)),
                          repeats=4, ece_bins=12, test_fraction=0.25, seed=9,
                          dataset="data/example.json", audit_mode=True,
                          record_wall_time=True)
    clone = BenchmarkConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert clone == cfg


def test_benchmark_config_rejects_unknown_keys():
    d = BenchmarkConfig(plans=(make_bench_plan(),)).to_dict()
    d["bins"] = 7
    with pytest.raises(InvalidConfig):
        BenchmarkConfig.from_dict(d)
    with pytest.raises(InvalidConfig):
        BenchmarkConfig.from_dict({"repeats": 3})


def test_benchmark_csv_layout(tmp_path):
    cfg = BenchmarkConfig(plans=(make_bench_plan(),
                                 make_bench_plan("dp-ensemble-subsampling",
                                                 k=2, p=0.5)),
                          repeats=1, seed=2)
    rows, summary = run_benchmark(cfg, bench_dataset())
    csv_path = os.fspath(tmp_path / "bench.csv")
    json_path = os.fspath(tmp_path / "bench_summary.json")
    write_benchmark_outputs(rows, summary, csv_path, json_path)

    text = open(csv_path).read()
    header = text.splitlines()[0]
    assert header == ("strategy,mechanism,model,epsilon,delta,k,p,repeat,seed,"
                      "accuracy,ece,wall_ms,ledger_eps,ledger_delta,status")
    parsed = read_benchmark_csv(csv_path)
    assert len(parsed) == 2
    assert parsed[0]["p"] == ""
    assert parsed[1]["p"] == "0.5"
    assert parsed[0]["status"] == "ok"
    assert float(parsed[0]["accuracy"]) == rows[0]["accuracy"]
    loaded = json.loads(open(json_path).read())
    assert loaded == json.loads(json.dumps(summary))


def test_benchmark_csv_byte_identical_across_runs(tmp_path):
    cfg = BenchmarkConfig(plans=(make_bench_plan("simple-dp-ensemble", k=2),),
                          repeats=2, seed=3)
    rows_a, _ = run_benchmark(cfg, bench_dataset())
    rows_b, _ = run_benchmark(cfg, bench_dataset())
    assert benchmark_csv_text(rows_a) == benchmark_csv_text(rows_b)


def test_benchmark_wall_time_opt_in():
    cfg = BenchmarkConfig(plans=(make_bench_plan(),), repeats=1, seed=4,
                          record_wall_time=True)
    rows, _ = run_benchmark(cfg, bench_dataset())
    assert rows[0]["wall_ms"] >= 0
    assert isinstance(rows[0]["wall_ms"], int)


def test_plan_cell_labels_unique_across_grid():
    plans = [make_bench_plan(),
             make_bench_plan("simple-dp-ensemble", k=3),
             make_bench_plan("simple-dp-ensemble", k=5),
             make_bench_plan("dp-ensemble-subsampling", k=3, p=0.2)]
    labels = [plan_cell(p) for p in plans]
    assert len(set(labels)) == len(labels)
    assert "eps=3.0" in labels[0]


def test_csv_columns_constant_matches_spec_order():
    assert CSV_COLUMNS == ("strategy", "mechanism", "model", "epsilon", "delta",
                           "k", "p", "repeat", "seed", "accuracy", "ece",
                           "wall_ms", "ledger_eps", "ledger_delta", "status")
