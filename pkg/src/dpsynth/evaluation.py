"""Train-on-synthetic, test-on-real evaluation and the benchmark runner.

Metrics: plain accuracy and expected calibration error. ECE treats the
confidence of a prediction as the probability assigned to the predicted
class, max(c, 1 - c) in [0.5, 1], bins it into equal-width right-closed
intervals over [0, 1] (the last bin closed on both sides), and sums
(b_n / N) |acc(b) - conf(b)| over the non-empty bins. The scalar is always
computed from the emitted bins table, so recomputing from that table (see
`ece_from_bins`) reproduces it bit for bit.

The benchmark runner executes every plan for a number of repeats against a
train/test split that is fixed once per benchmark, and emits one CSV row per
run plus a box-plot-ready JSON summary. Failed runs become tagged rows, never
dropped rows. Outputs default to being byte-reproducible: wall-clock timings
are recorded only when the config opts in.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .ensembles import SynthesisPlan, run_plan
from .errors import DpSynthError, EmptyDataset, InvalidConfig
from .seeding import STREAM_BENCH, STREAM_SPLIT, child_rng, child_seed

CSV_COLUMNS = ("strategy", "mechanism", "model", "epsilon", "delta", "k", "p",
               "repeat", "seed", "accuracy", "ece", "wall_ms", "ledger_eps",
               "ledger_delta", "status")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def majority_rate(d: Dataset) -> float:
    """Accuracy of always predicting the most common label."""
    if d.n == 0:
        raise EmptyDataset("majority rate of an empty dataset")
    rate = float(d.labels().mean())
    return max(rate, 1.0 - rate)


def accuracy(model, test: Dataset) -> float:
    """Fraction of rows whose thresholded confidence matches the label."""
    if test.n == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    pred = (model.confidence(test) >= 0.5).astype(np.int64)
    return float((pred == test.labels()).mean())


def reliability_table(conf: np.ndarray, correct: np.ndarray, bins: int) -> list[dict]:
    """Per-bin (lower, upper, count, accuracy, confidence) rows over [0, 1].

    Bin b covers (b/B, (b+1)/B]; a value of exactly 0 joins bin 0. Empty bins
    appear with count 0 and zeroed statistics.
    """
    idx = np.ceil(conf * bins).astype(np.int64) - 1
    np.clip(idx, 0, bins - 1, out=idx)
    table = []
    for b in range(bins):
        mask = idx == b
        count = int(mask.sum())
        acc = float(correct[mask].mean()) if count else 0.0
        mean_conf = float(conf[mask].mean()) if count else 0.0
        table.append({"lower": b / bins, "upper": (b + 1) / bins,
                      "count": count, "accuracy": acc, "confidence": mean_conf})
    return table


def ece_from_bins(table: list[dict], n_test: int) -> float:
    """The calibration-error sum as recomputed from a bins table."""
    return math.fsum((row["count"] / n_test) * abs(row["accuracy"] - row["confidence"])
                     for row in table if row["count"])


def ece(model, test: Dataset, bins: int = 10) -> tuple[float, list[dict]]:
    """Expected calibration error plus its reliability table."""
    if test.n == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    if bins < 2:
        raise InvalidConfig(f"ece needs at least 2 bins, got {bins}")
    c = model.confidence(test)
    pred = c >= 0.5
    conf = np.where(pred, c, 1.0 - c)
    correct = pred.astype(np.int64) == test.labels()
    table = reliability_table(conf, correct, bins)
    value = ece_from_bins(table, test.n)
    assert 0.0 <= value <= 1.0
    return value, table


@dataclass
class EvalReport:
    """One evaluation of one (possibly ensemble) model on one test set."""

    accuracy: float
    ece: float
    bins: list[dict]
    n_test: int
    seed: int | None = None
    plan_digest: str | None = None
    ledger_total: dict | None = None

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "ece": self.ece, "bins": self.bins,
                "n_test": self.n_test, "seed": self.seed,
                "plan_digest": self.plan_digest, "ledger_total": self.ledger_total}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(accuracy=d["accuracy"], ece=d["ece"], bins=d["bins"],
                   n_test=d["n_test"], seed=d.get("seed"),
                   plan_digest=d.get("plan_digest"),
                   ledger_total=d.get("ledger_total"))


def evaluate(model, test: Dataset, bins: int = 10, seed: int | None = None,
             plan_digest: str | None = None,
             ledger_total: dict | None = None) -> EvalReport:
    value, table = ece(model, test, bins)
    assert sum(row["count"] for row in table) == test.n
    return EvalReport(accuracy=accuracy(model, test), ece=value, bins=table,
                      n_test=test.n, seed=seed, plan_digest=plan_digest,
                      ledger_total=ledger_total)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def train_test_split(real: Dataset, test_fraction: float,
                     rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Label-stratified uniform split without replacement.

    The test side gets round(fraction * n) rows total, apportioned to each
    label by largest remainder, which keeps every class within one row of its
    exact share. Row order within each side follows the input.
    """
    if real.n == 0:
        raise EmptyDataset("cannot split an empty dataset")
    if not 0.0 < test_fraction < 1.0:
        raise InvalidConfig(f"test_fraction must be in (0, 1), got {test_fraction}")
    target = int(round(test_fraction * real.n))
    if target < 1 or target > real.n - 1:
        raise InvalidConfig(
            f"test_fraction {test_fraction} leaves an empty side on {real.n} rows")

    labels = real.labels()
    classes = [0, 1]
    shares = {c: test_fraction * int((labels == c).sum()) for c in classes}
    quotas = {c: math.floor(shares[c]) for c in classes}
    leftover = target - sum(quotas.values())
    by_remainder = sorted(classes, key=lambda c: (-(shares[c] - quotas[c]), c))
    for c in by_remainder[:leftover]:
        quotas[c] += 1

    test_idx = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        picked = rng.permutation(len(members))[:quotas[c]]
        test_idx.append(members[picked])
    test_mask = np.zeros(real.n, dtype=bool)
    test_mask[np.concatenate(test_idx)] = True
    return (Dataset(real.schema, real.rows[~test_mask]),
            Dataset(real.schema, real.rows[test_mask]))


# ---------------------------------------------------------------------------
# benchmark runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkConfig:
    """A plan sweep over one dataset with shared split and repeat settings.

    Per-run seeds are derived from `seed`, the plan index, and the repeat
    index; the seed fields inside `plans` are ignored. audit_mode makes every
    repeat reuse the repeat-0 seed (and zeroes timings) so identical rows
    certify determinism. record_wall_time trades byte-reproducible output for
    real timings.
    """

    plans: tuple[SynthesisPlan, ...]
    repeats: int = 1
    ece_bins: int = 10
    test_fraction: float = 0.2
    seed: int = 0
    dataset: str | None = None
    audit_mode: bool = False
    record_wall_time: bool = False

    def __post_init__(self):
        object.__setattr__(self, "plans", tuple(self.plans))
        if not self.plans:
            raise InvalidConfig("a benchmark needs at least one plan")
        if any(not isinstance(p, SynthesisPlan) for p in self.plans):
            raise InvalidConfig("plans must be SynthesisPlan values")
        if int(self.repeats) != self.repeats or self.repeats < 1:
            raise InvalidConfig(f"repeats must be an integer >= 1, got {self.repeats}")
        object.__setattr__(self, "repeats", int(self.repeats))
        if int(self.ece_bins) != self.ece_bins or self.ece_bins < 2:
            raise InvalidConfig(f"ece_bins must be an integer >= 2, got {self.ece_bins}")
        object.__setattr__(self, "ece_bins", int(self.ece_bins))
        if not 0.0 < self.test_fraction < 1.0:
            raise InvalidConfig(
                f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidConfig(f"seed must be a non-negative integer, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))

    _KNOWN_KEYS = ("plans", "repeats", "ece_bins", "test_fraction", "seed",
                   "dataset", "audit_mode", "record_wall_time")

    def to_dict(self) -> dict:
        return {"plans": [p.to_dict() for p in self.plans],
                "repeats": self.repeats, "ece_bins": self.ece_bins,
                "test_fraction": self.test_fraction, "seed": self.seed,
                "dataset": self.dataset, "audit_mode": self.audit_mode,
                "record_wall_time": self.record_wall_time}

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkConfig":
        unknown = set(d) - set(cls._KNOWN_KEYS)
        if unknown:
            raise InvalidConfig(f"unknown benchmark config keys: {sorted(unknown)}")
        if "plans" not in d:
            raise InvalidConfig("benchmark config needs a plans list")
        plans = tuple(SynthesisPlan.from_dict(p) for p in d["plans"])
        return cls(plans=plans,
                   repeats=d.get("repeats", 1),
                   ece_bins=d.get("ece_bins", 10),
                   test_fraction=d.get("test_fraction", 0.2),
                   seed=d.get("seed", 0),
                   dataset=d.get("dataset"),
                   audit_mode=d.get("audit_mode", False),
                   record_wall_time=d.get("record_wall_time", False))


def plan_cell(plan: SynthesisPlan) -> str:
    """Grouping key for summary statistics: the plan minus its seed."""
    p = "none" if plan.p is None else str(plan.p)
    return (f"{plan.strategy}|{plan.mechanism.kind}|{plan.model.kind}"
            f"|eps={plan.total_budget.epsilon}|delta={plan.total_budget.delta}"
            f"|k={plan.k}|p={p}")


def _box_stats(values: list[float]) -> dict:
    a = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(a, [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3),
            "min": float(a.min()), "max": float(a.max())}


def run_benchmark(cfg: BenchmarkConfig, real: Dataset) -> tuple[list[dict], dict]:
    """Run plans x repeats on one dataset; returns (csv rows, summary).

    Every run gets a row. Pipeline failures (DpSynthError subclasses) are
    tagged in `status` and leave the metric fields empty; anything else is a
    bug and propagates.
    """
    split_rng = child_rng(cfg.seed, STREAM_SPLIT)
    train_real, test_real = train_test_split(real, cfg.test_fraction, split_rng)

    rows = []
    for j, plan in enumerate(cfg.plans):
        for r in range(cfg.repeats):
            rep = 0 if cfg.audit_mode else r
            run_seed = child_seed(cfg.seed, STREAM_BENCH, j, rep)
            runnable = plan.replace_seed(run_seed)
            row = {
                "strategy": plan.strategy,
                "mechanism": plan.mechanism.kind,
                "model": plan.model.kind,
                "epsilon": plan.total_budget.epsilon,
                "delta": plan.total_budget.delta,
                "k": plan.k,
                "p": plan.p,
                "repeat": rep,
                "seed": run_seed,
                "accuracy": None,
                "ece": None,
                "wall_ms": 0,
                "ledger_eps": None,
                "ledger_delta": None,
                "status": None,
            }
            started = time.perf_counter()
            try:
                ensemble, ledger, _ = run_plan(train_real, runnable)
                value, _ = ece(ensemble, test_real, cfg.ece_bins)
                spent = ledger.spent()
                row["accuracy"] = accuracy(ensemble, test_real)
                row["ece"] = value
                row["ledger_eps"] = spent.epsilon
                row["ledger_delta"] = spent.delta
                row["status"] = "ok" if ledger.certified else "uncertified"
            except DpSynthError as exc:
                row["status"] = f"error:{type(exc).__name__}"
            if cfg.record_wall_time and not cfg.audit_mode:
                row["wall_ms"] = int((time.perf_counter() - started) * 1000 + 0.5)
            rows.append(row)

    cells: dict[str, dict] = {}
    for j, plan in enumerate(cfg.plans):
        label = plan_cell(plan)
        if label in cells:
            label = f"{label}#{j}"
        plan_rows = rows[j * cfg.repeats:(j + 1) * cfg.repeats]
        ok = [x for x in plan_rows if x["status"] == "ok"]
        cells[label] = {
            "rows": len(plan_rows),
            "ok": len(ok),
            "errors": len(plan_rows) - len(ok),
            "accuracy": _box_stats([x["accuracy"] for x in ok]) if ok else None,
            "ece": _box_stats([x["ece"] for x in ok]) if ok else None,
        }
    summary = {
        "n_train": train_real.n,
        "n_test": test_real.n,
        "majority_baseline": majority_rate(test_real),
        "repeats": cfg.repeats,
        "seed": cfg.seed,
        "cells": cells,
    }
    return rows, summary


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------

def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_cell(value) -> str:
    if value is None:
        return ""
    return str(value)


def benchmark_csv_text(rows: list[dict]) -> str:
    import io

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_csv_cell(row[col]) for col in CSV_COLUMNS])
    return out.getvalue()


def write_benchmark_outputs(rows: list[dict], summary: dict, csv_path: str,
                            summary_path: str) -> None:
    """Atomically write the per-run CSV and the box-plot summary JSON."""
    atomic_write(csv_path, benchmark_csv_text(rows))
    atomic_write(summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")


def read_benchmark_csv(path: str) -> list[dict]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        return list(reader)
