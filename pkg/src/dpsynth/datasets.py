"""Bundled synthetic ground-truth datasets with known population statistics.

Both datasets are drawn from explicit naive-Bayes-style joints: a binary
label with fixed base rate and categorical features that are conditionally
independent given the label. That keeps every population quantity exactly
computable: the majority baseline is max(P(y=0), P(y=1)) and the Bayes
accuracy is the sum over feature cells of the larger joint mass, so benchmark
results can be judged against closed-form anchors instead of guesses.

`desk` is the benchmark workhorse: 20k rows, five columns, Bayes accuracy
about 0.806 against a 0.65 majority baseline. `smoke` is a 400-row miniature
for fast end-to-end checks.
"""

from __future__ import annotations

import math

import numpy as np

from .data import Attribute, Dataset, Schema
from .errors import InvalidConfig

_SPECS = {
    "desk": {
        "label_rate": 0.35,
        "features": (
            ("age_band", ((0.38, 0.30, 0.20, 0.12), (0.12, 0.20, 0.30, 0.38))),
            ("region", ((0.47, 0.32, 0.21), (0.21, 0.32, 0.47))),
            ("activity", ((0.33, 0.25, 0.20, 0.15, 0.07),
                          (0.07, 0.15, 0.20, 0.25, 0.33))),
            ("device", ((0.67, 0.33), (0.33, 0.67))),
        ),
    },
    "smoke": {
        "label_rate": 0.40,
        "features": (
            ("shade", ((0.55, 0.30, 0.15), (0.15, 0.30, 0.55))),
            ("size", ((0.65, 0.35), (0.35, 0.65))),
        ),
    },
}

TRUTH_KINDS = tuple(_SPECS)


def _spec(kind: str) -> dict:
    if kind not in _SPECS:
        raise InvalidConfig(f"unknown truth dataset {kind!r}; know {TRUTH_KINDS}")
    return _SPECS[kind]


def truth_schema(kind: str) -> Schema:
    spec = _spec(kind)
    attrs = [Attribute(name, len(tables[0])) for name, tables in spec["features"]]
    attrs.append(Attribute("label", 2))
    return Schema(tuple(attrs), label_index=len(attrs) - 1)


def joint_distribution(kind: str) -> np.ndarray:
    """Exact cell probabilities, row-major over (features..., label)."""
    spec = _spec(kind)
    rate = spec["label_rate"]
    tables = [np.asarray(t, dtype=np.float64) for _, t in spec["features"]]
    cards = [t.shape[1] for t in tables] + [2]
    joint = np.zeros(cards)
    for y, mass in enumerate((1.0 - rate, rate)):
        slab = np.asarray(mass)
        for t in tables:
            slab = np.multiply.outer(slab, t[y])
        joint[..., y] = slab
    assert math.isclose(float(joint.sum()), 1.0, rel_tol=1e-12)
    return joint.reshape(-1)


def majority_baseline(kind: str) -> float:
    rate = _spec(kind)["label_rate"]
    return max(rate, 1.0 - rate)


def bayes_accuracy(kind: str) -> float:
    """Accuracy of the exact posterior argmax on the population."""
    schema = truth_schema(kind)
    cards = tuple(a.cardinality for a in schema.attributes)
    table = joint_distribution(kind).reshape(cards)
    return float(table.max(axis=-1).sum())


def make_truth(kind: str, n: int, seed: int) -> Dataset:
    """Sample n i.i.d. rows from the named population."""
    if n < 1:
        raise InvalidConfig(f"need at least one row, got {n}")
    schema = truth_schema(kind)
    cards = tuple(a.cardinality for a in schema.attributes)
    probs = joint_distribution(kind)
    rng = np.random.default_rng(seed)
    flat = rng.choice(len(probs), size=n, p=probs)
    rows = np.column_stack(np.unravel_index(flat, cards)).astype(np.int64)
    return Dataset(schema, rows)


def make_desk_truth(n: int = 20000, seed: int = 7) -> Dataset:
    return make_truth("desk", n, seed)


def make_smoke_truth(n: int = 400, seed: int = 11) -> Dataset:
    return make_truth("smoke", n, seed)
