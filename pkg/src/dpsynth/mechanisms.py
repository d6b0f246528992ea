"""DP synthetic-data generators over discrete schemas.

Two mechanism families behind one `generate` interface:

* independent noisy marginals: Laplace-noised contingency tables, either one
  1-way table per attribute or (default) the label's 1-way table plus one
  feature-by-label 2-way table per feature, sampled attribute-wise. The
  label-paired variant preserves feature-label dependence, which downstream
  classifiers need; the plain variant makes every attribute independent.
* multiplicative weights with exponential-mechanism query selection over a
  workload of marginal cell queries, maintaining a distribution on the full
  joint domain.

Budget bookkeeping: a fit records its spends into the ledger it is handed
(m tables at eps/m, or 2T rounds at eps/(2T)); composition recovers the run
budget. With noise disabled (test mode only) the same spends are recorded
but the ledger is marked uncertifiable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .accounting import BudgetLedger, PrivacyBudget
from .data import (
    DEFAULT_DOMAIN_CAP,
    AttributeSubset,
    Dataset,
    Schema,
    marginal_counts,
)
from .errors import DomainTooLarge, EmptyDataset, InvalidBudget, InvalidConfig

MARGINALS = "independent-marginals"
MWEM = "mwem"


@dataclass(frozen=True)
class MechanismConfig:
    """Configuration shared by all synthesis mechanisms.

    output_rows = None means "as many rows as the input". pair_with_label
    selects the label-conditioned variant of the marginals mechanism; the
    plain variant releases only 1-way tables. workload = None gives MWEM the
    default workload (every 1-way marginal plus every label 2-way marginal).
    """

    kind: str
    rounds: int = 30
    output_rows: int | None = None
    workload: tuple[AttributeSubset, ...] | None = None
    pair_with_label: bool = True
    noise_disabled_test_mode: bool = False

    def __post_init__(self):
        if self.kind not in (MARGINALS, MWEM):
            raise InvalidConfig(f"unknown mechanism kind {self.kind!r}")
        if self.rounds < 1:
            raise InvalidConfig(f"rounds must be >= 1, got {self.rounds}")
        if self.output_rows is not None and self.output_rows < 1:
            raise InvalidConfig(f"output_rows must be >= 1, got {self.output_rows}")
        if self.workload is not None:
            if len(self.workload) == 0:
                raise InvalidConfig("workload must be non-empty when given")
            object.__setattr__(
                self, "workload",
                tuple(s if isinstance(s, AttributeSubset) else AttributeSubset(tuple(s))
                      for s in self.workload))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rounds": self.rounds,
            "output_rows": self.output_rows,
            "workload": None if self.workload is None else [list(s.indices) for s in self.workload],
            "pair_with_label": self.pair_with_label,
            "noise_disabled_test_mode": self.noise_disabled_test_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MechanismConfig":
        workload = d.get("workload")
        if workload in (None, "pairs-with-label"):
            parsed = None
        else:
            parsed = tuple(AttributeSubset(tuple(int(i) for i in s)) for s in workload)
        return cls(
            kind=d["kind"],
            rounds=int(d.get("rounds", 30)),
            output_rows=None if d.get("output_rows") is None else int(d["output_rows"]),
            workload=parsed,
            pair_with_label=bool(d.get("pair_with_label", True)),
            noise_disabled_test_mode=bool(d.get("noise_disabled_test_mode", False)),
        )


@dataclass(frozen=True)
class DomainDistribution:
    """A normalized weight vector over the full joint domain of a schema."""

    schema: Schema
    attrs: AttributeSubset
    weights: np.ndarray

    def __post_init__(self):
        if self.attrs.indices != tuple(range(len(self.schema.attributes))):
            raise InvalidConfig("distribution must cover every schema attribute")
        w = np.asarray(self.weights, dtype=np.float64)
        size = self.attrs.domain_size(self.schema)
        if w.shape != (size,):
            raise InvalidConfig(f"weights must have shape ({size},), got {w.shape}")
        if (w < -1e-12).any():
            raise InvalidConfig("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InvalidConfig(f"weights must sum to 1, got {w.sum()!r}")
        w = np.maximum(w, 0.0)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def default_workload(schema: Schema) -> tuple[AttributeSubset, ...]:
    """Every 1-way marginal, then every 2-way marginal containing the label.

    The enumeration order is fixed (attribute index order) so that query
    numbering, and therefore selection tie-breaking, is reproducible.
    """
    label = schema.label_index
    singles = [AttributeSubset((i,)) for i in range(len(schema.attributes))]
    pairs = [AttributeSubset(tuple(sorted((i, label)))) for i in schema.non_label_indices]
    return tuple(singles + pairs)


def normalize_noisy_counts(counts: np.ndarray) -> np.ndarray:
    """Clamp negatives to zero and renormalize; all-zero falls back to uniform."""
    clamped = np.maximum(np.asarray(counts, dtype=np.float64), 0.0)
    total = clamped.sum()
    if total <= 0:
        return np.full(clamped.shape, 1.0 / clamped.size)
    return clamped / total


# ---------------------------------------------------------------------------
# independent noisy marginals
# ---------------------------------------------------------------------------

def independent_marginals_fit(d: Dataset, budget: PrivacyBudget, rng: np.random.Generator,
                              ledger: BudgetLedger | None = None,
                              noise_disabled: bool = False) -> list[np.ndarray]:
    """One noisy 1-way marginal per attribute, eps/m each for m attributes.

    Per-table L1 sensitivity is 1 (one record moves one count), so the
    Laplace scale is m/eps. Returns a probability vector per attribute in
    schema order.
    """
    if d.n == 0:
        raise EmptyDataset("cannot fit marginals on an empty dataset")
    if not noise_disabled and budget.epsilon <= 0:
        raise InvalidBudget("marginals fit requires epsilon > 0")
    m = len(d.schema.attributes)
    per_table = PrivacyBudget(budget.epsilon / m, budget.delta / m)
    if noise_disabled and ledger is not None:
        ledger.mark_uncertified("noise disabled (test mode)")
    out = []
    for j, attr in enumerate(d.schema.attributes):
        counts = marginal_counts(d, (j,)).astype(np.float64)
        if not noise_disabled:
            counts = counts + rng.laplace(0.0, m / budget.epsilon, size=counts.shape)
        out.append(normalize_noisy_counts(counts))
        if ledger is not None:
            ledger.record(f"marginal:{attr.name}", per_table)
    return out


def label_paired_marginals_fit(d: Dataset, budget: PrivacyBudget, rng: np.random.Generator,
                               ledger: BudgetLedger | None = None,
                               noise_disabled: bool = False):
    """Label 1-way table plus one feature-by-label 2-way table per feature.

    m = 1 + number of features tables, eps/m each at Laplace scale m/eps.
    Returns (label probability vector, list of joint (card_j, 2) probability
    tables in feature order).
    """
    if d.n == 0:
        raise EmptyDataset("cannot fit marginals on an empty dataset")
    if not noise_disabled and budget.epsilon <= 0:
        raise InvalidBudget("marginals fit requires epsilon > 0")
    schema = d.schema
    label = schema.label_index
    features = schema.non_label_indices
    m = 1 + len(features)
    per_table = PrivacyBudget(budget.epsilon / m, budget.delta / m)
    scale = m / budget.epsilon if not noise_disabled else None
    if noise_disabled and ledger is not None:
        ledger.mark_uncertified("noise disabled (test mode)")

    label_counts = marginal_counts(d, (label,)).astype(np.float64)
    if scale is not None:
        label_counts = label_counts + rng.laplace(0.0, scale, size=2)
    label_probs = normalize_noisy_counts(label_counts)
    if ledger is not None:
        ledger.record(f"marginal:{schema.attributes[label].name}", per_table)

    tables = []
    for j in features:
        subset = AttributeSubset(tuple(sorted((j, label))))
        counts = marginal_counts(d, subset).astype(np.float64)
        if scale is not None:
            counts = counts + rng.laplace(0.0, scale, size=counts.shape)
        joint = normalize_noisy_counts(counts)
        dims = tuple(schema.attributes[i].cardinality for i in subset.indices)
        joint = joint.reshape(dims)
        if subset.indices[0] == label:
            joint = joint.T  # orient as (feature category, label)
        tables.append(joint)
        if ledger is not None:
            ledger.record(
                f"marginal:{schema.attributes[j].name},{schema.attributes[label].name}",
                per_table)
    return label_probs, tables


def _sample_categorical(probs: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    p = probs / probs.sum()
    return rng.choice(len(p), size=size, p=p)


def sample_independent_marginals(marginals: list[np.ndarray], schema: Schema, n_out: int,
                                 rng: np.random.Generator) -> Dataset:
    cols = [_sample_categorical(p, n_out, rng) for p in marginals]
    rows = np.stack(cols, axis=1) if n_out else np.zeros((0, len(marginals)), dtype=np.int64)
    return Dataset(schema, rows)


def sample_label_paired(label_probs: np.ndarray, tables, schema: Schema, n_out: int,
                        rng: np.random.Generator) -> Dataset:
    """Draw the label, then each feature from its noisy conditional given the label."""
    ys = _sample_categorical(label_probs, n_out, rng)
    cols = {schema.label_index: ys}
    for j, joint in zip(schema.non_label_indices, tables):
        col = np.zeros(n_out, dtype=np.int64)
        for y in (0, 1):
            idx = np.flatnonzero(ys == y)
            if idx.size == 0:
                continue
            cond = joint[:, y]
            total = cond.sum()
            cond = np.full(cond.shape, 1.0 / cond.size) if total <= 0 else cond / total
            col[idx] = rng.choice(len(cond), size=idx.size, p=cond)
        cols[j] = col
    rows = (np.stack([cols[i] for i in range(len(schema.attributes))], axis=1)
            if n_out else np.zeros((0, len(schema.attributes)), dtype=np.int64))
    return Dataset(schema, rows)


# ---------------------------------------------------------------------------
# multiplicative weights / exponential mechanism
# ---------------------------------------------------------------------------

def mwem_fit(d: Dataset, budget: PrivacyBudget, workload, rounds: int,
             rng: np.random.Generator, ledger: BudgetLedger | None = None,
             noise_disabled: bool = False, record_history: bool = False,
             cap: int = DEFAULT_DOMAIN_CAP):
    """Multiplicative-weights synthesis over the full joint domain.

    Each round selects the workload cell query with the largest absolute
    error (counts scaled to the true n) through the exponential mechanism at
    eps/(2T) with sensitivity 1, measures it with Laplace noise at scale
    2T/eps, and reweights w_x by exp(q(x) * (measurement - current) / (2n)).
    Returns the average of the per-round distributions; with
    record_history=True returns (distribution, list of per-round weight
    vectors) instead.

    Noise-disabled mode replaces selection by a first-index argmax and
    measurement by the exact count, and consumes no randomness.
    """
    schema = d.schema
    if d.n == 0:
        raise EmptyDataset("cannot fit on an empty dataset")
    if rounds < 1:
        raise InvalidConfig(f"rounds must be >= 1, got {rounds}")
    if not noise_disabled and budget.epsilon <= 0:
        raise InvalidBudget("mwem requires epsilon > 0")
    size = schema.joint_size()
    if size > cap:
        raise DomainTooLarge(f"joint domain has {size} cells > cap {cap}")

    subsets = tuple(s if isinstance(s, AttributeSubset) else AttributeSubset(tuple(s))
                    for s in workload)
    if not subsets:
        raise InvalidConfig("mwem needs a non-empty workload")
    for s in subsets:
        s.validate(schema)

    n = d.n
    T = rounds
    dims = schema.cardinalities
    coords = np.unravel_index(np.arange(size), dims)
    # cell_of[s][x] = which cell of subset s the joint cell x projects onto
    cell_of = [np.ravel_multi_index([coords[i] for i in s.indices],
                                    [dims[i] for i in s.indices])
               for s in subsets]
    true_counts = [marginal_counts(d, s, cap=cap).astype(np.float64) for s in subsets]
    sizes = [len(t) for t in true_counts]
    offsets = np.cumsum([0] + sizes)
    n_queries = offsets[-1]

    eps_sel = budget.epsilon / (2 * T)
    meas_scale = (2 * T) / budget.epsilon if not noise_disabled else None
    spend = PrivacyBudget(budget.epsilon / (2 * T), budget.delta / (2 * T))
    if noise_disabled and ledger is not None:
        ledger.mark_uncertified("noise disabled (test mode)")

    w = np.full(size, 1.0 / size)
    history = []
    for t in range(T):
        synth = [np.bincount(cell_of[s], weights=w, minlength=sizes[s]) * n
                 for s in range(len(subsets))]
        scores = np.concatenate([np.abs(true_counts[s] - synth[s])
                                 for s in range(len(subsets))])
        if noise_disabled:
            q = int(np.argmax(scores))
        else:
            logits = 0.5 * eps_sel * scores
            probs = np.exp(logits - logits.max())
            probs /= probs.sum()
            q = int(rng.choice(n_queries, p=probs))
        if ledger is not None:
            ledger.record(f"mwem:select round {t}", spend)

        s = int(np.searchsorted(offsets, q, side="right") - 1)
        cell = q - offsets[s]
        measurement = true_counts[s][cell]
        if meas_scale is not None:
            measurement = measurement + rng.laplace(0.0, meas_scale)
        if ledger is not None:
            ledger.record(f"mwem:measure round {t}", spend)

        current = synth[s][cell]
        indicator = (cell_of[s] == cell).astype(np.float64)
        w = w * np.exp(indicator * (measurement - current) / (2.0 * n))
        w = w / w.sum()
        assert abs(w.sum() - 1.0) <= 1e-9
        history.append(w.copy())

    avg = np.mean(history, axis=0)
    avg = avg / avg.sum()
    dist = DomainDistribution(schema=schema,
                              attrs=AttributeSubset(tuple(range(len(dims)))),
                              weights=avg)
    if record_history:
        return dist, history
    return dist


def sample_from_distribution(dist: DomainDistribution, n_out: int,
                             rng: np.random.Generator) -> Dataset:
    """n_out i.i.d. draws, decoded row-major (first attribute slowest)."""
    if n_out < 0:
        raise InvalidConfig(f"n_out must be >= 0, got {n_out}")
    dims = dist.schema.cardinalities
    if n_out == 0:
        return Dataset(dist.schema, np.zeros((0, len(dims)), dtype=np.int64))
    w = dist.weights / dist.weights.sum()
    flat = rng.choice(len(w), size=n_out, p=w)
    rows = np.stack(np.unravel_index(flat, dims), axis=1)
    return Dataset(dist.schema, rows)


# ---------------------------------------------------------------------------
# unified front end
# ---------------------------------------------------------------------------

def generate(d: Dataset, budget: PrivacyBudget, cfg: MechanismConfig,
             rng: np.random.Generator, ledger: BudgetLedger | None = None,
             cap: int = DEFAULT_DOMAIN_CAP) -> Dataset:
    """Run one synthesis mechanism end to end at exactly `budget`.

    Returns a synthetic dataset with the input's schema and cfg.output_rows
    rows (input row count when unset). Deterministic given (d, budget, cfg,
    rng state).
    """
    if d.n == 0:
        raise EmptyDataset("cannot synthesize from an empty dataset")
    noiseless = cfg.noise_disabled_test_mode
    if not noiseless and budget.epsilon <= 0:
        raise InvalidBudget("generate requires epsilon > 0 outside test mode")
    n_out = d.n if cfg.output_rows is None else cfg.output_rows

    if cfg.kind == MARGINALS:
        if cfg.pair_with_label:
            label_probs, tables = label_paired_marginals_fit(
                d, budget, rng, ledger=ledger, noise_disabled=noiseless)
            return sample_label_paired(label_probs, tables, d.schema, n_out, rng)
        marginals = independent_marginals_fit(
            d, budget, rng, ledger=ledger, noise_disabled=noiseless)
        return sample_independent_marginals(marginals, d.schema, n_out, rng)

    workload = cfg.workload if cfg.workload is not None else default_workload(d.schema)
    dist = mwem_fit(d, budget, workload, cfg.rounds, rng, ledger=ledger,
                    noise_disabled=noiseless, cap=cap)
    return sample_from_distribution(dist, n_out, rng)
