"""Schema-typed discrete tabular datasets.

A Dataset is an immutable matrix of category indices under a Schema that
fixes each attribute's cardinality and designates one binary label. CSV
ingestion goes through a staging table (categoricals coded by first
appearance, numerics kept real-valued) and a DP discretization pass that
turns numeric columns into ordinals using Laplace-noised range estimates.

Marginal (contingency) tables use a row-major cell order with the first
attribute of the subset slowest-varying; mechanisms and tests rely on that
convention bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .accounting import BudgetLedger, PrivacyBudget, _as_rate
from .errors import (
    DomainTooLarge,
    EmptyDataset,
    InvalidBudget,
    InvalidConfig,
    MissingLabel,
    ParseError,
    SchemaError,
    UnknownColumn,
)

CATEGORICAL = "categorical"
DISCRETIZED = "discretized-numeric"

#: Hard cap on joint-domain cells for marginal queries and full-domain fits.
DEFAULT_DOMAIN_CAP = 1 << 20


@dataclass(frozen=True)
class Attribute:
    """One column of a discrete schema."""

    name: str
    cardinality: int
    origin: str = CATEGORICAL
    # Original category strings (categorical) or bin edges (discretized),
    # kept so serialized datasets stay self-describing.
    categories: tuple[str, ...] | None = None
    bin_edges: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.cardinality < 2:
            raise SchemaError(f"attribute {self.name!r}: cardinality must be >= 2, got {self.cardinality}")
        if self.origin not in (CATEGORICAL, DISCRETIZED):
            raise SchemaError(f"attribute {self.name!r}: unknown origin {self.origin!r}")


@dataclass(frozen=True)
class Schema:
    attributes: tuple[Attribute, ...]
    label_index: int

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("attribute names must be unique")
        if not 0 <= self.label_index < len(self.attributes):
            raise SchemaError(f"label index {self.label_index} out of range")
        if self.attributes[self.label_index].cardinality != 2:
            raise SchemaError("label attribute must be binary")

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(a.cardinality for a in self.attributes)

    @property
    def non_label_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(len(self.attributes)) if i != self.label_index)

    def joint_size(self) -> int:
        return int(np.prod([a.cardinality for a in self.attributes], dtype=object))

    def to_dict(self) -> dict:
        attrs = []
        for a in self.attributes:
            entry = {"name": a.name, "cardinality": a.cardinality, "origin": a.origin}
            if a.categories is not None:
                entry["categories"] = list(a.categories)
            if a.bin_edges is not None:
                entry["bin_edges"] = list(a.bin_edges)
            attrs.append(entry)
        return {"attributes": attrs, "label": self.attributes[self.label_index].name}

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        attrs = tuple(
            Attribute(
                name=a["name"],
                cardinality=int(a["cardinality"]),
                origin=a.get("origin", CATEGORICAL),
                categories=tuple(a["categories"]) if a.get("categories") is not None else None,
                bin_edges=tuple(a["bin_edges"]) if a.get("bin_edges") is not None else None,
            )
            for a in d["attributes"]
        )
        names = [a.name for a in attrs]
        if d["label"] not in names:
            raise SchemaError(f"label {d['label']!r} is not among the attributes")
        return cls(attributes=attrs, label_index=names.index(d["label"]))


class Dataset:
    """Immutable rows of category indices under a schema."""

    def __init__(self, schema: Schema, rows):
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            rows = rows.reshape(0, len(schema.attributes))
        if rows.ndim != 2 or rows.shape[1] != len(schema.attributes):
            raise SchemaError(f"rows must be (n, {len(schema.attributes)}), got {rows.shape}")
        cards = np.asarray(schema.cardinalities)
        if rows.shape[0] and ((rows < 0).any() or (rows >= cards[None, :]).any()):
            raise SchemaError("row values must satisfy 0 <= v < cardinality per attribute")
        rows = rows.copy()
        rows.setflags(write=False)
        self.schema = schema
        self.rows = rows

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def labels(self) -> np.ndarray:
        return self.rows[:, self.schema.label_index]

    def features(self) -> np.ndarray:
        return self.rows[:, list(self.schema.non_label_indices)]

    def to_dict(self) -> dict:
        return {
            "format": "dpsynth-dataset-v1",
            "schema": self.schema.to_dict(),
            "rows": self.rows.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        return cls(Schema.from_dict(d["schema"]), d["rows"])


@dataclass(frozen=True)
class AttributeSubset:
    """Strictly increasing attribute indices; the domain of a marginal query."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise InvalidConfig("attribute subset must be non-empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidConfig(f"attribute indices must be strictly increasing, got {idx}")
        object.__setattr__(self, "indices", idx)

    def validate(self, schema: Schema) -> None:
        if self.indices[-1] >= len(schema.attributes):
            raise InvalidConfig(f"attribute index {self.indices[-1]} out of schema range")

    def domain_size(self, schema: Schema) -> int:
        return int(np.prod([schema.attributes[i].cardinality for i in self.indices], dtype=object))


def marginal_counts(d: Dataset, attrs, cap: int = DEFAULT_DOMAIN_CAP) -> np.ndarray:
    """Joint counts of `attrs`, row-major with the first attribute slowest.

    The returned vector sums to d.n. Raises DomainTooLarge past `cap` cells.
    """
    subset = attrs if isinstance(attrs, AttributeSubset) else AttributeSubset(tuple(attrs))
    subset.validate(d.schema)
    size = subset.domain_size(d.schema)
    if size > cap:
        raise DomainTooLarge(f"joint domain has {size} cells > cap {cap}")
    dims = [d.schema.attributes[i].cardinality for i in subset.indices]
    if d.n == 0:
        return np.zeros(size, dtype=np.int64)
    flat = np.ravel_multi_index([d.rows[:, i] for i in subset.indices], dims)
    return np.bincount(flat, minlength=size).astype(np.int64)


def poisson_subsample(d: Dataset, p, rng: np.random.Generator) -> Dataset:
    """Keep each row independently with probability p, preserving order.

    p = 1 returns the dataset unchanged without consuming randomness, so
    subsampled pipelines degenerate exactly to their unsubsampled versions.
    """
    rate = _as_rate(p)
    if rate == 1.0:
        return d
    mask = rng.random(d.n) < rate
    return Dataset(d.schema, d.rows[mask])


def resample_fraction(d: Dataset, fraction: float, rng: np.random.Generator) -> Dataset:
    """Draw ceil(fraction * n) rows uniformly without replacement.

    fraction = 1 returns the rows in their original order (the identity
    permutation), so a k=1 full-fraction resample is exactly the input.
    """
    if d.n == 0:
        raise EmptyDataset("cannot resample an empty dataset")
    if not 0 < fraction <= 1:
        raise InvalidConfig(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return d
    m = math.ceil(fraction * d.n)
    idx = rng.choice(d.n, size=m, replace=False)
    return Dataset(d.schema, d.rows[idx])


# ---------------------------------------------------------------------------
# CSV ingestion and DP discretization
# ---------------------------------------------------------------------------

KIND_CATEGORICAL = "categorical"
KIND_NUMERIC = "numeric"
KIND_LABEL = "label"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    clamp: tuple[float, float] | None = None
    bins: int = 10

    def __post_init__(self):
        if self.kind not in (KIND_CATEGORICAL, KIND_NUMERIC, KIND_LABEL):
            raise InvalidConfig(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == KIND_NUMERIC:
            if self.clamp is None:
                raise InvalidConfig(f"numeric column {self.name!r} needs a clamp range")
            lo, hi = self.clamp
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise InvalidConfig(f"column {self.name!r}: clamp must be finite with lo < hi")
            if self.bins < 2:
                raise InvalidConfig(f"column {self.name!r}: bins must be >= 2")


@dataclass(frozen=True)
class SchemaConfig:
    """Declares the kind (and clamp range) of every column to ingest."""

    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        labels = [c for c in self.columns if c.kind == KIND_LABEL]
        if len(labels) != 1:
            raise MissingLabel(f"schema config must declare exactly one label column, got {len(labels)}")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise InvalidConfig("schema config column names must be unique")

    @classmethod
    def from_dict(cls, d: dict) -> "SchemaConfig":
        cols = []
        for c in d["columns"]:
            clamp = tuple(float(x) for x in c["clamp"]) if c.get("clamp") is not None else None
            cols.append(ColumnSpec(name=c["name"], kind=c["kind"], clamp=clamp, bins=int(c.get("bins", 10))))
        return cls(columns=tuple(cols))

    @classmethod
    def from_json(cls, text: str) -> "SchemaConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class StagingColumn:
    spec: ColumnSpec
    codes: np.ndarray | None = None          # categorical / label index codes
    categories: list[str] = field(default_factory=list)
    values: np.ndarray | None = None         # numeric column, still real-valued


@dataclass
class StagingTable:
    """CSV contents with categoricals coded but numerics not yet discretized."""

    columns: list[StagingColumn]
    n_rows: int

    @property
    def n_categorical(self) -> int:
        return sum(1 for c in self.columns if c.spec.kind in (KIND_CATEGORICAL, KIND_LABEL))

    @property
    def n_numeric(self) -> int:
        return sum(1 for c in self.columns if c.spec.kind == KIND_NUMERIC)


def load_csv(source, config: SchemaConfig) -> StagingTable:
    """Read a headered CSV into a staging table.

    Categorical values are coded by first appearance (deterministic for a
    given file); numeric columns stay real-valued pending discretization.
    Malformed rows raise ParseError with their 1-based data-row number.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8", newline="") as f:
            return load_csv(f, config)

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("CSV has no header row")
    header = [h.strip() for h in header]
    positions = {}
    for spec in config.columns:
        if spec.name not in header:
            raise UnknownColumn(f"column {spec.name!r} not found in CSV header {header}")
        positions[spec.name] = header.index(spec.name)

    n_cols = len(header)
    raw_by_col: list[list] = [[] for _ in config.columns]
    cat_maps: list[dict] = [{} for _ in config.columns]
    categories: list[list[str]] = [[] for _ in config.columns]

    row_no = 0
    for record in reader:
        row_no += 1
        if len(record) != n_cols:
            raise ParseError(
                f"row {row_no}: expected {n_cols} fields, got {len(record)}", row=row_no)
        for j, spec in enumerate(config.columns):
            token = record[positions[spec.name]].strip()
            if spec.kind == KIND_NUMERIC:
                try:
                    raw_by_col[j].append(float(token))
                except ValueError:
                    raise ParseError(
                        f"row {row_no}, column {spec.name!r}: non-numeric token {token!r}",
                        row=row_no, column=spec.name) from None
            else:
                code = cat_maps[j].get(token)
                if code is None:
                    code = len(cat_maps[j])
                    cat_maps[j][token] = code
                    categories[j].append(token)
                raw_by_col[j].append(code)

    cols = []
    for j, spec in enumerate(config.columns):
        if spec.kind == KIND_NUMERIC:
            cols.append(StagingColumn(spec=spec, values=np.asarray(raw_by_col[j], dtype=np.float64)))
        else:
            cols.append(StagingColumn(
                spec=spec,
                codes=np.asarray(raw_by_col[j], dtype=np.int64),
                categories=categories[j]))
    return StagingTable(columns=cols, n_rows=row_no)


def dp_discretize(column: np.ndarray, bins: int, eps: PrivacyBudget, rng: np.random.Generator,
                  clamp: tuple[float, float], noise_disabled: bool = False):
    """Equal-width binning over a Laplace-noised [min, max] estimate.

    The column is clamped into the declared `clamp` range, whose width is the
    sensitivity of both extremes; min and max each get Laplace noise at scale
    width / (eps/2). Values are clamped into the noisy range and assigned
    floor(bins * (x - lo) / (hi - lo)), capped at bins - 1.

    When the noisy range collapses (min >= max) the range is rebuilt as one
    clamp-width starting at the collapsed point, which sends a constant
    column to ordinal 0.

    Returns (ordinal vector, bin edges).
    """
    if bins < 2:
        raise InvalidConfig(f"bins must be >= 2, got {bins}")
    if column.size == 0:
        raise EmptyDataset("cannot discretize an empty column")
    if not noise_disabled and eps.epsilon <= 0:
        raise InvalidBudget("discretization requires epsilon > 0")

    lo_clamp, hi_clamp = clamp
    width = hi_clamp - lo_clamp
    clamped = np.clip(column, lo_clamp, hi_clamp)
    true_min = float(clamped.min())
    true_max = float(clamped.max())
    if noise_disabled:
        noisy_min, noisy_max = true_min, true_max
    else:
        scale = width / (eps.epsilon / 2.0)
        noisy_min = true_min + rng.laplace(0.0, scale)
        noisy_max = true_max + rng.laplace(0.0, scale)

    if noisy_min >= noisy_max:
        # Degenerate range: restart at the collapsed midpoint with one full
        # clamp width above it, so a constant column lands in bin 0.
        mid = 0.5 * (noisy_min + noisy_max)
        noisy_min, noisy_max = mid, mid + width

    edges = np.linspace(noisy_min, noisy_max, bins + 1)
    x = np.clip(clamped, noisy_min, noisy_max)
    ordinals = np.floor(bins * (x - noisy_min) / (noisy_max - noisy_min)).astype(np.int64)
    ordinals = np.clip(ordinals, 0, bins - 1)
    return ordinals, edges


def discretize_staging(staging: StagingTable, eps_total: float, rng: np.random.Generator,
                       noise_disabled: bool = False) -> tuple[Dataset, BudgetLedger]:
    """Finalize a staging table into a discrete Dataset.

    The total discretization budget is split equally across numeric columns;
    each column's spend is a separate ledger line. Categorical columns carry
    their observed category sets (cardinality >= 2 enforced here).
    """
    if staging.n_rows == 0:
        raise EmptyDataset("staging table has no rows")
    ledger = BudgetLedger(declared_total=PrivacyBudget(eps_total, 0.0))
    if noise_disabled:
        ledger.mark_uncertified("noise disabled (test mode)")
    n_num = staging.n_numeric
    attrs = []
    cols = []
    label_name = None
    for col in staging.columns:
        spec = col.spec
        if spec.kind == KIND_NUMERIC:
            per_col = PrivacyBudget(eps_total / n_num, 0.0)
            ordinals, edges = dp_discretize(
                col.values, spec.bins, per_col, rng, spec.clamp, noise_disabled=noise_disabled)
            ledger.record(f"discretize:{spec.name}", per_col)
            attrs.append(Attribute(name=spec.name, cardinality=spec.bins, origin=DISCRETIZED,
                                   bin_edges=tuple(float(e) for e in edges)))
            cols.append(ordinals)
        else:
            card = len(col.categories)
            if card < 2:
                raise SchemaError(
                    f"column {spec.name!r} has {card} observed value(s); need >= 2")
            if spec.kind == KIND_LABEL:
                if card != 2:
                    raise SchemaError(f"label column {spec.name!r} must be binary, saw {card} values")
                label_name = spec.name
            attrs.append(Attribute(name=spec.name, cardinality=card, origin=CATEGORICAL,
                                   categories=tuple(col.categories)))
            cols.append(col.codes)
    schema = Schema(attributes=tuple(attrs), label_index=[a.name for a in attrs].index(label_name))
    rows = np.stack(cols, axis=1) if cols and staging.n_rows else np.zeros((0, len(attrs)), dtype=np.int64)
    return Dataset(schema, rows), ledger


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------

def dataset_to_json(d: Dataset, ledger: BudgetLedger | None = None) -> str:
    doc = d.to_dict()
    if ledger is not None:
        doc["ledger"] = ledger.to_dict()
    return json.dumps(doc)


def dataset_from_json(text: str) -> Dataset:
    return Dataset.from_dict(json.loads(text))


def dataset_and_ledger_from_json(text: str) -> tuple[Dataset, "BudgetLedger | None"]:
    """Like dataset_from_json but also recovers an embedded spend ledger."""
    doc = json.loads(text)
    ledger = BudgetLedger.from_dict(doc["ledger"]) if "ledger" in doc else None
    return Dataset.from_dict(doc), ledger
