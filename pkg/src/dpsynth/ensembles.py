"""The four synthesis-and-training pipelines, with certified budget ledgers.

A SynthesisPlan names a strategy and fully determines one pipeline run:

* without-ensemble: one mechanism run at the whole budget, one model;
* model-ensemble: one mechanism run at the whole budget, k models each
  trained on a fresh without-replacement resample of the synthetic rows;
* simple-dp-ensemble: k mechanism runs at (eps/k, delta/k), one model each;
* dp-ensemble-subsampling: k Poisson subsamples of the real rows, each
  synthesized at the inverse-amplified per-run budget, one model each.

Only mechanism runs spend privacy. Model training and aggregation are
post-processing and charge nothing, so every plan's ledger composes to the
declared total. For the subsampling strategy the ledger records each run's
effective spend on the real data, exactly (eps/k, delta/k); the larger
local budget the mechanism enjoys on its subsample is visible through
`per_run_budget`.

All randomness forks from plan.seed by fixed stream and run index, so runs
are bit-reproducible and degenerate plans (k=1, p=1, resample_fraction=1)
produce byte-identical artifacts across strategies.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .accounting import BudgetLedger, PrivacyBudget, SamplingRate, per_run_budget
from .data import Dataset, poisson_subsample, resample_fraction
from .errors import EmptyDataset, EmptySubsample, InvalidBudget, InvalidConfig
from .mechanisms import MechanismConfig, generate
from .models import ModelConfig, model_from_dict, train_model
from .seeding import (
    STREAM_MECHANISM,
    STREAM_MODEL,
    STREAM_RESAMPLE,
    STREAM_SUBSAMPLE,
    child_rng,
)

WITHOUT_ENSEMBLE = "without-ensemble"
MODEL_ENSEMBLE = "model-ensemble"
SIMPLE_DP_ENSEMBLE = "simple-dp-ensemble"
DP_ENSEMBLE_SUBSAMPLING = "dp-ensemble-subsampling"

STRATEGIES = (WITHOUT_ENSEMBLE, MODEL_ENSEMBLE, SIMPLE_DP_ENSEMBLE,
              DP_ENSEMBLE_SUBSAMPLING)

MAX_SUBSAMPLE_RETRIES = 3


@dataclass(frozen=True)
class SynthesisPlan:
    """One fully specified pipeline run.

    k is forced to 1 under without-ensemble, p is kept only by
    dp-ensemble-subsampling, and resample_fraction is kept only by
    model-ensemble (elsewhere it becomes 1.0: those strategies train on all
    synthetic rows). The coercions are silent so one config grid can sweep
    every strategy. p=1 is legal for the subsampling strategy and
    degenerates to simple-dp-ensemble semantics.
    """

    strategy: str
    total_budget: PrivacyBudget
    mechanism: MechanismConfig
    model: ModelConfig
    k: int = 1
    p: float | None = None
    resample_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidConfig(f"unknown strategy {self.strategy!r}")
        if not isinstance(self.total_budget, PrivacyBudget):
            raise InvalidConfig("total_budget must be a PrivacyBudget")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidConfig(f"k must be an integer >= 1, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        if self.strategy == WITHOUT_ENSEMBLE:
            object.__setattr__(self, "k", 1)
        if self.strategy == DP_ENSEMBLE_SUBSAMPLING:
            if self.p is None:
                raise InvalidConfig("dp-ensemble-subsampling requires p")
            rate = self.p.p if isinstance(self.p, SamplingRate) else self.p
            try:
                SamplingRate(rate)
            except InvalidBudget as exc:
                raise InvalidConfig(str(exc)) from exc
            object.__setattr__(self, "p", float(rate))
        else:
            object.__setattr__(self, "p", None)
        if not 0.0 < self.resample_fraction <= 1.0:
            raise InvalidConfig(
                f"resample_fraction must be in (0, 1], got {self.resample_fraction}")
        object.__setattr__(self, "resample_fraction",
                           float(self.resample_fraction)
                           if self.strategy == MODEL_ENSEMBLE else 1.0)
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidConfig(f"seed must be a non-negative integer, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "total_budget": self.total_budget.to_dict(),
            "k": self.k,
            "p": self.p,
            "resample_fraction": self.resample_fraction,
            "seed": self.seed,
            "mechanism": self.mechanism.to_dict(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisPlan":
        return cls(
            strategy=d["strategy"],
            total_budget=PrivacyBudget.from_dict(d["total_budget"]),
            mechanism=MechanismConfig.from_dict(d["mechanism"]),
            model=ModelConfig.from_dict(d["model"]),
            k=d.get("k", 1),
            p=d.get("p"),
            resample_fraction=d.get("resample_fraction", 0.8),
            seed=d.get("seed", 0),
        )

    def digest(self) -> str:
        """Stable 16-hex-digit fingerprint of the plan's JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace_seed(self, seed: int) -> "SynthesisPlan":
        d = self.to_dict()
        d["seed"] = seed
        return SynthesisPlan.from_dict(d)


class EnsembleModel:
    """Mean-confidence aggregate of one or more trained classifiers."""

    def __init__(self, members: list):
        if not members:
            raise InvalidConfig("an ensemble needs at least one member")
        schema = members[0].schema
        if any(m.schema != schema for m in members[1:]):
            raise InvalidConfig("ensemble members must share one schema")
        self.members = list(members)
        self.schema = schema

    def confidence(self, d: Dataset) -> np.ndarray:
        return aggregate_confidence(self, d)

    def predict(self, d: Dataset) -> np.ndarray:
        # mean exactly 0.5 predicts the positive class
        return (self.confidence(d) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"members": [m.to_dict() for m in self.members]}

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        return cls([model_from_dict(m) for m in d["members"]])


def aggregate_confidence(ensemble: EnsembleModel, d: Dataset) -> np.ndarray:
    """Arithmetic mean of member confidences, one value per row.

    Computed per row as min + mean(deviations from the min) over the sorted
    member values: bitwise invariant under member permutation, and exactly
    the member value when all members agree (deviations are all zero).
    """
    stacked = np.sort(np.stack([m.confidence(d) for m in ensemble.members]),
                      axis=0)
    deviations = stacked[1:] - stacked[0]
    return stacked[0] + deviations.sum(axis=0) / len(ensemble.members)


def _mechanism_run(source: Dataset, plan: SynthesisPlan, run: int, attempt: int,
                   local_budget: PrivacyBudget, ledger: BudgetLedger) -> Dataset:
    """One generate() call with its own sub-ledger; uncertified runs taint
    the plan ledger."""
    sub = BudgetLedger(declared_total=local_budget)
    rng = child_rng(plan.seed, STREAM_MECHANISM, run, attempt)
    synth = generate(source, local_budget, plan.mechanism, rng, ledger=sub)
    if not sub.certified and ledger.certified:
        ledger.mark_uncertified(f"run {run}: {sub.uncertified_reason}")
    return synth


def synthesize_plan(real: Dataset, plan: SynthesisPlan) -> tuple[list[Dataset], BudgetLedger]:
    """The privacy-consuming half of a plan: all generate() calls.

    Returns the synthetic datasets (one for without/model ensembles, k for
    the DP ensembles) and the spend ledger. The ledger holds exactly one
    mechanism entry per generate() call and nothing else; it certifies
    against plan.total_budget unless noise was disabled.
    """
    if real.n == 0:
        raise EmptyDataset("cannot run a plan on an empty dataset")
    ledger = BudgetLedger(declared_total=plan.total_budget)
    kind = plan.mechanism.kind

    if plan.strategy in (WITHOUT_ENSEMBLE, MODEL_ENSEMBLE):
        synth = _mechanism_run(real, plan, 0, 0, plan.total_budget, ledger)
        ledger.record(f"mechanism:{kind} run 0", plan.total_budget)
        return [synth], ledger

    effective = per_run_budget(plan.total_budget, plan.k)
    if plan.strategy == SIMPLE_DP_ENSEMBLE:
        local = effective
    else:
        local = per_run_budget(plan.total_budget, plan.k, plan.p)

    synths = []
    for i in range(plan.k):
        source = real
        attempt = 0
        if plan.strategy == DP_ENSEMBLE_SUBSAMPLING:
            while True:
                source = poisson_subsample(
                    real, plan.p, child_rng(plan.seed, STREAM_SUBSAMPLE, i, attempt))
                if source.n > 0:
                    break
                if attempt >= MAX_SUBSAMPLE_RETRIES:
                    raise EmptySubsample(
                        f"run {i}: Poisson subsample empty after "
                        f"{MAX_SUBSAMPLE_RETRIES + 1} attempts")
                attempt += 1
        synths.append(_mechanism_run(source, plan, i, attempt, local, ledger))
        ledger.record(f"mechanism:{kind} run {i}", effective)
    return synths, ledger


def train_members(plan: SynthesisPlan, synths: list[Dataset],
                  seed: int | None = None) -> EnsembleModel:
    """The post-processing half of a plan: train k members on synthetic data.

    Consumes no privacy budget. Without/model ensembles expect the single
    synthetic dataset and draw per-member resamples from it; the DP ensembles
    expect one dataset per member. `seed` defaults to the plan's.
    """
    seed = plan.seed if seed is None else seed
    if plan.strategy in (WITHOUT_ENSEMBLE, MODEL_ENSEMBLE):
        if len(synths) != 1:
            raise InvalidConfig(
                f"{plan.strategy} trains from one synthetic dataset, got {len(synths)}")
        members = []
        for i in range(plan.k):
            train = resample_fraction(synths[0], plan.resample_fraction,
                                      child_rng(seed, STREAM_RESAMPLE, i))
            members.append(train_model(train, plan.model,
                                       child_rng(seed, STREAM_MODEL, i)))
        return EnsembleModel(members)
    if len(synths) != plan.k:
        raise InvalidConfig(
            f"{plan.strategy} trains one member per run, expected {plan.k} "
            f"datasets, got {len(synths)}")
    members = [train_model(s, plan.model, child_rng(seed, STREAM_MODEL, i))
               for i, s in enumerate(synths)]
    return EnsembleModel(members)


def run_plan(real: Dataset, plan: SynthesisPlan):
    """Execute one plan: synthesize, train, aggregate, account.

    Returns (EnsembleModel, BudgetLedger, list of synthetic datasets).
    Equivalent to synthesize_plan followed by train_members.
    """
    synths, ledger = synthesize_plan(real, plan)
    return train_members(plan, synths), ledger, synths
