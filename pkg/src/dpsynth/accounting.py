"""Privacy-budget arithmetic and the spend ledger.

Budgets compose additively (basic composition), Poisson subsampling maps a
mechanism's cost (eps, delta) to (log(1 + p*(e^eps - 1)), p*delta), and the
ledger certifies that the spends recorded for a pipeline never exceed its
declared total. Downstream model training and evaluation are post-processing
and are never recorded as spends.

All equality checks on budgets use an absolute tolerance of 1e-9 per
component; the formulas are closed-form, so accumulated error stays within a
few ulp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import BudgetExceeded, CertificationError, DeltaOverflow, InvalidBudget

BUDGET_TOL = 1e-9


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) differential-privacy guarantee.

    epsilon >= 0 bounds the privacy loss; delta in [0, 1) is the slack
    probability. Construction rejects NaN and out-of-range values.
    """

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        eps = float(self.epsilon)
        delta = float(self.delta)
        if math.isnan(eps) or math.isnan(delta):
            raise InvalidBudget("budget components must not be NaN")
        if eps < 0:
            raise InvalidBudget(f"epsilon must be >= 0, got {eps}")
        if not 0 <= delta < 1:
            raise InvalidBudget(f"delta must be in [0, 1), got {delta}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "delta", delta)

    def approx_eq(self, other: "PrivacyBudget", tol: float = BUDGET_TOL) -> bool:
        return abs(self.epsilon - other.epsilon) <= tol and abs(self.delta - other.delta) <= tol

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "delta": self.delta}

    @classmethod
    def from_dict(cls, d: dict) -> "PrivacyBudget":
        return cls(float(d["epsilon"]), float(d.get("delta", 0.0)))


@dataclass(frozen=True)
class SamplingRate:
    """Poisson subsampling rate p in (0, 1]."""

    p: float

    def __post_init__(self):
        p = float(self.p)
        if math.isnan(p) or not 0 < p <= 1:
            raise InvalidBudget(f"sampling rate must be in (0, 1], got {p}")
        object.__setattr__(self, "p", p)


def _as_rate(p) -> float:
    return p.p if isinstance(p, SamplingRate) else SamplingRate(float(p)).p


def compose(budgets: list[PrivacyBudget]) -> PrivacyBudget:
    """Basic composition: sum epsilons and deltas over a non-empty list.

    Raises DeltaOverflow if the summed delta reaches 1.
    """
    if not budgets:
        raise ValueError("compose() needs at least one budget")
    eps = math.fsum(b.epsilon for b in budgets)
    delta = math.fsum(b.delta for b in budgets)
    if delta >= 1:
        raise DeltaOverflow(f"composed delta {delta} >= 1")
    return PrivacyBudget(eps, delta)


def amplify_by_subsampling(b: PrivacyBudget, p) -> PrivacyBudget:
    """Effective budget of a mechanism run on an independent p-Poisson subsample.

    Returns (log(1 + p*(e^eps - 1)), p*delta). p = 1 is an exact identity.
    """
    rate = _as_rate(p)
    if rate == 1.0:
        return b
    return PrivacyBudget(math.log1p(rate * math.expm1(b.epsilon)), rate * b.delta)


def inverse_amplify(target: PrivacyBudget, p) -> PrivacyBudget:
    """Budget a mechanism may spend on a p-subsample so the effective cost is `target`.

    Returns (log(1 + (e^eps - 1)/p), delta/p); the inverse of
    amplify_by_subsampling, so the round trip reproduces `target` within 1e-9.
    Raises DeltaOverflow when delta/p >= 1.
    """
    rate = _as_rate(p)
    if rate == 1.0:
        return target
    delta = target.delta / rate
    if delta >= 1:
        raise DeltaOverflow(f"delta/p = {delta} >= 1 (delta={target.delta}, p={rate})")
    return PrivacyBudget(math.log1p(math.expm1(target.epsilon) / rate), delta)


def per_run_budget(total: PrivacyBudget, k: int, p=None) -> PrivacyBudget:
    """Budget for one of k mechanism runs under an even split of `total`.

    Without subsampling this is (eps/k, delta/k); with rate p it is the
    inverse-amplified budget whose subsampled cost composes back to `total`.
    """
    if k < 1:
        raise InvalidBudget(f"k must be >= 1, got {k}")
    split = PrivacyBudget(total.epsilon / k, total.delta / k)
    if p is None:
        return split
    return inverse_amplify(split, p)


@dataclass(frozen=True)
class LedgerEntry:
    label: str
    spend: PrivacyBudget


@dataclass
class BudgetLedger:
    """Append-only record of privacy spends against a declared total.

    The composed spends never exceed declared_total + 1e-9 per component;
    `record` refuses (without mutating) any entry that would. A ledger can be
    marked uncertified when a run used disabled noise, after which it refuses
    to certify.

    Mutation is single-writer: callers must serialize record() calls.
    """

    declared_total: PrivacyBudget
    entries: list[LedgerEntry] = field(default_factory=list)
    uncertified_reason: str | None = None

    def spent(self) -> PrivacyBudget:
        if not self.entries:
            return PrivacyBudget(0.0, 0.0)
        return compose([e.spend for e in self.entries])

    def record(self, label: str, spend: PrivacyBudget) -> None:
        current = self.spent()
        new_eps = current.epsilon + spend.epsilon
        new_delta = current.delta + spend.delta
        if (new_eps > self.declared_total.epsilon + BUDGET_TOL
                or new_delta > self.declared_total.delta + BUDGET_TOL):
            raise BudgetExceeded(
                f"spend {spend.to_dict()} would take the ledger to "
                f"({new_eps}, {new_delta}) > declared {self.declared_total.to_dict()}")
        self.entries.append(LedgerEntry(label, spend))

    def mark_uncertified(self, reason: str) -> None:
        self.uncertified_reason = reason

    @property
    def certified(self) -> bool:
        return self.uncertified_reason is None

    def assert_certified(self) -> None:
        if not self.certified:
            raise CertificationError(f"ledger is not certifiable: {self.uncertified_reason}")

    def to_dict(self) -> dict:
        return {
            "declared_total": self.declared_total.to_dict(),
            "entries": [{"label": e.label, **e.spend.to_dict()} for e in self.entries],
            "spent": self.spent().to_dict(),
            "certified": self.certified,
            "uncertified_reason": self.uncertified_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BudgetLedger":
        ledger = cls(declared_total=PrivacyBudget.from_dict(d["declared_total"]))
        for e in d.get("entries", []):
            ledger.entries.append(LedgerEntry(e["label"], PrivacyBudget(e["epsilon"], e["delta"])))
        ledger.uncertified_reason = d.get("uncertified_reason")
        return ledger
