"""Budget arithmetic: composition, subsampling amplification, ledger."""

import math

import pytest
from hypothesis import given, assume, settings
from hypothesis import strategies as st

from dpsynth.accounting import (
    BudgetLedger,
    PrivacyBudget,
    SamplingRate,
    amplify_by_subsampling,
    compose,
    inverse_amplify,
    per_run_budget,
)
from dpsynth.errors import BudgetExceeded, CertificationError, DeltaOverflow, InvalidBudget

eps_values = st.floats(min_value=1e-6, max_value=10.0, allow_nan=False)
delta_values = st.floats(min_value=0.0, max_value=1e-3, allow_nan=False)
rate_values = st.floats(min_value=1e-6, max_value=1.0, allow_nan=False)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def test_budget_rejects_bad_values():
    with pytest.raises(InvalidBudget):
        PrivacyBudget(-0.1, 0.0)
    with pytest.raises(InvalidBudget):
        PrivacyBudget(float("nan"), 0.0)
    with pytest.raises(InvalidBudget):
        PrivacyBudget(1.0, float("nan"))
    with pytest.raises(InvalidBudget):
        PrivacyBudget(1.0, -1e-9)
    with pytest.raises(InvalidBudget):
        PrivacyBudget(1.0, 1.0)


def test_budget_zero_is_valid():
    b = PrivacyBudget(0.0, 0.0)
    assert b.epsilon == 0.0 and b.delta == 0.0


def test_budget_is_immutable():
    b = PrivacyBudget(1.0, 1e-6)
    with pytest.raises(Exception):
        b.epsilon = 2.0


def test_sampling_rate_bounds():
    assert SamplingRate(1.0).p == 1.0
    assert SamplingRate(0.2).p == 0.2
    for bad in (0.0, -0.1, 1.5, float("nan")):
        with pytest.raises(InvalidBudget):
            SamplingRate(bad)


def test_budget_dict_round_trip():
    b = PrivacyBudget(2.5, 3e-7)
    assert PrivacyBudget.from_dict(b.to_dict()) == b


# ---------------------------------------------------------------------------
# compose
# ---------------------------------------------------------------------------

def test_compose_three_equal_parts():
    total = compose([PrivacyBudget(1, 1e-6)] * 3)
    assert total.approx_eq(PrivacyBudget(3, 3e-6))


def test_compose_identity():
    assert compose([PrivacyBudget(0, 0)]) == PrivacyBudget(0, 0)


def test_compose_hand_sum():
    total = compose([PrivacyBudget(0.5, 1e-7), PrivacyBudget(2.5, 9e-7)])
    assert total.epsilon == 3.0
    assert total.delta == pytest.approx(1e-6, abs=1e-12)


def test_compose_empty_rejected():
    with pytest.raises(ValueError):
        compose([])


def test_compose_delta_overflow():
    with pytest.raises(DeltaOverflow):
        compose([PrivacyBudget(0, 0.6), PrivacyBudget(0, 0.5)])


@given(st.lists(st.tuples(eps_values, delta_values), min_size=1, max_size=8),
       st.randoms(use_true_random=False))
def test_compose_permutation_invariant(parts, rnd):
    budgets = [PrivacyBudget(e, d) for e, d in parts]
    shuffled = list(budgets)
    rnd.shuffle(shuffled)
    a, b = compose(budgets), compose(shuffled)
    # fsum makes the sum independent of order, bit for bit
    assert a.epsilon == b.epsilon and a.delta == b.delta


@given(st.lists(st.tuples(eps_values, delta_values), min_size=1, max_size=6),
       st.lists(st.tuples(eps_values, delta_values), min_size=1, max_size=6))
def test_compose_associative(left, right):
    a = [PrivacyBudget(e, d) for e, d in left]
    b = [PrivacyBudget(e, d) for e, d in right]
    flat = compose(a + b)
    nested = compose([compose(a), compose(b)])
    assert flat.approx_eq(nested)


# ---------------------------------------------------------------------------
# amplification
# ---------------------------------------------------------------------------

def test_amplify_formula_values():
    out = amplify_by_subsampling(PrivacyBudget(1.0, 1e-5), 0.5)
    assert out.epsilon == pytest.approx(math.log(1 + 0.5 * (math.e - 1)), abs=1e-12)
    assert out.epsilon == pytest.approx(0.6201, abs=1e-4)
    assert out.delta == 0.5 * 1e-5


def test_amplify_reverses_published_example():
    # running at ~2.26 on a 20% subsample costs about 1
    out = amplify_by_subsampling(PrivacyBudget(2.2618, 0.0), 0.2)
    assert out.epsilon == pytest.approx(1.0, abs=5e-3)


def test_amplify_p1_is_exact_identity():
    b = PrivacyBudget(1.2345, 6.789e-7)
    out = amplify_by_subsampling(b, 1.0)
    assert out.epsilon == b.epsilon and out.delta == b.delta


def test_inverse_amplify_published_example():
    out = inverse_amplify(PrivacyBudget(1.0, 1e-6), 0.2)
    assert out.epsilon == math.log1p(math.expm1(1.0) / 0.2)
    assert 2.25 <= out.epsilon <= 2.27
    assert out.delta == pytest.approx(5e-6, abs=1e-15)


def test_inverse_amplify_zero_and_identity():
    assert inverse_amplify(PrivacyBudget(0, 0), 0.3) == PrivacyBudget(0, 0)
    b = PrivacyBudget(0.7, 1e-8)
    out = inverse_amplify(b, 1.0)
    assert out.epsilon == b.epsilon and out.delta == b.delta


def test_inverse_amplify_delta_overflow():
    with pytest.raises(DeltaOverflow):
        inverse_amplify(PrivacyBudget(1.0, 0.5), 0.2)


@given(eps_values, delta_values, rate_values)
def test_amplify_round_trip(eps, delta, p):
    assume(delta / p < 1)
    b = PrivacyBudget(eps, delta)
    back = amplify_by_subsampling(inverse_amplify(b, p), p)
    assert back.approx_eq(b)


@given(eps_values, eps_values, rate_values)
def test_amplify_strictly_increasing_in_eps(e1, e2, p):
    assume(abs(e2 - e1) > 1e-9)
    lo, hi = min(e1, e2), max(e1, e2)
    a_lo = amplify_by_subsampling(PrivacyBudget(lo, 0), p).epsilon
    a_hi = amplify_by_subsampling(PrivacyBudget(hi, 0), p).epsilon
    assert a_lo < a_hi


@given(eps_values, rate_values, rate_values)
def test_amplify_strictly_increasing_in_p(eps, p1, p2):
    assume(abs(p2 - p1) > 1e-9)
    lo, hi = min(p1, p2), max(p1, p2)
    a_lo = amplify_by_subsampling(PrivacyBudget(eps, 0), lo).epsilon
    a_hi = amplify_by_subsampling(PrivacyBudget(eps, 0), hi).epsilon
    assert a_lo < a_hi


@given(eps_values, rate_values)
def test_amplify_bounds(eps, p):
    out = amplify_by_subsampling(PrivacyBudget(eps, 0), p).epsilon
    assert out <= eps + 1e-12
    assert out <= p * math.exp(eps)


# ---------------------------------------------------------------------------
# per-run split
# ---------------------------------------------------------------------------

def test_per_run_split_without_subsampling():
    out = per_run_budget(PrivacyBudget(3, 3e-6), 3)
    assert out.epsilon == 1.0
    assert out.approx_eq(PrivacyBudget(1, 1e-6))


def test_per_run_split_k1_is_total():
    total = PrivacyBudget(3, 3e-6)
    assert per_run_budget(total, 1) == total


def test_per_run_split_with_subsampling():
    out = per_run_budget(PrivacyBudget(3, 3e-6), 3, 0.2)
    assert 2.25 <= out.epsilon <= 2.27
    # delta splits as delta / (p k)
    assert out.delta == pytest.approx(3e-6 / (0.2 * 3), abs=1e-15)


def test_per_run_rejects_bad_k():
    with pytest.raises(InvalidBudget):
        per_run_budget(PrivacyBudget(1, 0), 0)


@given(eps_values, delta_values, st.integers(min_value=1, max_value=16),
       st.one_of(st.none(), rate_values))
def test_per_run_composes_back_to_total(eps, delta, k, p):
    total = PrivacyBudget(eps, delta)
    if p is not None:
        assume(delta / (p * k) < 1)
    run = per_run_budget(total, k, p)
    effective = run if p is None else amplify_by_subsampling(run, p)
    assert compose([effective] * k).approx_eq(total)


# ---------------------------------------------------------------------------
# ledger
# ---------------------------------------------------------------------------

def test_ledger_accepts_then_refuses():
    ledger = BudgetLedger(declared_total=PrivacyBudget(3, 3e-6))
    for i in range(3):
        ledger.record(f"run {i}", PrivacyBudget(1, 1e-6))
    assert ledger.spent().approx_eq(PrivacyBudget(3, 3e-6))
    with pytest.raises(BudgetExceeded):
        ledger.record("extra", PrivacyBudget(0.1, 0))
    # the refused entry must not be appended
    assert len(ledger.entries) == 3
    assert ledger.spent().approx_eq(PrivacyBudget(3, 3e-6))


def test_ledger_exact_boundary_accepted():
    ledger = BudgetLedger(declared_total=PrivacyBudget(3, 0))
    ledger.record("all of it", PrivacyBudget(3, 0))
    assert ledger.spent() == PrivacyBudget(3, 0)


def test_ledger_single_overspend_rejected():
    ledger = BudgetLedger(declared_total=PrivacyBudget(1, 0))
    with pytest.raises(BudgetExceeded):
        ledger.record("too much", PrivacyBudget(1.5, 0))
    assert ledger.entries == []


def test_ledger_certification():
    ledger = BudgetLedger(declared_total=PrivacyBudget(1, 0))
    assert ledger.certified
    ledger.assert_certified()
    ledger.mark_uncertified("noise disabled (test mode)")
    assert not ledger.certified
    with pytest.raises(CertificationError):
        ledger.assert_certified()


def test_ledger_dict_round_trip():
    ledger = BudgetLedger(declared_total=PrivacyBudget(2, 1e-6))
    ledger.record("a", PrivacyBudget(0.5, 5e-7))
    ledger.record("b", PrivacyBudget(1.5, 5e-7))
    doc = ledger.to_dict()
    back = BudgetLedger.from_dict(doc)
    assert back.declared_total == ledger.declared_total
    assert back.entries == ledger.entries
    assert back.certified
    assert doc["spent"]["epsilon"] == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=50)
@given(st.lists(st.tuples(eps_values, delta_values), min_size=1, max_size=8))
def test_ledger_order_does_not_change_total(parts):
    budgets = [PrivacyBudget(e, d) for e, d in parts]
    total = compose(budgets)
    fwd = BudgetLedger(declared_total=total)
    rev = BudgetLedger(declared_total=total)
    for i, b in enumerate(budgets):
        fwd.record(f"s{i}", b)
    for i, b in enumerate(reversed(budgets)):
        rev.record(f"s{i}", b)
    assert fwd.spent().epsilon == rev.spent().epsilon
    assert fwd.spent().delta == rev.spent().delta
