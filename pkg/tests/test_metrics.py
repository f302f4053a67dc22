from fractions import Fraction
from itertools import combinations, permutations, product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edurank import DifficultyRanking, PairVerdict, ap_score, kendall_tau, ndpm
from edurank.exceptions import MissingRankError, UndefinedMetricError
from edurank.metrics import pair_verdict

from _oracles import ap_oracle, ndpm_oracle

ABC = DifficultyRanking.from_order("abc")
ACB = DifficultyRanking.from_order("acb")
A_BC = DifficultyRanking([["a"], ["b", "c"]])


def to_dict(ranking):
    return {q: ranking.tier_of(q) for q in ranking.questions}


def from_dict(tiers):
    levels = sorted(set(tiers.values()))
    return DifficultyRanking([[q for q in tiers if tiers[q] == v] for v in levels])


class TestExamples:
    def test_ndpm(self):
        assert ndpm(ABC, ABC) == 0
        assert ndpm(ABC, ABC.reversed()) == 1
        assert ndpm(ABC, ACB) == pytest.approx(1 / 3, abs=1e-12)
        assert ndpm(ABC, A_BC) == pytest.approx(1 / 6, abs=1e-12)

    def test_ndpm_oracle_agrees_on_examples(self):
        assert ndpm_oracle(to_dict(ABC), to_dict(ACB), "abc") == Fraction(1, 3)
        assert ndpm_oracle(to_dict(ABC), to_dict(A_BC), "abc") == Fraction(1, 6)

    def test_ap(self):
        assert ap_score(ABC, ABC) == 1
        assert ap_score(ABC, ABC.reversed()) == 0
        assert ap_score(ABC, ACB) == pytest.approx(0.75, abs=1e-12)
        assert ap_oracle(to_dict(ABC), to_dict(ACB), "abc") == Fraction(3, 4)

    def test_tau(self):
        assert kendall_tau(ABC, ABC) == 1
        assert kendall_tau(ABC, ABC.reversed()) == -1
        assert kendall_tau(ABC, ACB) == pytest.approx(1 / 3, abs=1e-12)

    def test_ndpm_undefined_when_reference_ties_everything(self):
        with pytest.raises(UndefinedMetricError):
            ndpm(DifficultyRanking([["a", "b", "c"]]), ABC)

    def test_ap_missing_question(self):
        with pytest.raises(MissingRankError):
            ap_score(ABC, DifficultyRanking.from_order("ab"), scope="abc")

    def test_ap_needs_two_questions(self):
        with pytest.raises(UndefinedMetricError):
            ap_score(ABC, ABC, scope="a")

    def test_tau_needs_common_questions(self):
        with pytest.raises(UndefinedMetricError):
            kendall_tau(ABC, DifficultyRanking.from_order("axy"))

    def test_scope_restricts(self):
        assert ndpm(ABC, ACB, scope="ab") == 0
        assert ap_score(ABC, ACB, scope="bc") == 0


class TestPairVerdict:
    def test_verdicts(self):
        assert pair_verdict(ABC, ABC, "a", "b") is PairVerdict.AGREE
        assert pair_verdict(ABC, A_BC, "b", "c") is PairVerdict.COMPATIBLE
        assert pair_verdict(ABC, ACB, "b", "c") is PairVerdict.DISAGREE

    def test_symmetry(self):
        assert pair_verdict(ABC, ACB, "c", "b") is PairVerdict.DISAGREE
        assert pair_verdict(ABC, ABC, "b", "a") is PairVerdict.AGREE
        # compatibility is not symmetric in the roles of the two rankings
        assert pair_verdict(A_BC, ABC, "b", "c") is None


def weak_orders(questions):
    """Every ranking over ``questions`` as a tier map."""
    n = len(questions)
    seen = set()
    for levels in product(range(n), repeat=n):
        used = sorted(set(levels))
        if used != list(range(len(used))):
            continue
        key = tuple(levels)
        if key not in seen:
            seen.add(key)
            yield dict(zip(questions, levels))


def test_weak_order_enumeration_counts():
    # ordered Bell (Fubini) numbers
    assert [sum(1 for _ in weak_orders("abcd"[:n])) for n in range(1, 5)] == [1, 3, 13, 75]


@pytest.mark.parametrize("n", [2, 3, 4])
def test_ndpm_exhaustive(n):
    qs = "abcd"[:n]
    orders = list(weak_orders(qs))
    for ref in orders:
        ordered_pairs = sum(1 for a, b in combinations(qs, 2) if ref[a] != ref[b])
        for prop in orders:
            if not ordered_pairs:
                with pytest.raises(UndefinedMetricError):
                    ndpm(from_dict(ref), from_dict(prop))
                continue
            expected = ndpm_oracle(ref, prop, qs)
            assert abs(ndpm(from_dict(ref), from_dict(prop)) - float(expected)) <= 1e-12


@pytest.mark.parametrize("n", [2, 3, 4])
def test_ap_exhaustive(n):
    qs = "abcd"[:n]
    orders = list(weak_orders(qs))
    for ref in orders:
        for prop in orders:
            expected = ap_oracle(ref, prop, qs)
            assert abs(ap_score(from_dict(ref), from_dict(prop)) - float(expected)) <= 1e-12


QUESTIONS = [f"q{i}" for i in range(8)]


@st.composite
def tier_maps(draw, min_size=2):
    qs = draw(st.lists(st.sampled_from(QUESTIONS), min_size=min_size, max_size=8, unique=True))
    levels = draw(st.lists(st.integers(0, 4), min_size=len(qs), max_size=len(qs)))
    return dict(zip(qs, levels))


@st.composite
def ranking_pairs(draw):
    ref = draw(tier_maps())
    prop = {q: draw(st.integers(0, 4)) for q in ref}
    return ref, prop


@settings(max_examples=300, deadline=None)
@given(ranking_pairs())
def test_ndpm_matches_oracle(pair):
    ref, prop = pair
    r, p = from_dict(ref), from_dict(prop)
    if not any(ref[a] != ref[b] for a, b in combinations(ref, 2)):
        with pytest.raises(UndefinedMetricError):
            ndpm(r, p)
        return
    value = ndpm(r, p)
    assert abs(value - float(ndpm_oracle(ref, prop, ref))) <= 1e-12
    assert 0 <= value <= 1


@settings(max_examples=300, deadline=None)
@given(ranking_pairs())
def test_ap_matches_oracle(pair):
    ref, prop = pair
    value = ap_score(from_dict(ref), from_dict(prop))
    assert abs(value - float(ap_oracle(ref, prop, ref))) <= 1e-12
    assert 0 <= value <= 1


@settings(max_examples=100, deadline=None)
@given(st.permutations(QUESTIONS), st.integers(2, 8))
def test_strict_identity_and_reversal(order, n):
    r = DifficultyRanking.from_order(order[:n])
    assert ndpm(r, r) == 0
    assert ap_score(r, r) == 1
    assert ndpm(r, r.reversed()) == 1
    assert ap_score(r, r.reversed()) == 0
    assert kendall_tau(r, r.reversed()) == -1


def test_ndpm_ignores_order_within_reference_ties():
    qs = "abcd"
    orders = list(weak_orders(qs))
    for ref in orders:
        ordered = [(a, b) for a, b in combinations(qs, 2) if ref[a] != ref[b]]
        if not ordered:
            continue
        by_signature = {}
        for prop in orders:
            # proposals that agree on every reference-ordered pair
            signature = tuple((prop[a] > prop[b]) - (prop[a] < prop[b]) for a, b in ordered)
            by_signature.setdefault(signature, set()).add(ndpm(from_dict(ref), from_dict(prop)))
        assert all(len(values) == 1 for values in by_signature.values())


def test_ndpm_tied_reference_pair_any_proposal():
    ref = DifficultyRanking([["a"], ["b", "c"]])
    values = {ndpm(ref, DifficultyRanking.from_order(p)) for p in permutations("abc") if p[0] == "a"}
    assert values == {0.0}
