"""Rank-correlation metrics between a reference and a proposed ranking.

All functions look only at the restriction of both rankings to ``scope``.
"""

from __future__ import annotations

import enum
from itertools import combinations
from typing import Hashable, Iterable, Optional

from .core import DifficultyRanking, Relation
from .exceptions import MissingRankError, UndefinedMetricError


class PairVerdict(enum.Enum):
    AGREE = 0
    COMPATIBLE = 1
    DISAGREE = 2


def pair_verdict(reference: DifficultyRanking, proposed: DifficultyRanking, a, b) -> Optional[PairVerdict]:
    """Verdict on a pair the reference orders; None if the reference does not."""
    ref = reference.relation(a, b)
    if ref is Relation.SUCCEEDS:
        a, b = b, a
    elif ref is not Relation.PRECEDES:
        return None
    prop = proposed.relation(a, b)
    if prop is Relation.PRECEDES:
        return PairVerdict.AGREE
    if prop is Relation.SUCCEEDS:
        return PairVerdict.DISAGREE
    return PairVerdict.COMPATIBLE


def _scope(scope: Optional[Iterable[Hashable]], *rankings: DifficultyRanking) -> list:
    if scope is None:
        scope = set().union(*(r.questions for r in rankings))
    return sorted(set(scope))


def ndpm(reference: DifficultyRanking, proposed: DifficultyRanking, scope: Optional[Iterable[Hashable]] = None) -> float:
    """Normalized distance-based performance measure, 0 best and 1 worst.

    Contradicting a reference preference costs 2, leaving it unordered costs
    1; pairs the reference ties are free.  Raises UndefinedMetricError when
    the reference orders no pair in scope.
    """
    questions = _scope(scope, reference)
    distance = 0
    ordered = 0
    for a, b in combinations(questions, 2):
        verdict = pair_verdict(reference, proposed, a, b)
        if verdict is None:
            continue
        ordered += 1
        distance += verdict.value
    if ordered == 0:
        raise UndefinedMetricError("reference orders no pair in scope")
    return distance / (2 * ordered)


def ap_score(reference: DifficultyRanking, proposed: DifficultyRanking, scope: Optional[Iterable[Hashable]] = None) -> float:
    """AP rank correlation, 1 for total agreement and 0 for none.

    Positions come from the proposed ranking linearized with ties broken by
    ascending question id.  A question at position k scores the fraction of
    its k-1 predecessors that both rankings strictly place above it, so pairs
    tied in either ranking earn nothing.
    """
    questions = _scope(scope, proposed)
    if len(questions) < 2:
        raise UndefinedMetricError("AP needs at least two questions in scope")
    missing = [q for q in questions if q not in proposed]
    if missing:
        raise MissingRankError(f"proposed ranking lacks {missing!r}")
    order = proposed.restrict(questions).linearize()
    ref_tier = [reference.tier_of(q) for q in order]
    prop_tier = [proposed.tier_of(q) for q in order]
    total = 0.0
    for k in range(1, len(order)):
        rk, pk = ref_tier[k], prop_tier[k]
        hits = 0
        if rk is not None:
            for j in range(k):
                rj = ref_tier[j]
                if rj is not None and rj < rk and prop_tier[j] < pk:
                    hits += 1
        total += hits / k
    return total / (len(order) - 1)


def kendall_tau(ranking_a: DifficultyRanking, ranking_b: DifficultyRanking, scope: Optional[Iterable[Hashable]] = None) -> float:
    """(concordant - discordant) / pairs strictly ordered by both rankings."""
    questions = [q for q in _scope(scope, ranking_a, ranking_b) if q in ranking_a and q in ranking_b]
    if len(questions) < 2:
        raise UndefinedMetricError("kendall tau needs at least two common questions")
    concordant = discordant = 0
    for a, b in combinations(questions, 2):
        ra, rb = ranking_a.relation(a, b), ranking_b.relation(a, b)
        if ra is Relation.TIED or rb is Relation.TIED:
            continue
        if ra is rb:
            concordant += 1
        else:
            discordant += 1
    if concordant + discordant == 0:
        raise UndefinedMetricError("no pair is strictly ordered by both rankings")
    return (concordant - discordant) / (concordant + discordant)
