"""EduRank: personalized difficulty ranking by similarity-weighted Copeland voting.

For a target student, every other student is weighted by the AP agreement
between their difficulty ranking and the target's ranking on the target's
training questions.  The most similar ones vote on each pair of test
questions; a question's Copeland score is its pairwise wins minus losses.

Optionally, a population prior built from mean question scores is blended
into each pairwise vote, with the prior's share shrinking as more of the
selected neighbours rank both questions.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ._validation import check_dataset, check_is_fitted, check_positive_int, check_task
from .base import BaseRanker, RankingTask
from .core import Dataset, DifficultyRanking, infer_ranking
from .metrics import ap_score

# |x| <= SIGN_TOL * scale counts as an exact tie; absorbs float summation noise
SIGN_TOL = 1e-12


@dataclass(frozen=True)
class NeighborSimilarity:
    student_id: Hashable
    weight: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight {self.weight!r} outside [0, 1]")


@dataclass(frozen=True)
class EduRankConfig:
    """``neighborhood_size=None`` lets every positively similar student vote."""

    neighborhood_size: Optional[int] = 50
    use_prior: bool = False
    min_overlap: int = 2

    def __post_init__(self):
        check_positive_int(self.neighborhood_size, "neighborhood_size", allow_none=True)
        if self.min_overlap < 2:
            raise ValueError("min_overlap must be >= 2")


@dataclass(frozen=True)
class QuestionPrior:
    """Mean converted score per question (higher = easier) and its support."""

    scores: Mapping[Hashable, float] = field(default_factory=dict)
    support: Mapping[Hashable, int] = field(default_factory=dict)

    def get(self, question) -> Optional[float]:
        return self.scores.get(question)


def _sign(x: float, scale: float) -> int:
    if abs(x) <= SIGN_TOL * scale:
        return 0
    return 1 if x > 0 else -1


def similarity(target_training: DifficultyRanking, neighbor: DifficultyRanking, min_overlap: int = 2) -> float:
    """AP agreement of ``neighbor`` with the target, over their common questions.

    The target's ranking is the reference.  Returns 0 below ``min_overlap``
    common questions.
    """
    common = target_training.questions & neighbor.questions
    if len(common) < max(2, min_overlap):
        return 0.0
    return ap_score(target_training, neighbor, common)


def win_score(q_k, q_l, ranking: DifficultyRanking) -> int:
    """+1 if ``q_k`` is harder, -1 if ``q_l`` is harder, else 0."""
    tk, tl = ranking.tier_of(q_k), ranking.tier_of(q_l)
    if tk is None or tl is None or tk == tl:
        return 0
    return 1 if tk < tl else -1


def _canonical(neighbors):
    return sorted(neighbors, key=lambda n: n[0].student_id)


def vote_sum(q_k, q_l, neighbors: Sequence[Tuple[NeighborSimilarity, DifficultyRanking]]) -> Tuple[float, float]:
    """Weighted sum of win scores and the sum of absolute terms (its scale)."""
    total = scale = 0.0
    for sim, ranking in _canonical(neighbors):
        term = sim.weight * win_score(q_k, q_l, ranking)
        total += term
        scale += abs(term)
    return total, scale


def relative_voting(q_k, q_l, neighbors: Sequence[Tuple[NeighborSimilarity, DifficultyRanking]]) -> int:
    """Sign of the similarity-weighted vote on whether ``q_k`` is harder."""
    return _sign(*vote_sum(q_k, q_l, neighbors))


def prior_sign(q_k, q_l, prior: QuestionPrior) -> int:
    """+1 if the population found ``q_k`` harder (lower mean score)."""
    pk, pl = prior.get(q_k), prior.get(q_l)
    if pk is None or pl is None:
        return 0
    return _sign(pl - pk, 1.0)


def blend_weight(n_both: int, neighborhood_size: int) -> float:
    if neighborhood_size <= 0:
        return 0.0
    return min(1.0, n_both / neighborhood_size)


def blended_rv(q_k, q_l, neighbors, prior: QuestionPrior, neighborhood_size: int) -> int:
    """Neighbour vote and prior vote mixed by how many neighbours rank both."""
    check_positive_int(neighborhood_size, "neighborhood_size")
    n_both = sum(1 for _, r in neighbors if q_k in r and q_l in r)
    alpha = blend_weight(n_both, neighborhood_size)
    mixed = alpha * relative_voting(q_k, q_l, neighbors) + (1.0 - alpha) * prior_sign(q_k, q_l, prior)
    return _sign(mixed, 1.0)


def build_prior(dataset: Dataset, scores: Optional[Mapping] = None) -> QuestionPrior:
    """Average converted score of every training student who answered each question."""
    if scores is None:
        from .baselines import convert_scores

        scores = convert_scores(dataset)
    per_question = defaultdict(list)
    for (_, q), v in sorted(scores.items()):
        per_question[q].append(v)
    return QuestionPrior(
        {q: math.fsum(v) / len(v) for q, v in per_question.items()},
        {q: len(v) for q, v in per_question.items()},
    )


def _pair_signs(matrix: np.ndarray, scale: np.ndarray) -> np.ndarray:
    out = np.sign(matrix)
    out[np.abs(matrix) <= SIGN_TOL * scale] = 0.0
    return out


def copeland_core(tiers: np.ndarray, weights: np.ndarray, prior: Optional[np.ndarray] = None,
                  neighborhood_size: Optional[int] = None) -> np.ndarray:
    """Copeland scores for the columns of ``tiers``.

    ``tiers`` is (neighbours, questions) holding each neighbour's tier index,
    NaN where unranked; rows must already be in canonical student order so
    that the vote sums accumulate identically on every run.  ``prior`` holds
    mean scores per question (NaN when unknown) and switches on blending.
    """
    n_nb, n_q = tiers.shape
    harder = (tiers[:, :, None] < tiers[:, None, :]).astype(float)
    gamma = harder - harder.transpose(0, 2, 1)
    terms = weights[:, None, None] * gamma
    votes = terms.sum(axis=0) if n_nb else np.zeros((n_q, n_q))
    scale = np.abs(terms).sum(axis=0) if n_nb else np.zeros((n_q, n_q))
    rv = _pair_signs(votes, scale)

    if prior is not None:
        ranked = ~np.isnan(tiers)
        n_both = (ranked[:, :, None] & ranked[:, None, :]).sum(axis=0)
        size = n_nb if neighborhood_size is None else neighborhood_size
        alpha = np.minimum(1.0, n_both / size) if size > 0 else np.zeros((n_q, n_q))
        with np.errstate(invalid="ignore"):
            diff = prior[None, :] - prior[:, None]
        prior_rv = _pair_signs(np.nan_to_num(diff, nan=0.0), np.ones_like(diff))
        rv = _pair_signs(alpha * rv + (1.0 - alpha) * prior_rv, np.ones_like(rv))

    np.fill_diagonal(rv, 0.0)
    return rv.sum(axis=1).astype(int)


def copeland_scores(test_set: Iterable[Hashable], neighbors: Sequence[Tuple[NeighborSimilarity, DifficultyRanking]],
                    prior: Optional[QuestionPrior] = None, neighborhood_size: Optional[int] = None) -> Dict[Hashable, int]:
    questions = sorted(set(test_set))
    ordered = _canonical(neighbors)
    tiers = np.array(
        [[np.nan if r.tier_of(q) is None else r.tier_of(q) for q in questions] for _, r in ordered],
        dtype=float,
    ).reshape(len(ordered), len(questions))
    weights = np.array([s.weight for s, _ in ordered], dtype=float)
    prior_arr = None
    if prior is not None:
        prior_arr = np.array([np.nan if prior.get(q) is None else prior.get(q) for q in questions], dtype=float)
    scores = copeland_core(tiers, weights, prior_arr, neighborhood_size)
    return dict(zip(questions, scores.tolist()))


def copeland_aggregate(test_set, neighbors, prior=None, neighborhood_size=None) -> DifficultyRanking:
    """Rank ``test_set`` by decreasing Copeland score; equal scores share a tier."""
    return DifficultyRanking.from_scores(copeland_scores(test_set, neighbors, prior, neighborhood_size))


def batch_ap(reference: np.ndarray, proposed: np.ndarray, min_overlap: int = 2) -> np.ndarray:
    """Row-wise AP of each row of ``proposed`` against ``reference``.

    Columns must be in ascending question-id order.  ``reference`` ranks
    every column; NaN in ``proposed`` marks an unranked question, so each
    row is scored over its own common questions.
    """
    n_rows, t = proposed.shape
    common = ~np.isnan(proposed)
    count = common.sum(axis=1)
    lt = proposed[:, :, None] < proposed[:, None, :]
    eq = proposed[:, :, None] == proposed[:, None, :]
    earlier_id = np.triu(np.ones((t, t), dtype=bool), k=1)
    predecessors = (lt | (eq & earlier_id)).sum(axis=1)
    ref_lt = reference[:, None] < reference[None, :]
    hits = (lt & ref_lt).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        a_k = np.where(common & (predecessors > 0), hits / np.maximum(predecessors, 1), 0.0)
    out = np.zeros(n_rows)
    ok = count >= max(2, min_overlap)
    out[ok] = a_k[ok].sum(axis=1) / (count[ok] - 1)
    return out


class EduRankRanker(BaseRanker):
    """Collaborative difficulty ranker with similarity-weighted Copeland voting.

    Parameters
    ----------
    n_neighbors : int or None, default=50
        Neighbourhood size; None lets every student with positive similarity
        vote, which reproduces the all-students formulation.
    use_prior : bool, default=False
        Blend the population prior into each pairwise vote.
    min_overlap : int, default=2
        Minimum common questions for a non-zero similarity.
    format : str, optional
        Score conversion layout for the prior; defaults to the dataset's.

    Attributes
    ----------
    questions_ : tuple
        Questions seen at fit time, ascending.
    students_ : tuple
        Students seen at fit time, ascending.
    tiers_ : ndarray of shape (n_students, n_questions)
        Tier index of each question in each student's inferred ranking.
    prior_ : QuestionPrior or None
    """

    def __init__(self, n_neighbors=50, use_prior=False, min_overlap=2, format=None):
        self.n_neighbors = n_neighbors
        self.use_prior = use_prior
        self.min_overlap = min_overlap
        self.format = format

    @property
    def config(self) -> EduRankConfig:
        return EduRankConfig(self.n_neighbors, self.use_prior, self.min_overlap)

    def fit(self, dataset):
        check_dataset(dataset)
        self.config  # validates parameters
        self.questions_ = dataset.questions
        self.students_ = dataset.students
        self._q_index = {q: i for i, q in enumerate(self.questions_)}
        self._s_index = {s: i for i, s in enumerate(self.students_)}
        tiers = np.full((len(self.students_), len(self.questions_)), np.nan)
        for s, row in zip(self.students_, tiers):
            for q, t in infer_ranking(dataset, s).membership.items():
                row[self._q_index[q]] = t
        self.tiers_ = tiers
        self.prior_ = None
        self._prior_arr = None
        if self.use_prior:
            from .baselines import convert_scores

            self.prior_ = build_prior(dataset, convert_scores(dataset, self.format))
            self._prior_arr = np.array(
                [self.prior_.scores.get(q, np.nan) for q in self.questions_], dtype=float
            )
        return self

    def _reference(self, task: RankingTask) -> DifficultyRanking:
        """The target's fitted ranking restricted to ``task.train``."""
        row = self._s_index.get(task.student)
        if row is None:
            return DifficultyRanking([])
        tiers = self.tiers_[row]
        membership = {}
        for q in task.train:
            i = self._q_index.get(q)
            if i is not None and not np.isnan(tiers[i]):
                membership[q] = tiers[i]
        return DifficultyRanking.from_scores(membership, descending=False)

    def neighbor_weights(self, reference: DifficultyRanking, exclude=None) -> Tuple[np.ndarray, np.ndarray]:
        """Selected neighbour rows (ascending) and their similarity weights."""
        check_is_fitted(self, "tiers_")
        cols = [self._q_index[q] for q in sorted(reference.questions) if q in self._q_index]
        if len(cols) < max(2, self.min_overlap):
            return np.zeros(0, dtype=int), np.zeros(0)
        ref = np.array([reference.tier_of(self.questions_[c]) for c in cols], dtype=float)
        weights = batch_ap(ref, self.tiers_[:, cols], self.min_overlap)
        if exclude is not None and exclude in self._s_index:
            weights[self._s_index[exclude]] = 0.0
        candidates = np.flatnonzero(weights > 0)
        # most similar first, ties by student order (stable sort)
        candidates = candidates[np.argsort(-weights[candidates], kind="stable")]
        if self.n_neighbors is not None:
            candidates = candidates[: self.n_neighbors]
        rows = np.sort(candidates)
        return rows, weights[rows]

    def neighbors(self, task: RankingTask) -> List[NeighborSimilarity]:
        rows, weights = self.neighbor_weights(self._reference(task), exclude=task.student)
        return [NeighborSimilarity(self.students_[r], float(w)) for r, w in zip(rows, weights)]

    def copeland_scores(self, task: RankingTask) -> Dict[Hashable, int]:
        check_is_fitted(self, "tiers_")
        check_task(task)
        return self._scores_for(self._reference(task), task.test, exclude=task.student)

    def _scores_for(self, reference, test, exclude=None):
        rows, weights = self.neighbor_weights(reference, exclude=exclude)
        questions = sorted(test)
        cols = [self._q_index.get(q) for q in questions]
        known = np.array([c is not None for c in cols])
        tiers = np.full((len(rows), len(questions)), np.nan)
        idx = np.array([c for c in cols if c is not None], dtype=int)
        if len(idx):
            tiers[:, known] = self.tiers_[np.ix_(rows, idx)]
        prior = None
        if self._prior_arr is not None:
            prior = np.full(len(questions), np.nan)
            if len(idx):
                prior[known] = self._prior_arr[idx]
        scores = copeland_core(tiers, weights, prior, self.n_neighbors)
        return dict(zip(questions, scores.tolist()))

    def rank(self, task):
        return DifficultyRanking.from_scores(self.copeland_scores(task))

    def rank_with_reference(self, student, training: DifficultyRanking, test_set) -> DifficultyRanking:
        """Rank ``test_set`` for an explicitly supplied training ranking."""
        check_is_fitted(self, "tiers_")
        return DifficultyRanking.from_scores(self._scores_for(training, test_set, exclude=student))


def copeland_rank(target, training: DifficultyRanking, test_set, dataset: Dataset,
                  config: EduRankConfig = EduRankConfig()) -> DifficultyRanking:
    """One-shot EduRank: fit on ``dataset`` and rank ``test_set`` for ``target``."""
    task = RankingTask(target, training.questions, test_set)
    check_task(task)
    ranker = EduRankRanker(config.neighborhood_size, config.use_prior, config.min_overlap)
    return ranker.fit(dataset).rank_with_reference(target, training, task.test)
