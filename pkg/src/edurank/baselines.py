"""Comparison rankers and the score conversion that feeds them.

Score-based rankers predict a score per test question and rank the lowest
predicted score first, since a low score means the question was hard.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ._validation import check_dataset, check_is_fitted, check_positive_int, check_task
from .base import BaseRanker, RankingTask
from .core import FORMATS, Dataset, DifficultyRanking, infer_ranking
from .exceptions import DivergenceError, PoolExhaustedError, UndefinedMetricError, UnsupportedError
from .metrics import kendall_tau

RETRY_PENALTY = 0.2
ASC_PROPORTIONS = {1: 0.2, 2: 0.3, 3: 0.4, 4: 0.1}

Scores = Dict[Tuple[Hashable, Hashable], float]


def _resolve_format(dataset: Dataset, format: Optional[str]) -> str:
    fmt = format or dataset.format
    if fmt is None:
        fmt = "pslc" if any(r.elapsed_seconds is not None for r in dataset.records) else "k12"
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    return fmt


def convert_scores(dataset: Dataset, format: Optional[str] = None) -> Scores:
    """Collapse each (student, question) into one score in [0, 1].

    score = first grade - 0.2 per retry - normalized elapsed time (pslc only),
    floored at zero.  Elapsed time is min-max normalized over every summed
    elapsed value in the dataset.
    """
    fmt = _resolve_format(dataset, format)
    lo = hi = None
    if fmt == "pslc":
        elapsed = [s.total_elapsed_seconds for s in dataset.summaries.values()
                   if s.total_elapsed_seconds is not None]
        if elapsed:
            lo, hi = min(elapsed), max(elapsed)

    scores = {}
    for key, s in dataset.summaries.items():
        value = s.first_attempt_grade - RETRY_PENALTY * (s.num_attempts - 1)
        if lo is not None and s.total_elapsed_seconds is not None and hi > lo:
            value -= (s.total_elapsed_seconds - lo) / (hi - lo)
        scores[key] = min(1.0, max(0.0, value))
    return scores


def _by_student(scores: Mapping) -> Dict[Hashable, Dict[Hashable, float]]:
    out = defaultdict(dict)
    for (s, q), v in scores.items():
        out[s][q] = v
    return dict(out)


def _rank_predictions(test: Iterable, predicted: Mapping[Hashable, float]) -> DifficultyRanking:
    """Lowest prediction first; questions without a prediction form the last tier."""
    ranking = DifficultyRanking.from_scores(predicted, descending=False)
    rest = set(test) - set(predicted)
    if rest:
        ranking = DifficultyRanking(list(ranking.tiers) + [rest])
    return ranking


def pearson(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    """Pearson correlation, or None when either side has zero variance."""
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return None
    return float(dx @ dy) / denom


class UBCFRanker(BaseRanker):
    """User-based KNN with Pearson similarity and mean-centred prediction.

    Parameters
    ----------
    n_neighbors : int
        Number of most-correlated neighbours that vote.
    min_common : int
        Neighbours sharing fewer co-scored training questions are skipped.
    format : str, optional
        Score conversion layout; defaults to the dataset's own.
    """

    def __init__(self, n_neighbors=50, min_common=3, format=None):
        self.n_neighbors = n_neighbors
        self.min_common = min_common
        self.format = format

    def fit(self, dataset):
        check_dataset(dataset)
        check_positive_int(self.n_neighbors, "n_neighbors")
        self.scores_ = _by_student(convert_scores(dataset, self.format))
        self.means_ = {s: math.fsum(v.values()) / len(v) for s, v in self.scores_.items()}
        return self

    def neighbors(self, task: RankingTask) -> List[Tuple[Hashable, float]]:
        check_is_fitted(self, "scores_")
        own = {q: v for q, v in self.scores_.get(task.student, {}).items() if q in task.train}
        found = []
        for other in sorted(self.scores_):
            if other == task.student:
                continue
            theirs = self.scores_[other]
            common = sorted(q for q in own if q in theirs)
            if len(common) < self.min_common:
                continue
            r = pearson(np.array([own[q] for q in common]), np.array([theirs[q] for q in common]))
            if r is not None and r > 0:
                found.append((other, r))
        found.sort(key=lambda item: -item[1])
        return found[: self.n_neighbors]

    def predict_scores(self, task: RankingTask) -> Dict[Hashable, float]:
        check_task(task)
        own = [v for q, v in self.scores_.get(task.student, {}).items() if q in task.train]
        if len(own) < 2:
            return {}
        base = math.fsum(own) / len(own)
        neighbors = self.neighbors(task)
        predicted = {}
        for q in sorted(task.test):
            num, den = [], []
            for other, r in neighbors:
                v = self.scores_[other].get(q)
                if v is not None:
                    num.append(r * (v - self.means_[other]))
                    den.append(r)
            if den:
                predicted[q] = base + math.fsum(num) / math.fsum(den)
        return predicted

    def rank(self, task):
        return _rank_predictions(task.test, self.predict_scores(task))


@dataclass
class LatentModel:
    """Biased matrix factorization: mu + b_s + b_q + <p_s, q_q>."""

    student_index: Dict[Hashable, int]
    question_index: Dict[Hashable, int]
    student_factors: np.ndarray
    question_factors: np.ndarray
    global_bias: float
    student_bias: np.ndarray
    question_bias: np.ndarray

    def predict(self, student, question) -> float:
        value = self.global_bias
        s = self.student_index.get(student)
        q = self.question_index.get(question)
        if s is not None:
            value += self.student_bias[s]
        if q is not None:
            value += self.question_bias[q]
        if s is not None and q is not None:
            value += float(self.student_factors[s] @ self.question_factors[q])
        return min(1.0, max(0.0, value))


def mf_train(scores: Mapping, n_factors=20, n_epochs=30, learning_rate=0.01,
             regularization=0.05, seed=0) -> LatentModel:
    """Fit a biased latent factor model by SGD on squared error + L2.

    Deterministic for a fixed ``seed``.  Raises DivergenceError naming the
    first epoch whose loss is not finite.
    """
    if not scores:
        raise ValueError("mf_train needs at least one training score")
    if n_factors < 0:
        raise ValueError("n_factors must be >= 0")
    keys = sorted(scores)
    students = sorted({s for s, _ in keys})
    questions = sorted({q for _, q in keys})
    s_index = {s: i for i, s in enumerate(students)}
    q_index = {q: i for i, q in enumerate(questions)}
    rows = np.array([s_index[s] for s, _ in keys])
    cols = np.array([q_index[q] for _, q in keys])
    values = np.array([scores[k] for k in keys], dtype=float)

    rng = np.random.default_rng(seed)
    P = rng.uniform(-0.01, 0.01, size=(len(students), n_factors))
    Q = rng.uniform(-0.01, 0.01, size=(len(questions), n_factors))
    bu = np.zeros(len(students))
    bi = np.zeros(len(questions))
    mu = float(values.mean())
    lr, reg = learning_rate, regularization

    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, n_epochs + 1):
            for n in rng.permutation(len(values)):
                u, i = rows[n], cols[n]
                pu, qi = P[u], Q[i]
                err = values[n] - (mu + bu[u] + bi[i] + pu @ qi)
                bu[u] += lr * (err - reg * bu[u])
                bi[i] += lr * (err - reg * bi[i])
                P[u] = pu + lr * (err * qi - reg * pu)
                Q[i] = qi + lr * (err * pu - reg * qi)
            resid = values - (mu + bu[rows] + bi[cols] + np.einsum("ij,ij->i", P[rows], Q[cols]))
            loss = float(resid @ resid) + reg * float((P * P).sum() + (Q * Q).sum() + bu @ bu + bi @ bi)
            if not math.isfinite(loss):
                raise DivergenceError(epoch)
    return LatentModel(s_index, q_index, P, Q, mu, bu, bi)


class MFRanker(BaseRanker):
    """Matrix-factorization baseline; see :func:`mf_train` for the model."""

    def __init__(self, n_factors=20, n_epochs=30, learning_rate=0.01,
                 regularization=0.05, seed=0, format=None):
        self.n_factors = n_factors
        self.n_epochs = n_epochs
        self.learning_rate = learning_rate
        self.regularization = regularization
        self.seed = seed
        self.format = format

    def fit(self, dataset):
        check_dataset(dataset)
        self.model_ = mf_train(
            convert_scores(dataset, self.format),
            n_factors=self.n_factors,
            n_epochs=self.n_epochs,
            learning_rate=self.learning_rate,
            regularization=self.regularization,
            seed=self.seed,
        )
        return self

    def predict_scores(self, task):
        check_is_fitted(self, "model_")
        check_task(task)
        return {q: self.model_.predict(task.student, q) for q in task.test}

    def rank(self, task):
        return _rank_predictions(task.test, self.predict_scores(task))


class TopicRanker(BaseRanker):
    """Rank topics by the student's mean training score, weakest topic first.

    Test questions inherit their topic's position; questions from topics the
    student has no training score on go last, all tied.
    """

    def __init__(self, format=None):
        self.format = format

    def fit(self, dataset):
        check_dataset(dataset)
        if not dataset.question_topics:
            raise UnsupportedError("dataset carries no topic information")
        self.topics_ = dict(dataset.question_topics)
        self.scores_ = _by_student(convert_scores(dataset, self.format))
        return self

    def topic_means(self, task) -> Dict[Hashable, float]:
        check_is_fitted(self, "topics_")
        sums = defaultdict(list)
        for q, v in self.scores_.get(task.student, {}).items():
            if q in task.train and q in self.topics_:
                sums[self.topics_[q]].append(v)
        return {t: math.fsum(v) / len(v) for t, v in sums.items()}

    def rank(self, task):
        check_task(task)
        means = self.topic_means(task)
        predicted = {q: means[self.topics_[q]] for q in task.test
                     if self.topics_.get(q) in means}
        return _rank_predictions(task.test, predicted)


class ExpertRanker(BaseRanker):
    """Non-personalized order by expert difficulty level, level 5 first."""

    def fit(self, dataset):
        check_dataset(dataset)
        self.levels_ = dict(dataset.question_levels)
        return self

    def rank(self, task):
        check_is_fitted(self, "levels_")
        check_task(task)
        missing = sorted(q for q in task.test if q not in self.levels_)
        if missing:
            raise UnsupportedError(f"no expert level for {missing!r}")
        return DifficultyRanking.from_scores({q: self.levels_[q] for q in task.test})


def pairwise_potential(questions: Sequence, neighbors: Sequence[Tuple[float, Mapping]]) -> np.ndarray:
    """Entry [k, l] > 0 means neighbours found question k harder than l.

    Each neighbour that scored both questions adds weight * (score_l - score_k).
    The matrix is antisymmetric by construction.
    """
    n = len(questions)
    potential = np.zeros((n, n))
    for weight, scores in neighbors:
        v = np.array([scores.get(q, np.nan) for q in questions], dtype=float)
        diff = v[None, :] - v[:, None]
        potential += weight * np.nan_to_num(diff, nan=0.0)
    return potential


def greedy_order(questions: Sequence, potential: np.ndarray, tol=1e-12) -> DifficultyRanking:
    """Repeatedly emit the question(s) with the largest total outgoing potential."""
    remaining = list(range(len(questions)))
    tiers = []
    while remaining:
        sub = potential[np.ix_(remaining, remaining)]
        totals = sub.sum(axis=1)
        scale = max(1.0, float(np.abs(sub).sum()))
        top = totals.max()
        chosen = [remaining[i] for i in range(len(remaining)) if totals[i] >= top - tol * scale]
        tiers.append([questions[i] for i in chosen])
        remaining = [i for i in remaining if i not in chosen]
    return DifficultyRanking(tiers)


class EigenRankLite(BaseRanker):
    """Simplified pairwise-preference ranker in the spirit of EigenRank.

    Neighbour similarity is Kendall's tau between difficulty rankings over
    co-answered training questions.  The original's stationary-distribution
    step is replaced by greedy aggregation of the pairwise potentials.
    """

    def __init__(self, n_neighbors=50, format=None):
        self.n_neighbors = n_neighbors
        self.format = format

    def fit(self, dataset):
        check_dataset(dataset)
        check_positive_int(self.n_neighbors, "n_neighbors")
        self.scores_ = _by_student(convert_scores(dataset, self.format))
        self.rankings_ = {s: infer_ranking(dataset, s) for s in dataset.students}
        return self

    def neighbors(self, task) -> List[Tuple[Hashable, float]]:
        check_is_fitted(self, "rankings_")
        own = self.rankings_.get(task.student)
        if own is None:
            return []
        own = own.restrict(task.train)
        found = []
        for other in sorted(self.rankings_):
            if other == task.student:
                continue
            try:
                tau = kendall_tau(own, self.rankings_[other], own.questions)
            except UndefinedMetricError:
                continue
            if tau > 0:
                found.append((other, tau))
        found.sort(key=lambda item: -item[1])
        return found[: self.n_neighbors]

    def rank(self, task):
        check_task(task)
        questions = sorted(task.test)
        neighbors = [(tau, self.scores_[other]) for other, tau in self.neighbors(task)]
        return greedy_order(questions, pairwise_potential(questions, neighbors))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def asc_counts(n: int) -> Dict[int, int]:
    counts = {level: _round_half_up(n * p) for level, p in ASC_PROPORTIONS.items() if level != 3}
    counts[3] = n - sum(counts.values())
    return dict(sorted(counts.items()))


def asc_sequence(pool: Mapping[Hashable, int], n: int, seed: int) -> list:
    """Expert sequencing: sample 20/30/40/10 % of ``n`` from levels 1-4.

    Level 5 is never used.  Output is sorted by ascending level.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return []
    rng = random.Random(seed)
    by_level = defaultdict(list)
    for q, level in pool.items():
        by_level[level].append(q)
    sequence = []
    for level, count in asc_counts(n).items():
        available = sorted(by_level.get(level, []))
        if count > len(available):
            raise PoolExhaustedError(level, count, len(available))
        sequence.extend(rng.sample(available, count))
    return sequence
