"""Estimator base class shared by every ranker."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, List

from sklearn.base import BaseEstimator

from .core import Dataset, DifficultyRanking


@dataclass(frozen=True)
class RankingTask:
    """Rank ``test`` for ``student`` knowing only their answers on ``train``."""

    student: Hashable
    train: frozenset
    test: frozenset

    def __post_init__(self):
        object.__setattr__(self, "train", frozenset(self.train))
        object.__setattr__(self, "test", frozenset(self.test))
        overlap = self.train & self.test
        if overlap:
            raise ValueError(f"train and test sets overlap on {sorted(overlap)!r}")


class BaseRanker(BaseEstimator):
    """Fit on a training :class:`Dataset`, then rank the test set of a task.

    Subclasses implement :meth:`fit` and :meth:`rank`.  ``rank`` may only use
    the target student's answers on ``task.train``; everything the fitted
    dataset holds about other students is fair game.
    """

    def fit(self, dataset: Dataset) -> "BaseRanker":
        raise NotImplementedError

    def rank(self, task: RankingTask) -> DifficultyRanking:
        raise NotImplementedError

    def predict(self, tasks: Iterable[RankingTask]) -> List[DifficultyRanking]:
        return [self.rank(t) for t in tasks]

    def fit_predict(self, dataset: Dataset, tasks: Iterable[RankingTask]) -> List[DifficultyRanking]:
        return self.fit(dataset).predict(tasks)
