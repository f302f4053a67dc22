"""Input validation helpers used by the rankers."""

from __future__ import annotations

from sklearn.utils.validation import check_is_fitted

from .core import Dataset
from .exceptions import EmptyDatasetError, EmptyTaskError

__all__ = ["check_dataset", "check_task", "check_is_fitted", "check_positive_int"]


def check_dataset(dataset) -> Dataset:
    if not isinstance(dataset, Dataset):
        raise TypeError(f"expected a Dataset, got {type(dataset).__name__}")
    if len(dataset) == 0:
        raise EmptyDatasetError("dataset has no records")
    return dataset


def check_task(task):
    # late import: base imports this module
    from .base import RankingTask

    if not isinstance(task, RankingTask):
        raise TypeError(f"expected a RankingTask, got {type(task).__name__}")
    if not task.test:
        raise EmptyTaskError(f"task for student {task.student!r} has an empty test set")
    return task


def check_positive_int(value, name, allow_none=False):
    if value is None and allow_none:
        return value
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return value
