"""Exception hierarchy shared by every module of the package."""


class EduRankError(Exception):
    """Base class for all package errors."""


class ParseError(EduRankError, ValueError):
    """A log row could not be parsed or violates a record invariant."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateKeyError(ParseError):
    """Two rows share the same (student, question, attempt) key."""


class EmptyDatasetError(EduRankError, ValueError):
    pass


class NotFoundError(EduRankError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class UndefinedMetricError(EduRankError, ValueError):
    """The metric has no defined value on the given inputs."""


class MissingRankError(EduRankError, ValueError):
    """A question in scope is not ranked by the proposed ranking."""


class EmptyTaskError(EduRankError, ValueError):
    pass


class UnsupportedError(EduRankError, ValueError):
    """The data lacks a feature that the requested operation needs."""


class DivergenceError(EduRankError, ArithmeticError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"training diverged: non-finite loss at epoch {epoch}")


class PoolExhaustedError(EduRankError, ValueError):
    def __init__(self, level, needed, available):
        self.level = level
        super().__init__(
            f"pool exhausted at level {level}: need {needed}, have {available}"
        )


class RangeError(EduRankError, ValueError):
    """A requested time window lies outside the data."""
