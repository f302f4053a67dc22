"""Domain types, answer-log ingestion and gold-standard difficulty rankings.

A student's difficulty ranking is inferred from three signals per answered
question: the grade on the first attempt, the number of attempts and the
total time spent.  Lower grades, more attempts and more time all mean the
question was harder for that student.  Questions that cannot be told apart
share a tier.
"""

from __future__ import annotations

import csv
import enum
import io
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime
from itertools import groupby
from types import MappingProxyType
from typing import Callable, Hashable, Iterable, Iterator, Mapping, NamedTuple, Optional, TextIO

from .exceptions import DuplicateKeyError, EmptyDatasetError, NotFoundError, ParseError

FORMATS = ("pslc", "k12")

PSLC_COLUMNS = (
    "student_id",
    "question_id",
    "attempt_index",
    "correct",
    "elapsed_seconds",
    "timestamp",
)
K12_COLUMNS = (
    "student_id",
    "question_id",
    "attempt_index",
    "grade",
    "timestamp",
    "topic_id",
    "expert_level",
)
COLUMNS = {"pslc": PSLC_COLUMNS, "k12": K12_COLUMNS}


class Relation(enum.Enum):
    """Order relation between two questions under one ranking."""

    PRECEDES = "precedes"  # harder
    SUCCEEDS = "succeeds"  # easier
    TIED = "tied"
    UNORDERED = "unordered"  # at least one question unranked


@dataclass(frozen=True)
class ResponseRecord:
    """One answer attempt."""

    student_id: str
    question_id: str
    attempt_index: int
    grade: float
    elapsed_seconds: Optional[float] = None
    timestamp: Optional[datetime] = None
    topic_id: Optional[str] = None
    expert_level: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.grade <= 1.0:
            raise ValueError(f"grade {self.grade!r} outside [0, 1]")
        if self.attempt_index < 1:
            raise ValueError(f"attempt_index {self.attempt_index!r} < 1")
        if self.elapsed_seconds is not None and not self.elapsed_seconds >= 0:
            raise ValueError(f"elapsed_seconds {self.elapsed_seconds!r} < 0")
        if self.expert_level is not None and self.expert_level not in range(1, 6):
            raise ValueError(f"expert_level {self.expert_level!r} outside 1..5")

    @property
    def key(self):
        return (self.student_id, self.question_id, self.attempt_index)


@dataclass(frozen=True)
class StudentQuestionSummary:
    """Everything a student did on one question, collapsed."""

    first_attempt_grade: float
    num_attempts: int
    total_elapsed_seconds: Optional[float] = None
    first_timestamp: Optional[datetime] = None

    @property
    def correct_first_attempt(self) -> bool:
        return self.first_attempt_grade == 1.0 and self.num_attempts == 1

    @classmethod
    def from_records(cls, records: Iterable[ResponseRecord]) -> "StudentQuestionSummary":
        ordered = sorted(records, key=lambda r: r.attempt_index)
        if not ordered:
            raise ValueError("cannot summarize an empty record set")
        elapsed = [r.elapsed_seconds for r in ordered]
        stamps = [r.timestamp for r in ordered if r.timestamp is not None]
        return cls(
            first_attempt_grade=ordered[0].grade,
            num_attempts=len(ordered),
            # no imputation: a single missing attempt time voids the total
            total_elapsed_seconds=None if None in elapsed else float(sum(elapsed)),
            first_timestamp=min(stamps) if stamps else None,
        )


class DifficultyRanking:
    """A total preorder over a set of questions, hardest tier first.

    Restricting to a subset keeps the relative tier order; asking about a
    question outside the ranking yields :attr:`Relation.UNORDERED`.
    """

    __slots__ = ("tiers", "membership")

    def __init__(self, tiers: Iterable[Iterable[Hashable]]):
        frozen = tuple(frozenset(t) for t in tiers)
        membership = {}
        for index, tier in enumerate(frozen):
            if not tier:
                raise ValueError("tiers must be non-empty")
            for q in tier:
                if q in membership:
                    raise ValueError(f"question {q!r} appears in more than one tier")
                membership[q] = index
        self.tiers = frozen
        self.membership = MappingProxyType(membership)

    def __reduce__(self):
        return (type(self), (self.tiers,))

    @classmethod
    def from_order(cls, questions: Iterable[Hashable]) -> "DifficultyRanking":
        """Strict ranking from a hardest-first sequence."""
        return cls([q] for q in questions)

    @classmethod
    def from_scores(cls, scores: Mapping[Hashable, float], descending: bool = True) -> "DifficultyRanking":
        """Group questions by exact score; the largest score is hardest when
        ``descending`` is true, the smallest otherwise."""
        sign = -1.0 if descending else 1.0
        items = sorted(scores.items(), key=lambda kv: sign * kv[1])
        return cls(
            [q for q, _ in group]
            for _, group in groupby(items, key=lambda kv: kv[1])
        )

    @property
    def questions(self) -> frozenset:
        return frozenset(self.membership)

    def __len__(self):
        return len(self.membership)

    def __contains__(self, q):
        return q in self.membership

    def __iter__(self) -> Iterator[Hashable]:
        return iter(self.linearize())

    def __eq__(self, other):
        if not isinstance(other, DifficultyRanking):
            return NotImplemented
        return self.tiers == other.tiers

    def __hash__(self):
        return hash(self.tiers)

    def __repr__(self):
        body = " > ".join(
            "{" + ", ".join(map(str, sorted(t))) + "}" if len(t) > 1 else str(next(iter(t)))
            for t in self.tiers
        )
        return f"DifficultyRanking({body})"

    @property
    def is_strict(self) -> bool:
        return all(len(t) == 1 for t in self.tiers)

    def tier_of(self, q) -> Optional[int]:
        return self.membership.get(q)

    def relation(self, a, b) -> Relation:
        ta = self.membership.get(a)
        tb = self.membership.get(b)
        if ta is None or tb is None:
            return Relation.UNORDERED
        if ta < tb:
            return Relation.PRECEDES
        if ta > tb:
            return Relation.SUCCEEDS
        return Relation.TIED

    def harder(self, a, b) -> bool:
        return self.relation(a, b) is Relation.PRECEDES

    def restrict(self, questions: Iterable[Hashable]) -> "DifficultyRanking":
        keep = set(questions)
        return DifficultyRanking(t & keep for t in self.tiers if t & keep)

    def reversed(self) -> "DifficultyRanking":
        return DifficultyRanking(reversed(self.tiers))

    def linearize(self) -> list:
        """Tier order with ties broken by ascending question identifier."""
        return [q for tier in self.tiers for q in sorted(tier)]


class DifficultyKey(NamedTuple):
    """Sort key, ascending = harder.  ``neg_elapsed`` is None when unknown."""

    grade: float
    neg_attempts: int
    neg_elapsed: Optional[float]


def difficulty_key(summary: StudentQuestionSummary) -> DifficultyKey:
    elapsed = summary.total_elapsed_seconds
    return DifficultyKey(
        summary.first_attempt_grade,
        -summary.num_attempts,
        None if elapsed is None else -elapsed,
    )


def compare_difficulty(a: StudentQuestionSummary, b: StudentQuestionSummary) -> int:
    """+1 if ``a`` was harder, -1 if ``b`` was harder, 0 if tied.

    Elapsed time only breaks ties when both sides have it.
    """
    ka, kb = difficulty_key(a), difficulty_key(b)
    for x, y in ((ka.grade, kb.grade), (ka.neg_attempts, kb.neg_attempts)):
        if x != y:
            return 1 if x < y else -1
    if ka.neg_elapsed is None or kb.neg_elapsed is None or ka.neg_elapsed == kb.neg_elapsed:
        return 0
    return 1 if ka.neg_elapsed < kb.neg_elapsed else -1


def ranking_from_summaries(summaries: Mapping[Hashable, StudentQuestionSummary]) -> DifficultyRanking:
    """Rank questions hardest first by grade, then attempts, then elapsed time.

    Elapsed time splits a (grade, attempts) group only when every member of
    the group has it; otherwise the group stays one tier so that the result
    remains a transitive preorder.
    """
    by_coarse = defaultdict(list)
    for q, s in summaries.items():
        k = difficulty_key(s)
        by_coarse[(k.grade, k.neg_attempts)].append((q, k.neg_elapsed))
    tiers = []
    for coarse in sorted(by_coarse):
        members = by_coarse[coarse]
        if any(e is None for _, e in members):
            tiers.append([q for q, _ in members])
            continue
        members.sort(key=lambda m: m[1])
        for _, group in groupby(members, key=lambda m: m[1]):
            tiers.append([q for q, _ in group])
    return DifficultyRanking(tiers)


class Dataset:
    """Immutable collection of answer records with per-student indexes."""

    def __init__(self, records: Iterable[ResponseRecord], format: Optional[str] = None):
        if format is not None and format not in FORMATS:
            raise ValueError(f"unknown format {format!r}")
        records = sorted(records, key=lambda r: r.key)
        seen = set()
        grouped = defaultdict(list)
        topics, levels = {}, {}
        for r in records:
            if r.key in seen:
                raise DuplicateKeyError(f"duplicate key {r.key!r}")
            seen.add(r.key)
            grouped[(r.student_id, r.question_id)].append(r)
            if r.topic_id is not None:
                topics.setdefault(r.question_id, r.topic_id)
            if r.expert_level is not None:
                levels.setdefault(r.question_id, r.expert_level)

        by_student = defaultdict(dict)
        summaries = {}
        for (s, q), recs in grouped.items():
            summary = StudentQuestionSummary.from_records(recs)
            summaries[(s, q)] = summary
            by_student[s][q] = summary

        self.format = format
        self.records = tuple(records)
        self.students = tuple(sorted(by_student))
        self.questions = tuple(sorted({q for _, q in summaries}))
        self.summaries = MappingProxyType(summaries)
        self._by_student = {s: MappingProxyType(d) for s, d in by_student.items()}
        self.question_topics = MappingProxyType(topics)
        self.question_levels = MappingProxyType(levels)

    def __len__(self):
        return len(self.records)

    def __repr__(self):
        return (
            f"Dataset(records={len(self.records)}, students={len(self.students)}, "
            f"questions={len(self.questions)}, format={self.format!r})"
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.records == other.records and self.format == other.format

    __hash__ = None

    def __reduce__(self):
        return (type(self), (self.records, self.format))

    def __contains__(self, student):
        return student in self._by_student

    def student_summaries(self, student) -> Mapping[Hashable, StudentQuestionSummary]:
        try:
            return self._by_student[student]
        except KeyError:
            raise NotFoundError(f"unknown student {student!r}") from None

    def answered(self, student) -> frozenset:
        return frozenset(self._by_student.get(student, ()))

    @property
    def has_timestamps(self) -> bool:
        return bool(self.records) and all(r.timestamp is not None for r in self.records)

    def filter(self, predicate: Callable[[ResponseRecord], bool]) -> "Dataset":
        return Dataset((r for r in self.records if predicate(r)), format=self.format)

    def select(self, pairs: Iterable[tuple]) -> "Dataset":
        """Keep only records whose (student, question) is in ``pairs``."""
        keep = set(pairs)
        return self.filter(lambda r: (r.student_id, r.question_id) in keep)


def infer_ranking(dataset: Dataset, student) -> DifficultyRanking:
    """Gold-standard difficulty ranking of everything ``student`` answered."""
    return ranking_from_summaries(dataset.student_summaries(student))


def _parse_optional(text, convert):
    text = text.strip()
    return convert(text) if text else None


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def _parse_row(row, fmt):
    student, question, attempt = row[0].strip(), row[1].strip(), int(row[2])
    if fmt == "pslc":
        correct = row[3].strip()
        if correct not in ("0", "1"):
            raise ValueError(f"correct must be 0 or 1, got {correct!r}")
        return ResponseRecord(
            student,
            question,
            attempt,
            float(correct),
            elapsed_seconds=_parse_optional(row[4], float),
            timestamp=_parse_optional(row[5], parse_timestamp),
        )
    return ResponseRecord(
        student,
        question,
        attempt,
        float(row[3]),
        timestamp=_parse_optional(row[4], parse_timestamp),
        topic_id=_parse_optional(row[5], str),
        expert_level=_parse_optional(row[6], int),
    )


def ingest_log(source: TextIO | str, format: str) -> Dataset:
    """Parse a comma-delimited answer log in one of the two supported layouts.

    ``source`` is an open text stream or a string holding the whole file.
    Raises :class:`ParseError` (with the 1-based line number) for malformed
    rows, :class:`DuplicateKeyError` for repeated (student, question,
    attempt) keys and :class:`EmptyDatasetError` when there are no rows.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise EmptyDatasetError("empty input")
    expected = COLUMNS[format]
    if tuple(h.strip() for h in header) != expected:
        raise ParseError(f"header {header!r} does not match {format} columns {expected!r}", line=1)

    records = []
    seen = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(expected):
            raise ParseError(f"expected {len(expected)} fields, got {len(row)}", line=line)
        try:
            record = _parse_row(row, format)
        except ValueError as exc:
            raise ParseError(str(exc), line=line) from None
        if record.key in seen:
            raise DuplicateKeyError(
                f"duplicate key {record.key!r} (first seen on line {seen[record.key]})",
                line=line,
            )
        seen[record.key] = line
        records.append(record)
    if not records:
        raise EmptyDatasetError("no data rows")
    return Dataset(records, format=format)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_log(dataset: Dataset, stream: TextIO, format: Optional[str] = None) -> None:
    """Write ``dataset`` in an ingestion layout (default: its own)."""
    fmt = format or dataset.format
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(COLUMNS[fmt])
    for r in dataset.records:
        if fmt == "pslc":
            row = (r.student_id, r.question_id, r.attempt_index,
                   int(r.grade == 1.0), r.elapsed_seconds, r.timestamp)
        else:
            row = (r.student_id, r.question_id, r.attempt_index,
                   r.grade, r.timestamp, r.topic_id, r.expert_level)
        writer.writerow([_fmt(v) for v in row])
