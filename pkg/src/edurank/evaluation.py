"""Offline experiment harnesses.

Every ranker is scored against each student's gold-standard ranking on the
student's test questions.  Means and deviations use exact summation, so the
numbers do not depend on the order tasks finish in or the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

from sklearn.base import clone

from .base import BaseRanker, RankingTask
from .copeland import EduRankRanker
from .core import Dataset, DifficultyRanking, infer_ranking
from .exceptions import EduRankError, RangeError, UndefinedMetricError, UnsupportedError
from .metrics import ap_score, ndpm

METRICS = {"ap": ap_score, "ndpm": ndpm}
REPORT_HEADER = ("ranker", "metric", "mean", "std", "n_students")
COLDSTART_HEADER = ("window", "test_week", "n_students", "new_student_fraction",
                    "edurank_ap", "edurank_prior_ap")


@dataclass(frozen=True)
class SplitSpec:
    """``kind="half"``: per-student temporal halves; ``kind="weekly"``:
    train on weeks ``training_weeks`` (inclusive), test on ``test_week``."""

    kind: str = "half"
    training_weeks: Tuple[int, int] = (1, 1)
    test_week: int = 41
    origin: Optional[datetime] = None
    min_answers: int = 4

    def __post_init__(self):
        if self.kind not in ("half", "weekly"):
            raise ValueError(f"unknown split kind {self.kind!r}")
        a, b = self.training_weeks
        if self.kind == "weekly" and not 1 <= a <= b < self.test_week:
            raise ValueError(f"bad window {self.training_weeks!r} for test week {self.test_week}")


@dataclass(frozen=True)
class Split:
    tasks: Tuple[RankingTask, ...]
    training: Dataset
    new_student_fraction: Optional[float] = None
    skipped: Tuple[Hashable, ...] = ()


def week_origin(dataset: Dataset) -> datetime:
    """Midnight of the Monday on or before the earliest timestamp."""
    first = min(r.timestamp for r in dataset.records)
    day = first.replace(hour=0, minute=0, second=0, microsecond=0)
    return day - timedelta(days=day.weekday())


def week_of(ts: datetime, origin: datetime) -> int:
    return (ts - origin).days // 7 + 1


def temporal_split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> Split:
    if not dataset.has_timestamps:
        raise UnsupportedError("temporal split needs a timestamp on every record")
    if spec.kind == "half":
        return _half_split(dataset, spec)
    return _weekly_split(dataset, spec)


def _half_split(dataset, spec):
    tasks, train_pairs, skipped = [], [], []
    for s in dataset.students:
        summaries = dataset.student_summaries(s)
        ordered = sorted(summaries, key=lambda q: (summaries[q].first_timestamp, q))
        if len(ordered) < spec.min_answers:
            skipped.append(s)
            train_pairs.extend((s, q) for q in ordered)
            continue
        # odd counts put the extra question in the test half
        cut = len(ordered) // 2
        tasks.append(RankingTask(s, ordered[:cut], ordered[cut:]))
        train_pairs.extend((s, q) for q in ordered[:cut])
    return Split(tuple(tasks), dataset.select(train_pairs), None, tuple(skipped))


def _weekly_split(dataset, spec):
    origin = spec.origin or week_origin(dataset)
    weeks = {key: week_of(s.first_timestamp, origin) for key, s in dataset.summaries.items()}
    last = max(weeks.values())
    first_week, last_week = spec.training_weeks
    if spec.test_week > last or first_week < 1:
        raise RangeError(f"weeks {first_week}-{last_week}/{spec.test_week} outside data range 1-{last}")
    train_pairs = [k for k, w in weeks.items() if first_week <= w <= last_week]
    if not train_pairs:
        raise RangeError(f"no records in training weeks {first_week}-{last_week}")
    trained = {}
    for s, q in train_pairs:
        trained.setdefault(s, set()).add(q)
    tasks = []
    for s in dataset.students:
        train = trained.get(s, set())
        test = {q for q in dataset.answered(s) if weeks[(s, q)] == spec.test_week} - train
        if len(test) >= 2:
            tasks.append(RankingTask(s, train, test))
    new = sum(1 for t in tasks if not t.train)
    fraction = new / len(tasks) if tasks else None
    return Split(tuple(tasks), dataset.select(train_pairs), fraction)


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


@dataclass
class EvalReport:
    """Per-student metric values for each ranker, plus bookkeeping."""

    rankers: List[str]
    metrics: List[str]
    scores: Dict[str, Dict[str, Dict[Hashable, float]]]
    failures: Dict[str, Dict[Hashable, str]] = field(default_factory=dict)
    seconds_per_student: Dict[str, float] = field(default_factory=dict)
    n_tasks: int = 0
    new_student_fraction: Optional[float] = None

    def values(self, ranker, metric) -> List[float]:
        per_student = self.scores[ranker][metric]
        return [per_student[s] for s in sorted(per_student)]

    def mean(self, ranker, metric) -> float:
        values = self.values(ranker, metric)
        return _mean_std(values)[0] if values else math.nan

    def std(self, ranker, metric) -> float:
        values = self.values(ranker, metric)
        return _mean_std(values)[1] if values else math.nan

    def n_students(self, ranker, metric) -> int:
        return len(self.scores[ranker][metric])

    def rows(self) -> List[tuple]:
        out = []
        for r in self.rankers:
            for m in self.metrics:
                out.append((r, m, self.mean(r, m), self.std(r, m), self.n_students(r, m)))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for r, m, mean, std, n in self.rows():
            writer.writerow([r, m, f"{mean:.6f}", f"{std:.6f}", n])
        return buf.getvalue()

    def per_student_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("ranker", "metric", "student_id", "value"))
        for r in self.rankers:
            for m in self.metrics:
                for s in sorted(self.scores[r][m]):
                    writer.writerow([r, m, s, repr(self.scores[r][m][s])])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"{self.n_tasks} students evaluated"]
        if self.new_student_fraction is not None:
            lines.append(f"new-student fraction: {self.new_student_fraction:.3f}")
        for r in self.rankers:
            parts = [f"{m.upper()} {self.mean(r, m):.4f} (n={self.n_students(r, m)})" for m in self.metrics]
            failed = len(self.failures.get(r, {}))
            timing = self.seconds_per_student.get(r)
            extra = f", {timing * 1000:.1f} ms/student" if timing is not None else ""
            extra += f", {failed} failed" if failed else ""
            lines.append(f"  {r:<16} " + "  ".join(parts) + extra)
        return "\n".join(lines)


def _score_one(task: RankingTask, rankers: Mapping[str, BaseRanker], gold: DifficultyRanking, metrics):
    """(ranker -> metric -> value | None, ranker -> error, ranker -> seconds)."""
    values, errors, timings = {}, {}, {}
    for name, ranker in rankers.items():
        start = time.perf_counter()
        try:
            proposed = ranker.rank(task)
        except (EduRankError, ValueError) as exc:
            errors[name] = f"{type(exc).__name__}: {exc}"
            continue
        finally:
            timings[name] = time.perf_counter() - start
        row = {}
        for m in metrics:
            try:
                row[m] = METRICS[m](gold, proposed, task.test)
            except UndefinedMetricError:
                row[m] = None
        values[name] = row
    return task.student, values, errors, timings


_WORKER = {}


def _init_worker(rankers, gold, metrics):
    _WORKER.update(rankers=rankers, gold=gold, metrics=metrics)


def _worker_task(task):
    gold = infer_ranking(_WORKER["gold"], task.student).restrict(task.test)
    return _score_one(task, _WORKER["rankers"], gold, _WORKER["metrics"])


def _collect(results, rankers, metrics, n_tasks, new_fraction=None) -> EvalReport:
    report = EvalReport(
        rankers=list(rankers),
        metrics=list(metrics),
        scores={r: {m: {} for m in metrics} for r in rankers},
        failures={r: {} for r in rankers},
        n_tasks=n_tasks,
        new_student_fraction=new_fraction,
    )
    totals = {r: [] for r in rankers}
    for student, values, errors, timings in results:
        for r, row in values.items():
            for m, v in row.items():
                if v is not None:
                    report.scores[r][m][student] = v
        for r, msg in errors.items():
            report.failures[r][student] = msg
        for r, sec in timings.items():
            totals[r].append(sec)
    report.seconds_per_student = {r: (sum(v) / len(v) if v else 0.0) for r, v in totals.items()}
    return report


def _run(fn, items, workers, initializer=None, initargs=()):
    if workers is None or workers <= 1 or len(items) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers, initializer=initializer, initargs=initargs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def evaluate(tasks: Sequence[RankingTask], rankers: Mapping[str, BaseRanker], gold: Dataset,
             training: Optional[Dataset] = None, metrics: Iterable[str] = ("ap", "ndpm"),
             workers: int = 1, new_student_fraction: Optional[float] = None) -> EvalReport:
    """Score every ranker on every task against ``gold``'s inferred rankings.

    When ``training`` is given, each ranker is cloned and fitted on it first;
    otherwise the rankers must already be fitted.  A ranker that raises on a
    task is recorded as a failure for that student and left out of the means.
    """
    metrics = list(metrics)
    unknown = [m for m in metrics if m not in METRICS]
    if unknown:
        raise ValueError(f"unknown metrics {unknown!r}")
    if not rankers:
        raise ValueError("no rankers to evaluate")
    if training is not None:
        rankers = {name: clone(r).fit(training) for name, r in rankers.items()}
    tasks = sorted(tasks, key=lambda t: t.student)
    results = _run(_worker_task, tasks, workers, _init_worker, (dict(rankers), gold, metrics))
    return _collect(results, rankers, metrics, len(tasks), new_student_fraction)


def evaluate_split(dataset: Dataset, rankers: Mapping[str, BaseRanker], spec: SplitSpec = SplitSpec(),
                   metrics=("ap", "ndpm"), workers: int = 1) -> EvalReport:
    split = temporal_split(dataset, spec)
    return evaluate(split.tasks, rankers, dataset, split.training, metrics, workers,
                    split.new_student_fraction)


def topic_agreement(dataset: Dataset, topic, seed: int) -> float:
    """Mean AP of every qualifying student against one seeded-random student.

    Qualifying students answered every question of ``topic``.
    """
    questions = {q for q, t in dataset.question_topics.items() if t == topic}
    if len(questions) < 2:
        raise UndefinedMetricError(f"topic {topic!r} has fewer than two questions")
    qualifying = [s for s in dataset.students if questions <= dataset.answered(s)]
    if len(qualifying) < 2:
        raise UndefinedMetricError(f"fewer than two students answered all of topic {topic!r}")
    rng = random.Random(seed)
    reference_student = rng.choice(qualifying)
    reference = infer_ranking(dataset, reference_student).restrict(questions)
    values = [
        ap_score(reference, infer_ranking(dataset, s).restrict(questions), questions)
        for s in qualifying
        if s != reference_student
    ]
    return math.fsum(values) / len(values)


def agreement_table(dataset: Dataset, seed: int) -> List[tuple]:
    """(topic, n_questions, n_students, ap) for topics with two qualifying students."""
    rows = []
    for topic in sorted(set(dataset.question_topics.values())):
        questions = {q for q, t in dataset.question_topics.items() if t == topic}
        n_students = sum(1 for s in dataset.students if questions <= dataset.answered(s))
        try:
            ap = topic_agreement(dataset, topic, seed)
        except UndefinedMetricError:
            continue
        rows.append((topic, len(questions), n_students, ap))
    return rows


def coldstart_rankers(n_neighbors=50) -> Dict[str, BaseRanker]:
    return {
        "edurank": EduRankRanker(n_neighbors=n_neighbors),
        "edurank+prior": EduRankRanker(n_neighbors=n_neighbors, use_prior=True),
    }


def _removal_job(job):
    task, training, gold, rankers = job
    fitted = {name: clone(r).fit(training) for name, r in rankers.items()}
    return _score_one(task, fitted, gold, ["ap"])


def coldstart_removal(dataset: Dataset, n_targets: int = 50, removal: float = 0.9, seed: int = 0,
                      n_neighbors: int = 50, workers: int = 1) -> EvalReport:
    """Hide most of some students' training answers and compare EduRank with
    and without the prior on them.

    The base protocol is the per-student temporal half split.  ``n_targets``
    students are drawn with ``seed``; for each, ``removal`` of their training
    questions (rounded) are dropped from both the task and the training data
    the rankers are fitted on, while other students keep everything.
    """
    if not 0 <= removal <= 1:
        raise ValueError("removal must lie in [0, 1]")
    split = temporal_split(dataset, SplitSpec("half"))
    rng = random.Random(seed)
    tasks = sorted(split.tasks, key=lambda t: t.student)
    targets = rng.sample(tasks, min(n_targets, len(tasks)))
    rankers = coldstart_rankers(n_neighbors)
    jobs = []
    for task in sorted(targets, key=lambda t: t.student):
        train = sorted(task.train)
        keep = set(rng.sample(train, len(train) - round(removal * len(train))))
        dropped = {(task.student, q) for q in train if q not in keep}
        training = split.training.filter(lambda r, d=dropped: (r.student_id, r.question_id) not in d)
        gold = infer_ranking(dataset, task.student).restrict(task.test)
        jobs.append((RankingTask(task.student, keep, task.test), training, gold, rankers))
    results = _run(_removal_job, jobs, workers)
    return _collect(results, rankers, ["ap"], len(jobs))


@dataclass(frozen=True)
class ColdStartRow:
    window: Tuple[int, int]
    test_week: int
    n_students: int
    new_student_fraction: float
    edurank_ap: float
    edurank_prior_ap: float

    def as_csv_row(self):
        a, b = self.window
        return [f"{a}-{b}", self.test_week, self.n_students, f"{self.new_student_fraction:.6f}",
                f"{self.edurank_ap:.6f}", f"{self.edurank_prior_ap:.6f}"]


def coldstart_windows(dataset: Dataset, windows: Sequence[Tuple[int, int]], test_week: int,
                      n_neighbors: int = 50, workers: int = 1,
                      origin: Optional[datetime] = None) -> List[ColdStartRow]:
    """One row per training window, testing on ``test_week``."""
    rows = []
    for window in windows:
        spec = SplitSpec("weekly", tuple(window), test_week, origin)
        split = temporal_split(dataset, spec)
        if not split.tasks:
            raise RangeError(f"no student has two test questions in week {test_week}")
        report = evaluate(split.tasks, coldstart_rankers(n_neighbors), dataset, split.training,
                          ["ap"], workers, split.new_student_fraction)
        rows.append(ColdStartRow(tuple(window), test_week, report.n_tasks,
                                 split.new_student_fraction,
                                 report.mean("edurank", "ap"), report.mean("edurank+prior", "ap")))
    return rows


def coldstart_csv(rows: Sequence[ColdStartRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLDSTART_HEADER)
    for row in rows:
        writer.writerow(row.as_csv_row())
    return buf.getvalue()


def _rank_job(task):
    ranker = _WORKER["ranker"]
    scores = ranker.copeland_scores(task) if hasattr(ranker, "copeland_scores") else None
    ranking = DifficultyRanking.from_scores(scores) if scores is not None else ranker.rank(task)
    return task.student, ranking, scores


def _init_rank_worker(ranker):
    _WORKER["ranker"] = ranker


def rank_tasks(tasks: Sequence[RankingTask], ranker: BaseRanker, workers: int = 1):
    """[(student, ranking, copeland scores or None)] in student order for a fitted ranker."""
    tasks = sorted(tasks, key=lambda t: t.student)
    return _run(_rank_job, tasks, workers, _init_rank_worker, (ranker,))
