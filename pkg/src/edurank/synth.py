"""Seeded synthetic answer logs with clustered difficulty orders.

Students belong to clusters; each cluster has its own hardest-first order
over the questions.  A student's struggle with a question is

    z = difficulty(cluster, question) - skill(student) + noise * Logistic(0, 1)

so the first attempt succeeds with probability logistic((skill - d) / noise).
Attempts, elapsed time and (k12) partial credit are all monotone in ``z``,
which makes the inferred ranking of a noiseless student follow the cluster
order exactly.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import FORMATS, Dataset, ResponseRecord, parse_timestamp

CLUSTER_MODES = ("reversed", "random", "shared")


@dataclass(frozen=True)
class SynthSpec:
    num_students: int = 200
    num_questions: int = 40
    num_topics: int = 4
    num_clusters: int = 2
    # "reversed": odd clusters mirror the base order; "random": independent
    # orders; "shared": base difficulties plus per-cluster gaussian jitter
    cluster_mode: str = "reversed"
    cluster_permutations: Optional[Tuple[Tuple[int, ...], ...]] = None
    cluster_jitter: float = 1.0
    noise: float = 0.1
    guess_prob: float = 0.0
    difficulty_spread: float = 8.0
    skill_sd: float = 0.5
    coverage: float = 1.0
    num_weeks: int = 1
    enroll_weeks: int = 1
    base_seconds: float = 30.0
    retry_step: float = 0.75
    max_attempts: int = 6
    format: str = "pslc"
    origin: str = "2015-01-05T08:00:00"
    seed: int = 0

    def __post_init__(self):
        if self.cluster_permutations is not None:
            perms = tuple(tuple(int(i) for i in p) for p in self.cluster_permutations)
            object.__setattr__(self, "cluster_permutations", perms)
        self.validate()

    def validate(self):
        positive = ("num_students", "num_questions", "num_topics", "num_clusters",
                    "num_weeks", "enroll_weeks", "max_attempts")
        for name in positive:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.cluster_mode not in CLUSTER_MODES:
            raise ValueError(f"cluster_mode must be one of {CLUSTER_MODES}")
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        if self.noise < 0 or self.skill_sd < 0 or self.cluster_jitter < 0:
            raise ValueError("noise, skill_sd and cluster_jitter must be >= 0")
        if not 0 <= self.guess_prob <= 1:
            raise ValueError("guess_prob must lie in [0, 1]")
        if not 0 < self.coverage <= 1:
            raise ValueError("coverage must lie in (0, 1]")
        if self.enroll_weeks > self.num_weeks:
            raise ValueError("enroll_weeks cannot exceed num_weeks")
        if self.retry_step <= 0 or self.base_seconds <= 0:
            raise ValueError("retry_step and base_seconds must be > 0")
        if self.cluster_permutations is not None:
            if len(self.cluster_permutations) != self.num_clusters:
                raise ValueError("need one permutation per cluster")
            for p in self.cluster_permutations:
                if sorted(p) != list(range(self.num_questions)):
                    raise ValueError(f"{p!r} is not a permutation of range({self.num_questions})")
        parse_timestamp(self.origin)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown synth spec keys: {unknown}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if self.cluster_permutations is not None:
            out["cluster_permutations"] = [list(p) for p in self.cluster_permutations]
        return out


@dataclass(frozen=True)
class SynthTruth:
    """Latent structure behind a generated dataset."""

    question_ids: Tuple[str, ...]
    student_ids: Tuple[str, ...]
    cluster_orders: Tuple[Tuple[str, ...], ...]  # hardest first, per cluster
    student_cluster: dict
    enroll_week: dict


def question_id(i: int, n: int) -> str:
    return f"q{i:0{len(str(n))}d}"


def student_id(i: int, n: int) -> str:
    return f"s{i:0{len(str(n))}d}"


def _difficulties(spec: SynthSpec, rng: np.random.Generator) -> List[np.ndarray]:
    n = spec.num_questions
    ladder = np.linspace(spec.difficulty_spread / 2, -spec.difficulty_spread / 2, n)
    if spec.cluster_permutations is not None:
        perms = [np.array(p) for p in spec.cluster_permutations]
    elif spec.cluster_mode == "shared":
        base = ladder[rng.permutation(n)]
        out = []
        for _ in range(spec.num_clusters):
            out.append(base + spec.cluster_jitter * rng.standard_normal(n))
        return out
    elif spec.cluster_mode == "random":
        perms = [rng.permutation(n) for _ in range(spec.num_clusters)]
    else:
        base = rng.permutation(n)
        perms = [base if c % 2 == 0 else base[::-1] for c in range(spec.num_clusters)]
    out = []
    for perm in perms:
        d = np.empty(n)
        d[perm] = ladder
        out.append(d)
    return out


def expert_levels(difficulty: np.ndarray) -> np.ndarray:
    """Quintile of difficulty, 1 (easiest) to 5 (hardest)."""
    n = len(difficulty)
    order = np.argsort(difficulty, kind="stable")
    levels = np.empty(n, dtype=int)
    levels[order] = 1 + (np.arange(n) * 5) // n
    return levels


def generate_with_truth(spec: SynthSpec) -> Tuple[Dataset, SynthTruth]:
    rng = np.random.default_rng(spec.seed)
    n_s, n_q = spec.num_students, spec.num_questions
    qids = tuple(question_id(i, n_q) for i in range(n_q))
    sids = tuple(student_id(i, n_s) for i in range(n_s))

    difficulty = _difficulties(spec, rng)
    levels = expert_levels(difficulty[0])
    topics = [f"t{(i * spec.num_topics) // n_q + 1}" for i in range(n_q)]

    clusters = rng.permutation(np.arange(n_s) % spec.num_clusters)
    skills = spec.skill_sd * rng.standard_normal(n_s)
    noise = spec.noise * rng.logistic(size=(n_s, n_q))
    guesses = rng.random((n_s, n_q)) < spec.guess_prob
    enroll = rng.integers(1, spec.enroll_weeks + 1, size=n_s)
    n_answered = max(1, round(spec.coverage * n_q))
    origin = parse_timestamp(spec.origin)
    horizon = spec.num_weeks * 7 * 86400

    records = []
    for s in range(n_s):
        c = clusters[s]
        z = difficulty[c] - skills[s] + noise[s]
        answered = rng.permutation(n_q)[:n_answered]
        start = (int(enroll[s]) - 1) * 7 * 86400
        offsets = np.sort(rng.integers(start, horizon - 3600, size=n_answered))
        for q, offset in zip(answered, offsets):
            records.extend(_attempts(spec, sids[s], qids[q], z[q], bool(guesses[s, q]),
                                     origin + timedelta(seconds=int(offset)),
                                     topics[q], int(levels[q])))

    truth = SynthTruth(
        question_ids=qids,
        student_ids=sids,
        cluster_orders=tuple(tuple(qids[i] for i in np.argsort(-d, kind="stable")) for d in difficulty),
        student_cluster={sids[s]: int(clusters[s]) for s in range(n_s)},
        enroll_week={sids[s]: int(enroll[s]) for s in range(n_s)},
    )
    return Dataset(records, format=spec.format), truth


def _attempts(spec, sid, qid, z, guessed, when: datetime, topic, level):
    first_ok = z < 0 or guessed
    if first_ok:
        n_attempts = 1
        first_grade = 1.0
    else:
        n_attempts = min(spec.max_attempts, 2 + int(math.floor(z / spec.retry_step)))
        # partial credit shrinks as the struggle grows
        first_grade = math.floor(10 * (1 - 1 / (1 + math.exp(-2 * z)))) / 10
    total = spec.base_seconds * math.exp(min(z, 50.0))
    per_attempt = round(total / n_attempts, 3)
    pslc = spec.format == "pslc"
    out = []
    for a in range(1, n_attempts + 1):
        if a == 1:
            grade = first_grade if not pslc else float(first_ok)
        else:
            grade = 1.0 if a == n_attempts else 0.0
        out.append(ResponseRecord(
            sid, qid, a, grade,
            elapsed_seconds=per_attempt if pslc else None,
            timestamp=when + timedelta(seconds=int((a - 1) * (per_attempt + 1))),
            topic_id=topic,
            expert_level=level,
        ))
    return out


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Deterministic synthetic dataset for ``spec``."""
    return generate_with_truth(spec)[0]
