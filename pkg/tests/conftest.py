from datetime import datetime, timedelta

import pytest

from edurank import Dataset, ResponseRecord

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


T0 = datetime(2015, 1, 5, 8, 0, 0)


def make_records(student, rows, start=T0):
    """rows: (question, grade, attempts[, elapsed per attempt]) in answer order."""
    out = []
    for i, row in enumerate(rows):
        q, grade, attempts = row[:3]
        elapsed = row[3] if len(row) > 3 else None
        for a in range(1, attempts + 1):
            out.append(ResponseRecord(
                student, q, a, grade if a == 1 else 1.0,
                elapsed_seconds=elapsed,
                timestamp=start + timedelta(hours=i, minutes=a),
            ))
    return out


@pytest.fixture
def tiny_dataset():
    records = (
        make_records("s1", [("q1", 0.0, 2), ("q2", 1.0, 1), ("q3", 1.0, 3)])
        + make_records("s2", [("q1", 1.0, 1), ("q2", 0.0, 4)])
    )
    return Dataset(records, format="k12")


# students enroll across 41 weeks, so almost nobody active in week 41 was seen in week 1
WEEKLY_SPEC = dict(num_students=600, num_questions=200, coverage=0.5, num_weeks=41,
                   enroll_weeks=41, format="k12", seed=2)
