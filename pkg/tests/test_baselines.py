import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edurank import (
    Dataset,
    DifficultyRanking,
    EigenRankLite,
    ExpertRanker,
    MFRanker,
    RankingTask,
    ResponseRecord,
    TopicRanker,
    UBCFRanker,
    asc_sequence,
    convert_scores,
    mf_train,
)
from edurank.baselines import asc_counts, greedy_order, pairwise_potential, pearson
from edurank.exceptions import DivergenceError, PoolExhaustedError, UnsupportedError

from conftest import make_records


def k12(student, rows, topics=None, levels=None):
    """rows: (question, first grade, attempts)."""
    out = []
    for q, grade, attempts in rows:
        for a in range(1, attempts + 1):
            out.append(ResponseRecord(student, q, a, grade if a == 1 else 1.0,
                                      topic_id=(topics or {}).get(q), expert_level=(levels or {}).get(q)))
    return out


def scored(student, scores):
    """Records whose converted k12 score equals ``scores[q]`` (single attempt)."""
    return k12(student, [(q, v, 1) for q, v in scores.items()])


class TestConvertScores:
    def test_retry_penalty(self):
        ds = Dataset(k12("s", [("q1", 1.0, 3), ("q2", 0.1, 2), ("q3", 0.7, 1)]), format="k12")
        scores = convert_scores(ds)
        assert scores[("s", "q1")] == pytest.approx(0.6, abs=1e-12)
        assert scores[("s", "q2")] == 0
        assert scores[("s", "q3")] == pytest.approx(0.7, abs=1e-12)

    def test_pslc_elapsed_normalization(self):
        # totals 10, 20, 50 seconds normalize to 0, 0.25, 1
        records = (make_records("s1", [("a", 1.0, 1, 10.0)]) + make_records("s2", [("a", 1.0, 1, 20.0)])
                   + make_records("s3", [("a", 1.0, 1, 50.0)]))
        scores = convert_scores(Dataset(records, format="pslc"))
        assert scores[("s2", "a")] == pytest.approx(0.75, abs=1e-12)
        assert scores[("s1", "a")] == 1.0
        assert scores[("s3", "a")] == 0.0

    def test_k12_ignores_elapsed(self):
        records = make_records("s1", [("a", 1.0, 1, 10.0), ("b", 1.0, 1, 50.0)])
        assert set(convert_scores(Dataset(records), format="k12").values()) == {1.0}


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.integers(1, 6), st.integers(0, 3))
def test_more_retries_never_raise_score(grade, attempts, extra):
    ds = Dataset(k12("s", [("a", grade, attempts), ("b", grade, attempts + extra)]), format="k12")
    scores = convert_scores(ds)
    assert 0 <= scores[("s", "b")] <= scores[("s", "a")] <= 1


TRAIN = {"t1": 0.2, "t2": 0.5, "t3": 0.9, "t4": 0.4}


class TestUBCF:
    def dataset(self, clones=1):
        records = scored("target", TRAIN)
        for i in range(clones):
            records += scored(f"clone{i}", {**TRAIN, "a": 0.2, "b": 0.9})
        return Dataset(records, format="k12")

    def test_clone_neighbour(self):
        task = RankingTask("target", set(TRAIN), {"a", "b"})
        ranker = UBCFRanker().fit(self.dataset())
        assert ranker.neighbors(task) == [("clone0", pytest.approx(1.0))]
        assert ranker.rank(task) == DifficultyRanking.from_order("ab")

    def test_duplicate_clones_change_nothing(self):
        task = RankingTask("target", set(TRAIN), {"a", "b"})
        one = UBCFRanker().fit(self.dataset(1)).predict_scores(task)
        two = UBCFRanker().fit(self.dataset(2)).predict_scores(task)
        assert two == pytest.approx(one, abs=1e-12)

    def test_no_neighbours_single_tier(self):
        records = scored("target", TRAIN) + scored("other", {"a": 0.2, "b": 0.9})
        task = RankingTask("target", set(TRAIN), {"a", "b"})
        assert UBCFRanker().fit(Dataset(records, format="k12")).rank(task).tiers == (frozenset("ab"),)

    def test_anticorrelated_neighbour_ignored(self):
        flipped = {q: 1.0 - v for q, v in TRAIN.items()}
        records = scored("target", TRAIN) + scored("other", {**flipped, "a": 0.2, "b": 0.9})
        task = RankingTask("target", set(TRAIN), {"a", "b"})
        assert UBCFRanker().fit(Dataset(records, format="k12")).neighbors(task) == []

    def test_pearson_constant(self):
        assert pearson(np.ones(3), np.arange(3.0)) is None
        assert pearson(np.arange(3.0), np.arange(3.0) * 2) == pytest.approx(1.0)


class TestMF:
    def test_rank_one_recovery(self):
        rng = np.random.default_rng(0)
        u = rng.uniform(0.5, 1.0, 60)
        v = rng.uniform(0.3, 1.0, 30)
        held = rng.random((60, 30)) < 0.1
        train, test = {}, {}
        for i in range(60):
            for j in range(30):
                (test if held[i, j] else train)[(f"s{i:02d}", f"q{j:02d}")] = u[i] * v[j]
        model = mf_train(train, n_factors=1, n_epochs=100, learning_rate=0.05, regularization=0.001, seed=0)
        rmse = math.sqrt(np.mean([(model.predict(s, q) - x) ** 2 for (s, q), x in test.items()]))
        assert rmse <= 0.05

    def test_biases_only_on_constant_data(self):
        scores = {(f"s{i}", f"q{j}"): 0.4 for i in range(5) for j in range(4)}
        model = mf_train(scores, n_factors=0, seed=1)
        assert all(model.predict(s, q) == pytest.approx(0.4, abs=1e-9) for s, q in scores)

    def test_question_bias_dominates(self):
        records = []
        for i in range(10):
            records += scored(f"s{i}", {"easy": 0.9, "hard": 0.1})
        ds = Dataset(records, format="k12")
        ranker = MFRanker(seed=3).fit(ds)
        for s in ds.students:
            assert ranker.rank(RankingTask(s, set(), {"easy", "hard"})) == DifficultyRanking.from_order(
                ["hard", "easy"])

    def test_deterministic(self):
        scores = {(f"s{i}", f"q{j}"): ((i * 7 + j * 3) % 10) / 10 for i in range(8) for j in range(6)}
        a = mf_train(scores, n_factors=3, seed=11)
        b = mf_train(scores, n_factors=3, seed=11)
        assert np.array_equal(a.student_factors, b.student_factors)
        assert np.array_equal(a.question_bias, b.question_bias)

    def test_divergence_names_epoch(self):
        scores = {(f"s{i}", f"q{j}"): 1.0 for i in range(5) for j in range(5)}
        with pytest.raises(DivergenceError) as info:
            mf_train(scores, n_factors=5, learning_rate=1e6, n_epochs=5, seed=0)
        assert "epoch" in str(info.value)


class TestTopicRanker:
    topics = {"x1": "X", "x2": "X", "x3": "X", "y1": "Y", "y2": "Y", "z1": "Z"}

    def ranker(self):
        rows = [("x1", 0.3, 1), ("y1", 0.9, 1)]
        others = [(q, 1.0, 1) for q in ("x2", "x3", "y2", "z1")]
        records = k12("s", rows, topics=self.topics) + k12("o", others, topics=self.topics)
        return TopicRanker().fit(Dataset(records, format="k12"))

    def test_weaker_topic_first(self):
        task = RankingTask("s", {"x1", "y1"}, {"x2", "y2"})
        assert self.ranker().rank(task) == DifficultyRanking.from_order(["x2", "y2"])

    def test_same_topic_single_tier(self):
        task = RankingTask("s", {"x1", "y1"}, {"x2", "x3"})
        assert self.ranker().rank(task).tiers == (frozenset({"x2", "x3"}),)

    def test_unseen_topic_last(self):
        task = RankingTask("s", {"x1", "y1"}, {"z1", "y2"})
        assert self.ranker().rank(task) == DifficultyRanking.from_order(["y2", "z1"])

    def test_requires_topics(self):
        with pytest.raises(UnsupportedError):
            TopicRanker().fit(Dataset(k12("s", [("a", 1.0, 1)]), format="k12"))


class TestExpertRanker:
    def ranker(self, levels):
        return ExpertRanker().fit(Dataset(k12("s", [(q, 1.0, 1) for q in levels], levels=levels), format="k12"))

    def test_descending_level(self):
        r = self.ranker({"a": 4, "b": 1, "c": 4}).rank(RankingTask("s", set(), set("abc")))
        assert r.tiers == (frozenset("ac"), frozenset("b"))

    def test_single_level(self):
        r = self.ranker({q: 3 for q in "abc"}).rank(RankingTask("s", set(), set("abc")))
        assert r.tiers == (frozenset("abc"),)

    def test_strict(self):
        levels = {q: i + 1 for i, q in enumerate("abcde")}
        r = self.ranker(levels).rank(RankingTask("s", set(), set("abcde")))
        assert r == DifficultyRanking.from_order("edcba")

    def test_missing_level(self):
        ranker = ExpertRanker().fit(Dataset(k12("s", [("a", 1.0, 1)]), format="k12"))
        with pytest.raises(UnsupportedError):
            ranker.rank(RankingTask("s", set(), {"a"}))


class TestEigenRankLite:
    def test_single_neighbour(self):
        records = scored("t", {"p": 0.1, "r": 0.5, "s": 0.9}) + scored(
            "n", {"p": 0.1, "r": 0.5, "s": 0.9, "a": 0.7, "b": 0.1, "c": 0.4})
        ranker = EigenRankLite().fit(Dataset(records, format="k12"))
        assert ranker.rank(RankingTask("t", set("prs"), set("abc"))) == DifficultyRanking.from_order("bca")

    def test_opposite_neighbours_cancel(self):
        scores = {"a": 0.2, "b": 0.5, "c": 0.8}
        potential = pairwise_potential("abc", [(0.5, scores), (0.5, {q: 1 - v for q, v in scores.items()})])
        assert np.allclose(potential, 0)
        assert greedy_order("abc", potential).tiers == (frozenset("abc"),)

    def test_weighted_example(self):
        # scores follow the difficulty orders a>b>c and b>a>c
        first = {"a": 0.1, "b": 0.5, "c": 0.9}
        second = {"b": 0.1, "a": 0.5, "c": 0.9}
        potential = pairwise_potential("abc", [(0.8, first), (0.4, second)])
        assert greedy_order("abc", potential) == DifficultyRanking.from_order("abc")

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.dictionaries(st.sampled_from("abcde"), st.floats(0, 1))),
                    max_size=5))
    def test_potential_antisymmetric(self, neighbors):
        potential = pairwise_potential("abcde", neighbors)
        assert np.allclose(potential, -potential.T)


class TestASC:
    pool = {f"l{level}_{i}": level for level in range(1, 6) for i in range(6)}

    def test_ten(self):
        seq = asc_sequence(self.pool, 10, seed=0)
        levels = [self.pool[q] for q in seq]
        assert Counter(levels) == {1: 2, 2: 3, 3: 4, 4: 1}
        assert levels == sorted(levels)

    def test_zero(self):
        assert asc_sequence(self.pool, 0, seed=0) == []

    def test_no_level_four(self):
        pool = {q: lvl for q, lvl in self.pool.items() if lvl != 4}
        with pytest.raises(PoolExhaustedError, match="4"):
            asc_sequence(pool, 10, seed=0)

    def test_seeded(self):
        assert asc_sequence(self.pool, 10, seed=5) == asc_sequence(self.pool, 10, seed=5)

    @pytest.mark.parametrize("n", range(0, 40))
    def test_counts_sum(self, n):
        counts = asc_counts(n)
        assert sum(counts.values()) == n and min(counts.values()) >= 0
