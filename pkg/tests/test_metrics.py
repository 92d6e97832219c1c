from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from finmlm.errors import ContractViolation
from finmlm.metrics import (
    RankedList,
    accuracy,
    binary_f1,
    f1_scores,
    mean_f1_binary,
    mrr,
    mse_r2,
    ndcg,
    precision_at_k,
)

RNG = np.random.default_rng(404)


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([1, 0, 2], [1, 0, 2]) == 1.0

    def test_all_wrong(self):
        assert accuracy([1, 1], [0, 0]) == 0.0

    def test_three_of_four(self):
        assert accuracy([1, 1, 0, 0], [1, 1, 0, 1]) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            accuracy([1], [1, 2])


class TestMseR2:
    def test_perfect(self):
        mse, r2 = mse_r2([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert mse == 0.0 and r2 == 1.0

    def test_mean_predictor_r2_zero(self):
        targets = [1.0, 2.0, 3.0, 6.0]
        m = sum(targets) / 4
        _, r2 = mse_r2([m] * 4, targets)
        assert r2 == pytest.approx(0.0, abs=1e-12)

    def test_constant_targets_r2_undefined(self):
        mse, r2 = mse_r2([1.0, 2.0], [5.0, 5.0])
        assert r2 is None
        assert mse == pytest.approx((16 + 9) / 2)

    def test_random_case_matches_oracle(self):
        y = RNG.normal(size=5)
        p = y + RNG.normal(size=5) * 0.4
        mse, r2 = mse_r2(p.tolist(), y.tolist())
        want_mse = sum((a - b) ** 2 for a, b in zip(p, y)) / 5
        ym = y.mean()
        want_r2 = 1 - sum((a - b) ** 2 for a, b in zip(p, y)) / sum((b - ym) ** 2 for b in y)
        assert mse == pytest.approx(want_mse, abs=1e-12)
        assert r2 == pytest.approx(want_r2, abs=1e-12)


class TestF1:
    def test_perfect(self):
        assert binary_f1([1, 0, 1], [1, 0, 1]) == 1.0

    def test_no_positives_predicted(self):
        assert binary_f1([0, 0, 0], [1, 1, 0]) == 0.0

    def test_mixed_hand_computed(self):
        # preds vs labels: tp=2 fp=1 fn=1 -> P=2/3 R=2/3 F1=2/3
        preds = [1, 1, 1, 0, 0, 0]
        labels = [1, 1, 0, 1, 0, 0]
        assert binary_f1(preds, labels) == pytest.approx(2 / 3)

    def test_mean_f1_over_binary_tasks(self):
        tasks = [([1, 0], [1, 0]), ([0, 0], [1, 0]), ([1, 1], [1, 1])]
        assert mean_f1_binary(tasks) == pytest.approx((1.0 + 0.0 + 1.0) / 3)

    def test_label_renaming_invariance(self):
        preds = [0, 1, 2, 1, 0]
        labels = [0, 1, 1, 1, 2]
        base = f1_scores(preds, labels, classes=[0, 1, 2])
        ren = {0: 7, 1: 8, 2: 9}
        renamed = f1_scores([ren[p] for p in preds], [ren[y] for y in labels], classes=[7, 8, 9])
        assert base["macro"] == pytest.approx(renamed["macro"])
        for c in (0, 1, 2):
            assert base["per_class"][c] == pytest.approx(renamed["per_class"][ren[c]])


def _perm_ndcg_oracle(ranking, grades, k):
    def dcg_of(perm):
        return sum((2.0 ** grades[d] - 1.0) / math.log2(r + 2) for r, d in enumerate(perm[:k]))

    ideal = max(dcg_of(p) for p in itertools.permutations(ranking))
    return dcg_of(ranking) / ideal if ideal > 0 else 0.0


class TestNdcg:
    def test_ideal_ordering_is_one(self):
        rl = RankedList("q", ("a", "b", "c"), {"a": 3, "b": 2, "c": 0})
        assert ndcg(rl, 3) == 1.0

    def test_all_zero_grades(self):
        rl = RankedList("q", ("a", "b"), {"a": 0, "b": 0})
        assert ndcg(rl, 2) == 0.0

    def test_spec_example_against_permutations(self):
        grades = {"g0": 0.0, "g1": 1.0, "g2": 2.0}
        ranking = ("g2", "g0", "g1")
        rl = RankedList("q", ranking, grades)
        got = ndcg(rl, 3)
        want = _perm_ndcg_oracle(ranking, grades, 3)
        assert got == pytest.approx(want, abs=1e-12)
        ideal = RankedList("q", ("g2", "g1", "g0"), grades)
        assert ndcg(ideal, 3) == 1.0

    def test_grade_sorted_with_ties_is_one(self):
        rl = RankedList("q", ("a", "b", "c"), {"a": 2, "b": 2, "c": 1})
        assert ndcg(rl, 3) == 1.0

    def test_randomized_against_permutation_oracle(self):
        for _ in range(100):
            n = int(RNG.integers(2, 7))
            grades = {f"d{i}": float(RNG.integers(0, 4)) for i in range(n)}
            ranking = tuple(f"d{i}" for i in RNG.permutation(n))
            k = int(RNG.integers(1, n + 1))
            rl = RankedList("q", ranking, grades)
            assert ndcg(rl, k) == pytest.approx(_perm_ndcg_oracle(ranking, grades, k), abs=1e-12)
            assert 0.0 <= ndcg(rl, k) <= 1.0


class TestMrrPrecision:
    def test_first_doc_relevant(self):
        rl = RankedList("q", ("a", "b"), {"a": 1})
        assert mrr([rl]) == 1.0

    def test_relevant_at_rank_four(self):
        rl = RankedList("q", ("a", "b", "c", "d"), {"d": 2})
        assert mrr([rl]) == 0.25

    def test_two_query_mean(self):
        r1 = RankedList("q1", ("a", "b"), {"a": 1})
        r2 = RankedList("q2", ("a", "b"), {"b": 1})
        assert mrr([r1, r2]) == pytest.approx(0.75)

    def test_no_relevant_contributes_zero(self):
        r1 = RankedList("q1", ("a",), {"a": 1})
        r2 = RankedList("q2", ("a",), {})
        assert mrr([r1, r2]) == pytest.approx(0.5)

    def test_precision_cases(self):
        rl = RankedList("q", ("a", "b", "c", "d", "e"), {"a": 1, "c": 1})
        assert precision_at_k(rl, 5) == pytest.approx(0.4)
        all_rel = RankedList("q", ("a", "b"), {"a": 1, "b": 1})
        assert precision_at_k(all_rel, 2) == 1.0
        none_rel = RankedList("q", ("a", "b"), {})
        assert precision_at_k(none_rel, 2) == 0.0


def test_duplicate_documents_rejected():
    with pytest.raises(ContractViolation):
        RankedList("q", ("a", "a"), {"a": 1})


def test_query_reordering_invariance():
    lists = [
        RankedList("q1", ("a", "b"), {"b": 1}),
        RankedList("q2", ("a", "b"), {"a": 2}),
        RankedList("q3", ("a", "b"), {}),
    ]
    assert mrr(lists) == pytest.approx(mrr(list(reversed(lists))))
