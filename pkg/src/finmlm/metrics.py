"""Classification, regression, and ranking metrics with brute-force-checkable
semantics: graded nDCG with 2^grade-1 gains, MRR over grade>0, precision@k,
accuracy, MSE/R-squared, and one-vs-rest F1."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ContractViolation


@dataclass(frozen=True)
class RankedList:
    """One query's ranking and its relevance grades (unlisted docs grade 0)."""

    query_id: str
    ranking: tuple[str, ...]
    relevance: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.ranking)) != len(self.ranking):
            raise ContractViolation(f"duplicate documents in ranking for query {self.query_id!r}")
        if any(g < 0 for g in self.relevance.values()):
            raise ContractViolation("relevance grades must be non-negative")

    def grade(self, doc_id: str) -> float:
        return self.relevance.get(doc_id, 0.0)


def accuracy(preds, labels) -> float:
    if len(preds) != len(labels):
        raise ContractViolation("preds and labels must have equal length")
    if len(preds) == 0:
        raise ContractViolation("accuracy of an empty set is undefined")
    return sum(1 for p, y in zip(preds, labels) if p == y) / len(preds)


def mse_r2(preds, targets) -> tuple[float, float | None]:
    """Mean squared error and R^2 = 1 - SS_res/SS_tot about the target mean.

    R^2 is None when the targets are constant (SS_tot = 0).
    """
    if len(preds) != len(targets):
        raise ContractViolation("preds and targets must have equal length")
    if len(targets) < 2:
        raise ContractViolation("need at least 2 points for MSE/R^2")
    n = len(targets)
    mse = sum((p - t) ** 2 for p, t in zip(preds, targets)) / n
    mean_t = sum(targets) / n
    ss_tot = sum((t - mean_t) ** 2 for t in targets)
    if ss_tot == 0.0:
        return mse, None
    ss_res = sum((p - t) ** 2 for p, t in zip(preds, targets))
    return mse, 1.0 - ss_res / ss_tot


def f1_scores(preds, labels, classes) -> dict:
    """One-vs-rest F1 per class plus the unweighted macro mean.

    F1 is 0 when precision + recall is 0 (no predicted and/or no true
    positives).
    """
    if len(preds) != len(labels):
        raise ContractViolation("preds and labels must have equal length")
    for y in labels:
        if y not in classes:
            raise ContractViolation(f"label {y!r} not in classes")
    per_class: dict = {}
    for c in classes:
        tp = sum(1 for p, y in zip(preds, labels) if p == c and y == c)
        fp = sum(1 for p, y in zip(preds, labels) if p == c and y != c)
        fn = sum(1 for p, y in zip(preds, labels) if p != c and y == c)
        denom = 2 * tp + fp + fn
        per_class[c] = (2 * tp / denom) if denom else 0.0
    macro = sum(per_class.values()) / len(classes) if classes else 0.0
    return {"per_class": per_class, "macro": macro}


def binary_f1(preds, labels, positive=1) -> float:
    return f1_scores(preds, labels, classes=[positive, _other(positive)])["per_class"][positive]


def _other(positive):
    return 0 if positive != 0 else 1


def mean_f1_binary(tasks: list[tuple[list, list]], positive=1) -> float:
    """Unweighted mean of binary F1 over a list of (preds, labels) tasks."""
    if not tasks:
        raise ContractViolation("mean F1 over zero tasks is undefined")
    return sum(binary_f1(p, y, positive) for p, y in tasks) / len(tasks)


def dcg(grades: list[float], k: int) -> float:
    return sum(
        (2.0**g - 1.0) / math.log2(r + 2) for r, g in enumerate(grades[:k])
    )


def ndcg(ranked: RankedList, k: int = 10) -> float:
    """Graded nDCG@k; 0 when the ideal DCG is 0 (no relevant documents)."""
    if k < 1:
        raise ContractViolation("k must be >= 1")
    got = dcg([ranked.grade(d) for d in ranked.ranking], k)
    ideal_grades = sorted(ranked.relevance.values(), reverse=True)
    ideal = dcg(ideal_grades, k)
    return got / ideal if ideal > 0 else 0.0


def mrr(ranked_lists: list[RankedList]) -> float:
    """Mean over queries of 1/rank of the first document with grade > 0;
    queries with no relevant document contribute 0."""
    if not ranked_lists:
        raise ContractViolation("MRR over zero queries is undefined")
    total = 0.0
    for rl in ranked_lists:
        for rank, doc in enumerate(rl.ranking, start=1):
            if rl.grade(doc) > 0:
                total += 1.0 / rank
                break
    return total / len(ranked_lists)


def precision_at_k(ranked: RankedList, k: int) -> float:
    """Fraction of the top k that is relevant (grade > 0)."""
    if k < 1:
        raise ContractViolation("k must be >= 1")
    hits = sum(1 for d in ranked.ranking[:k] if ranked.grade(d) > 0)
    return hits / k
