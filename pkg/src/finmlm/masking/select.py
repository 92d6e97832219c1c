"""Mask-position selection: preferential words, phrase draws, geometric spans.

Every selector is pure given (inputs, policy, rng) and draws from the rng in
a fixed order, so identical seeds reproduce identical selections. Positions
0 and len-1 are never selectable: every selection must keep both of its
neighbouring boundary tokens inside the sequence (in framed input those
positions are [CLS]/[SEP] anyway).
"""

from __future__ import annotations

import functools

import numpy as np

from ..errors import ContractViolation
from ..lexicon import PhraseOccurrence
from ..tokenizer import SpecialTokens
from .policy import MaskingPolicy, Stage, round_half_up
from .records import SpanKind, SpanRecord


def financial_word_positions(occurrences: list[PhraseOccurrence]) -> set[int]:
    """Positions covered by single-word financial occurrences."""
    return {occ.start for occ in occurrences if occ.length == 1}


def _eligible_positions(
    n: int, tokens, special: SpecialTokens, blocked: frozenset[int]
) -> list[int]:
    return [
        p
        for p in range(1, n - 1)
        if int(tokens[p]) not in special.special_ids and p not in blocked
    ]


def select_word_masks(
    tokens,
    occurrences: list[PhraseOccurrence],
    policy: MaskingPolicy,
    rng: np.random.Generator,
    special: SpecialTokens,
    blocked: frozenset[int] = frozenset(),
    budget: int | None = None,
) -> set[int]:
    """Choose single-token mask positions under the preferential policy.

    The budget B = round(total_rate * len(tokens)) unless an explicit budget
    is passed (the pipeline does, after geometric spans have consumed their
    share). round(fin_share * B) positions come uniformly from single-word
    financial occurrences; the rest uniformly from everything else eligible.
    A short pool on either side spills into the other so the budget stays
    exact whenever enough maskable positions exist. Sequences with fewer
    than 3 non-special tokens yield an empty selection, not an error.
    """
    n = len(tokens)
    nonspecial = sum(1 for t in tokens if int(t) not in special.special_ids)
    if nonspecial < 3:
        return set()
    B = round_half_up(policy.total_rate * n) if budget is None else budget
    eligible = _eligible_positions(n, tokens, special, blocked)
    B = min(B, len(eligible))
    if B <= 0:
        return set()

    fin_all = financial_word_positions(occurrences)
    fin_pool = sorted(p for p in eligible if p in fin_all)
    other_pool = sorted(p for p in eligible if p not in fin_all)

    fin_quota = min(round_half_up(policy.fin_share * B), B)
    fin_take = min(fin_quota, len(fin_pool))
    other_take = min(B - fin_take, len(other_pool))
    fin_take = min(B - other_take, len(fin_pool))  # spill back if others ran short

    chosen: set[int] = set()
    if fin_take > 0:
        chosen.update(int(p) for p in rng.choice(fin_pool, size=fin_take, replace=False))
    if other_take > 0:
        chosen.update(int(p) for p in rng.choice(other_pool, size=other_take, replace=False))
    return chosen


def select_phrase_masks(
    tokens,
    occurrences: list[PhraseOccurrence],
    policy: MaskingPolicy,
    rng: np.random.Generator,
) -> list[SpanRecord]:
    """Independently select each phrase occurrence with phrase_rate.

    Only valid in the WORD_AND_PHRASE stage. Occurrences whose boundary
    tokens would fall outside the sequence are skipped.
    """
    if policy.stage != Stage.WORD_AND_PHRASE:
        raise ContractViolation("phrase masking requires the WORD_AND_PHRASE stage")
    n = len(tokens)
    out: list[SpanRecord] = []
    for occ in occurrences:
        if occ.length < 2:
            continue
        if occ.start < 1 or occ.end > n - 1:
            continue
        if rng.random() < policy.phrase_rate:
            out.append(
                SpanRecord(
                    start=occ.start,
                    end=occ.end,
                    kind=SpanKind.FINANCIAL_PHRASE,
                    target_ids=tuple(int(t) for t in tokens[occ.start : occ.end]),
                    term_id=occ.term_id,
                )
            )
    return out


@functools.lru_cache(maxsize=64)
def _trunc_geo_tables(geo_p: float, max_span: int) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.arange(1, max_span + 1)
    raw = (1.0 - geo_p) ** (lengths - 1) * geo_p
    pmf = raw / raw.sum()
    pmf.setflags(write=False)
    cdf = np.cumsum(pmf)
    cdf.setflags(write=False)
    return pmf, cdf


def truncated_geometric_pmf(geo_p: float, max_span: int) -> np.ndarray:
    """P(length = l) for l = 1..max_span, Geo(geo_p) renormalized on support."""
    return _trunc_geo_tables(geo_p, max_span)[0]


def sample_span_length(policy: MaskingPolicy, rng: np.random.Generator) -> int:
    """One draw from Geo(geo_p) truncated at max_span, via inverse CDF."""
    cdf = _trunc_geo_tables(policy.geo_p, policy.max_span)[1]
    return int(np.searchsorted(cdf, rng.random(), side="right")) + 1


def sample_geometric_spans(
    tokens,
    policy: MaskingPolicy,
    rng: np.random.Generator,
    special: SpecialTokens,
    blocked: frozenset[int] = frozenset(),
    budget: int | None = None,
) -> list[SpanRecord]:
    """Place non-overlapping spans with truncated-geometric lengths.

    Spans are placed uniformly among starts where the whole span is eligible
    and both boundary tokens exist. Sampling stops when the token budget is
    met or no legal placement remains; the final draw is clipped so the
    budget is never exceeded.
    """
    n = len(tokens)
    B = round_half_up(policy.total_rate * n) if budget is None else budget
    if B <= 0 or n < 3:
        return []
    free = np.zeros(n, dtype=bool)
    for p in _eligible_positions(n, tokens, special, blocked):
        free[p] = True

    cdf = _trunc_geo_tables(policy.geo_p, policy.max_span)[1]

    spans: list[SpanRecord] = []
    spanned = 0
    while spanned < B:
        length = int(np.searchsorted(cdf, rng.random(), side="right")) + 1
        length = min(length, B - spanned)
        placed = False
        for l in range(length, 0, -1):
            starts = [s for s in range(1, n - l) if free[s : s + l].all()]
            if not starts:
                continue
            s = int(rng.choice(starts))
            spans.append(
                SpanRecord(
                    start=s,
                    end=s + l,
                    kind=SpanKind.GEOMETRIC_SPAN,
                    target_ids=tuple(int(t) for t in tokens[s : s + l]),
                )
            )
            free[s : s + l] = False
            spanned += l
            placed = True
            break
        if not placed:
            break
    spans.sort(key=lambda s: s.start)
    return spans
