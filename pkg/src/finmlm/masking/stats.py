"""Empirical masking statistics over a masked dataset."""

from __future__ import annotations

import warnings
from collections import Counter
from typing import Iterable

from ..errors import ContractViolation
from .records import MaskedExample, SpanKind

_WORD_SPAN_KINDS = (SpanKind.FINANCIAL_WORD, SpanKind.WORD, SpanKind.GEOMETRIC_SPAN)


def masking_stats(dataset: Iterable[MaskedExample]) -> dict:
    """Realized rates and span histograms for a masked dataset.

    ``mask_rate`` counts word/geometric-span corruption against the original
    token count (the budget-governed quantity); phrase collapses are additive
    and reported separately, with ``corruption_rate_with_phrases`` covering
    both.
    """
    total_tokens = 0
    word_span_masked = 0
    fin_word_masked = 0
    phrase_count = 0
    phrase_tokens = 0
    examples = 0
    span_length_hist: Counter[int] = Counter()
    phrase_length_hist: Counter[int] = Counter()

    for ex in dataset:
        examples += 1
        total_tokens += ex.original_length()
        for span in ex.spans:
            if span.kind == SpanKind.FINANCIAL_PHRASE:
                phrase_count += 1
                phrase_tokens += span.orig_length
                phrase_length_hist[span.orig_length] += 1
            else:
                word_span_masked += span.length
                if span.kind == SpanKind.FINANCIAL_WORD:
                    fin_word_masked += 1
                if span.kind == SpanKind.GEOMETRIC_SPAN:
                    span_length_hist[span.length] += 1
    if examples == 0:
        raise ContractViolation("masking_stats requires a non-empty dataset")
    if word_span_masked == 0:
        warnings.warn("dataset has zero masked positions (all-special corpus?)", stacklevel=2)

    return {
        "examples": examples,
        "total_tokens": total_tokens,
        "word_span_masked": word_span_masked,
        "mask_rate": word_span_masked / total_tokens if total_tokens else 0.0,
        "financial_word_masked": fin_word_masked,
        "financial_share": fin_word_masked / word_span_masked if word_span_masked else 0.0,
        "phrase_collapse_count": phrase_count,
        "phrase_tokens_collapsed": phrase_tokens,
        "corruption_rate_with_phrases": (
            (word_span_masked + phrase_count) / total_tokens if total_tokens else 0.0
        ),
        "geometric_span_length_histogram": {str(k): v for k, v in sorted(span_length_hist.items())},
        "phrase_length_histogram": {str(k): v for k, v in sorted(phrase_length_hist.items())},
    }
