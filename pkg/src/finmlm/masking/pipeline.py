"""One-call masking of a token sequence: phrases, spans, words, corruption."""

from __future__ import annotations

import numpy as np

from ..lexicon import AugmentedVocab, Lexicon, find_occurrences
from ..tokenizer import SpecialTokens
from .apply import apply_masking
from .policy import MaskingPolicy, Stage, round_half_up
from .records import MaskedExample, SpanKind, SpanRecord
from .select import (
    financial_word_positions,
    sample_geometric_spans,
    select_phrase_masks,
    select_word_masks,
)


def mask_example(
    tokens,
    lexicon: Lexicon,
    vocab: AugmentedVocab,
    policy: MaskingPolicy,
    rng: np.random.Generator,
    special: SpecialTokens,
    stage: Stage | None = None,
) -> MaskedExample:
    """Mask one sequence end to end.

    Order of operations: phrase draws (WORD_AND_PHRASE stage only, additive
    to the budget), then geometric spans (when policy.use_spans, taking
    round(span_share * B) of the budget B), then word masks filling the rest
    of B. Later passes never overlap earlier ones.
    """
    stage = policy.stage if stage is None else stage
    if stage != policy.stage:
        policy = policy.with_stage(stage)
    n = len(tokens)
    occurrences = find_occurrences(tokens, lexicon) if n else []

    selections: list[SpanRecord] = []
    blocked: set[int] = set()

    if policy.stage == Stage.WORD_AND_PHRASE:
        phrase_spans = select_phrase_masks(tokens, occurrences, policy, rng)
        selections.extend(phrase_spans)
        for s in phrase_spans:
            blocked.update(range(s.start, s.end))

    budget = round_half_up(policy.total_rate * n)
    if policy.use_spans and budget > 0:
        span_budget = round_half_up(policy.span_share * budget)
        geo_spans = sample_geometric_spans(
            tokens, policy, rng, special, blocked=frozenset(blocked), budget=span_budget
        )
        selections.extend(geo_spans)
        for s in geo_spans:
            blocked.update(range(s.start, s.end))
        budget -= sum(s.length for s in geo_spans)

    fin_positions = financial_word_positions(occurrences)
    word_positions = select_word_masks(
        tokens, occurrences, policy, rng, special,
        blocked=frozenset(blocked), budget=budget,
    )
    for p in sorted(word_positions):
        kind = SpanKind.FINANCIAL_WORD if p in fin_positions else SpanKind.WORD
        term_id = lexicon.word_index.get(int(tokens[p])) if kind == SpanKind.FINANCIAL_WORD else None
        selections.append(
            SpanRecord(start=p, end=p + 1, kind=kind, target_ids=(int(tokens[p]),), term_id=term_id)
        )

    return apply_masking(tokens, selections, vocab, policy, rng, special)
