"""Mask-position selection, phrase collapse, span sampling, and corruption."""

from .policy import MaskingPolicy, Stage, policy_digest, round_half_up
from .records import IGNORE_LABEL, MaskedExample, SpanKind, SpanRecord
from .select import (
    financial_word_positions,
    sample_geometric_spans,
    sample_span_length,
    select_phrase_masks,
    select_word_masks,
    truncated_geometric_pmf,
)
from .apply import apply_masking
from .pipeline import mask_example
from .schedule import stage_schedule
from .stats import masking_stats

__all__ = [
    "MaskingPolicy",
    "Stage",
    "policy_digest",
    "round_half_up",
    "IGNORE_LABEL",
    "MaskedExample",
    "SpanKind",
    "SpanRecord",
    "financial_word_positions",
    "select_word_masks",
    "select_phrase_masks",
    "sample_geometric_spans",
    "sample_span_length",
    "truncated_geometric_pmf",
    "apply_masking",
    "mask_example",
    "stage_schedule",
    "masking_stats",
]
