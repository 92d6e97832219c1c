"""Multi-stage schedule: word-only epochs first, then word+phrase."""

from __future__ import annotations

from ..errors import ContractViolation
from .policy import Stage


def stage_schedule(epoch_index: int, total_epochs: int, word_only_epochs: int = 2) -> Stage:
    """Stage for ``epoch_index`` under a (k word-only, rest word+phrase) split.

    The default k=2 with 4 total epochs gives epochs 0-1 WORD_ONLY and
    epochs 2-3 WORD_AND_PHRASE.
    """
    if total_epochs < 1:
        raise ContractViolation(f"total_epochs must be >= 1, got {total_epochs}")
    if not 0 <= epoch_index < total_epochs:
        raise ContractViolation(
            f"epoch_index {epoch_index} outside [0, {total_epochs})"
        )
    if word_only_epochs < 0:
        raise ContractViolation(f"word_only_epochs must be >= 0, got {word_only_epochs}")
    return Stage.WORD_ONLY if epoch_index < word_only_epochs else Stage.WORD_AND_PHRASE
