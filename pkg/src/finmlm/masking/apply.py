"""Turn selected spans into a corrupted sequence with labels."""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from ..lexicon import AugmentedVocab
from ..tokenizer import SpecialTokens
from .policy import MaskingPolicy
from .records import IGNORE_LABEL, MaskedExample, SpanKind, SpanRecord

_MASK, _RANDOM, _KEEP = 0, 1, 2


def _corruption_mode(policy: MaskingPolicy, rng: np.random.Generator) -> int:
    u = rng.random()
    p_mask, p_random, _ = policy.replace_split
    if u < p_mask:
        return _MASK
    if u < p_mask + p_random:
        return _RANDOM
    return _KEEP


def apply_masking(
    tokens,
    selections: list[SpanRecord],
    vocab: AugmentedVocab,
    policy: MaskingPolicy,
    rng: np.random.Generator,
    special: SpecialTokens,
) -> MaskedExample:
    """Corrupt ``tokens`` according to ``selections``.

    Word and geometric spans draw one corruption mode per selection
    (mask / random-base-vocab / keep per replace_split); phrase spans always
    collapse to a single [MASK] labeled with the phrase's augmented id, since
    random/keep variants are not length-preserving. Selections must be
    pairwise non-overlapping and in range. The rng is consumed in
    selection-start order.
    """
    n = len(tokens)
    ordered = sorted(selections, key=lambda s: s.start)
    prev_end = -1
    for sel in ordered:
        if sel.start < 0 or sel.end > n:
            raise ContractViolation(f"selection [{sel.start},{sel.end}) out of range for length {n}")
        if sel.start < prev_end:
            raise ContractViolation("selections overlap")
        prev_end = sel.end

    input_ids: list[int] = []
    labels: list[int] = []
    flags: list[bool] = []
    new_spans: list[SpanRecord] = []

    cursor = 0
    for sel in ordered:
        while cursor < sel.start:
            input_ids.append(int(tokens[cursor]))
            labels.append(IGNORE_LABEL)
            flags.append(False)
            cursor += 1
        new_start = len(input_ids)
        if sel.kind == SpanKind.FINANCIAL_PHRASE:
            if sel.term_id is None or sel.term_id not in vocab.phrase_id_of:
                raise ContractViolation(f"phrase span has no augmented id (term_id={sel.term_id!r})")
            phrase_id = vocab.phrase_id_of[sel.term_id]
            input_ids.append(special.mask_id)
            labels.append(phrase_id)
            flags.append(True)
            new_spans.append(
                SpanRecord(
                    start=new_start,
                    end=new_start + 1,
                    kind=sel.kind,
                    target_ids=(phrase_id,),
                    orig_length=sel.length,
                    term_id=sel.term_id,
                )
            )
        else:
            mode = _corruption_mode(policy, rng)
            for pos in range(sel.start, sel.end):
                orig = int(tokens[pos])
                if mode == _MASK:
                    input_ids.append(special.mask_id)
                    flags.append(True)
                elif mode == _RANDOM:
                    input_ids.append(int(rng.integers(0, vocab.base_size)))
                    flags.append(False)
                else:
                    input_ids.append(orig)
                    flags.append(False)
                labels.append(orig)
            new_spans.append(
                SpanRecord(
                    start=new_start,
                    end=new_start + sel.length,
                    kind=sel.kind,
                    target_ids=sel.target_ids,
                    orig_length=sel.length,
                    term_id=sel.term_id,
                )
            )
        cursor = sel.end
    while cursor < n:
        input_ids.append(int(tokens[cursor]))
        labels.append(IGNORE_LABEL)
        flags.append(False)
        cursor += 1

    return MaskedExample(
        input_ids=tuple(input_ids),
        labels=tuple(labels),
        spans=tuple(new_spans),
        replaced_flags=tuple(flags),
    )
