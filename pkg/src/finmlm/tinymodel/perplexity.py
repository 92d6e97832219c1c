"""Masked-token perplexity and the planted-phrase probability probe."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ContractViolation
from ..lexicon import AugmentedVocab, Lexicon
from ..masking import MaskingPolicy, SpanKind, Stage, mask_example
from ..rng import substream
from ..tokenizer import SpecialTokens
from .encoder import encoder_forward
from .train import TrainState


@dataclass(frozen=True)
class PerplexityReport:
    """Token-level: exp of the corpus-mean NLL over masked tokens.
    Sentence-level: mean over sequences of each sequence's own perplexity."""

    token_level: float
    sentence_level: float
    masked_tokens: int
    sequences: int


def _log_softmax(row: np.ndarray) -> np.ndarray:
    shifted = row - row.max()
    return shifted - np.log(np.exp(shifted).sum())


def perplexity(
    val_tokens: list[list[int]],
    state: TrainState,
    lexicon: Lexicon,
    vocab: AugmentedVocab,
    special: SpecialTokens,
    policy: MaskingPolicy,
    seed: int = 0,
    dump_path: str | Path | None = None,
) -> PerplexityReport:
    """Generator perplexity under a fixed validation masking seed.

    With ``dump_path`` set, writes one JSON line per sequence with the
    masked positions, their labels, and full per-position log-probability
    rows, for offline recomputation.
    """
    if not val_tokens:
        raise ContractViolation("empty validation corpus")
    cfg = state.config
    total_nll = 0.0
    total_count = 0
    sentence_ppls: list[float] = []
    dump_lines: list[str] = []
    for idx, tokens in enumerate(val_tokens):
        rng = substream(seed, "valmask", idx)
        masked = mask_example(tokens, lexicon, vocab, policy, rng, special)
        positions = masked.masked_positions
        if not positions:
            continue
        states, _ = encoder_forward(state.gen, masked.input_ids, cfg)
        logits = states[positions] @ state.gen["out_emb"].T + state.gen["out_bias"]
        nll = 0.0
        logprob_rows = []
        for row, pos in enumerate(positions):
            logp = _log_softmax(logits[row])
            nll += -logp[masked.labels[pos]]
            logprob_rows.append([float(v) for v in logp])
        total_nll += nll
        total_count += len(positions)
        sentence_ppls.append(float(np.exp(nll / len(positions))))
        if dump_path is not None:
            dump_lines.append(
                json.dumps(
                    {
                        "index": idx,
                        "labels": [masked.labels[p] for p in positions],
                        "log_probs": logprob_rows,
                        "positions": positions,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
    if total_count == 0:
        raise ContractViolation("validation masking produced zero masked tokens")
    if dump_path is not None:
        Path(dump_path).write_text("\n".join(dump_lines) + "\n", encoding="utf-8")
    return PerplexityReport(
        token_level=float(np.exp(total_nll / total_count)),
        sentence_level=float(np.mean(sentence_ppls)),
        masked_tokens=total_count,
        sequences=len(sentence_ppls),
    )


def phrase_probe(
    val_tokens: list[list[int]],
    state: TrainState,
    lexicon: Lexicon,
    vocab: AugmentedVocab,
    special: SpecialTokens,
    policy: MaskingPolicy,
    seed: int = 0,
) -> tuple[float, int]:
    """Mean generator probability of the true phrase id at collapsed positions.

    Masks with phrase_rate forced to 1 so every phrase occurrence collapses;
    returns (mean probability, number of collapse sites probed).
    """
    probe_policy = dataclasses.replace(
        policy, stage=Stage.WORD_AND_PHRASE, phrase_rate=1.0
    )
    cfg = state.config
    probs: list[float] = []
    for idx, tokens in enumerate(val_tokens):
        rng = substream(seed, "phraseprobe", idx)
        masked = mask_example(tokens, lexicon, vocab, probe_policy, rng, special)
        phrase_spans = [s for s in masked.spans if s.kind == SpanKind.FINANCIAL_PHRASE]
        if not phrase_spans:
            continue
        states, _ = encoder_forward(state.gen, masked.input_ids, cfg)
        for span in phrase_spans:
            logits = states[span.start] @ state.gen["out_emb"].T + state.gen["out_bias"]
            logp = _log_softmax(logits)
            probs.append(float(np.exp(logp[span.target_ids[0]])))
    if not probs:
        return 0.0, 0
    return float(np.mean(probs)), len(probs)
