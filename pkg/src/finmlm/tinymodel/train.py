"""End-to-end pretraining: mask, generate, detect, update."""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from ..errors import ContractViolation, DivergenceError
from ..lexicon import AugmentedVocab, Lexicon
from ..masking import MaskedExample, MaskingPolicy, SpanKind, mask_example, policy_digest, stage_schedule
from ..objectives import LossReport, LossWeights, SboParams, disc_loss, init_sbo_params, mlm_loss, sbo_loss
from ..rng import substream
from ..tokenizer import SpecialTokens
from .adam import AdamState, adam_update
from .encoder import EncoderConfig, encoder_backward, encoder_forward, init_encoder_params

_SBO_KINDS = (SpanKind.GEOMETRIC_SPAN, SpanKind.FINANCIAL_PHRASE)


@dataclass
class TrainState:
    config: EncoderConfig
    weights: LossWeights
    gen: dict[str, np.ndarray]
    disc: dict[str, np.ndarray]
    sbo: SboParams
    opt: AdamState
    epoch: int = 0
    seed: int = 0
    policy_digest: str = ""

    def named_arrays(self) -> dict[str, np.ndarray]:
        """Every parameter tensor under a stable namespaced key."""
        out = {f"gen.{k}": v for k, v in self.gen.items()}
        out.update({f"disc.{k}": v for k, v in self.disc.items()})
        out.update({f"sbo.{f.name}": getattr(self.sbo, f.name) for f in dc_fields(self.sbo)})
        return out


def init_train_state(
    config: EncoderConfig,
    weights: LossWeights,
    policy: MaskingPolicy,
    seed: int,
) -> TrainState:
    rng = substream(seed, "init")
    gen = init_encoder_params(config, rng)
    gen["out_emb"] = rng.normal(0.0, 0.02, size=(config.vocab_size, config.d_model))
    gen["out_bias"] = np.zeros(config.vocab_size)
    if not config.sbo_tied_projection:
        gen["sbo_out_emb"] = rng.normal(0.0, 0.02, size=(config.vocab_size, config.d_model))
    disc = init_encoder_params(config, rng)
    disc["head_w"] = rng.normal(0.0, 0.02, size=config.d_model)
    disc["head_b"] = np.zeros(1)
    sbo = init_sbo_params(
        config.d_model, config.sbo_hidden, config.sbo_pos_dim, policy.max_span, rng
    )
    return TrainState(
        config=config,
        weights=weights,
        gen=gen,
        disc=disc,
        sbo=sbo,
        opt=AdamState(),
        seed=seed,
        policy_digest=policy_digest(policy),
    )


def sample_replacements(
    input_ids,
    logits: np.ndarray,
    masked_positions: list[int],
    original_ids,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Substitute one categorical sample per masked position.

    ``logits`` has one row per masked position. A sample that equals the
    original token at its position counts as NOT replaced. Returns the
    corrupted sequence and the per-position replaced flags.
    """
    corrupted = np.asarray(input_ids, dtype=np.int64).copy()
    flags = np.zeros(corrupted.shape[0], dtype=bool)
    for row, pos in enumerate(masked_positions):
        shifted = logits[row] - logits[row].max()
        e = np.exp(shifted)
        cdf = np.cumsum(e / e.sum())
        sample = int(np.searchsorted(cdf, rng.random(), side="right"))
        sample = min(sample, logits.shape[1] - 1)
        corrupted[pos] = sample
        flags[pos] = sample != int(original_ids[row])
    return corrupted, flags


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def train_step(
    state: TrainState,
    masked: MaskedExample,
    sample_rng: np.random.Generator,
    lr: float = 1e-3,
) -> LossReport | None:
    """One masked example: forward both encoders, backward, Adam update.

    Returns None (no update) when the example has no prediction targets.
    """
    cfg = state.config
    weights = state.weights
    positions = masked.masked_positions
    if not positions:
        return None
    labels = np.array([masked.labels[p] for p in positions], dtype=np.int64)

    gen_states, gen_cache = encoder_forward(state.gen, masked.input_ids, cfg)
    logits = gen_states[positions] @ state.gen["out_emb"].T + state.gen["out_bias"]
    l_mlm, dlogits = mlm_loss(logits, labels)

    sbo_spans = [s for s in masked.spans if s.kind in _SBO_KINDS] if weights.lambda1 > 0 else []
    sbo_emb_key = "out_emb" if cfg.sbo_tied_projection else "sbo_out_emb"
    if sbo_spans:
        l_sbo, sbo_grads = sbo_loss(sbo_spans, gen_states, state.sbo, state.gen[sbo_emb_key])
    else:
        l_sbo, sbo_grads = 0.0, None

    replace_positions = [p for p in positions if masked.replaced_flags[p]]
    row_of = {p: i for i, p in enumerate(positions)}
    if weights.lambda2 > 0:
        rep_rows = [row_of[p] for p in replace_positions]
        corrupted, flags = sample_replacements(
            masked.input_ids,
            logits[rep_rows] if rep_rows else np.zeros((0, cfg.vocab_size)),
            replace_positions,
            labels[rep_rows] if rep_rows else [],
            sample_rng,
        )
        disc_states, disc_cache = encoder_forward(state.disc, corrupted, cfg)
        disc_logits = disc_states @ state.disc["head_w"] + state.disc["head_b"][0]
        disc_probs = _sigmoid(disc_logits)
        l_disc, dprobs = disc_loss(disc_probs, flags)
    else:
        l_disc, dprobs = 0.0, None

    report = LossReport.build(l_mlm, l_sbo, l_disc, weights)

    # Generator backward: MLM head plus (scaled) span-boundary contributions.
    dstates = np.zeros_like(gen_states)
    dstates[positions] += dlogits @ state.gen["out_emb"]
    gen_head_grads = {
        "out_emb": dlogits.T @ gen_states[positions],
        "out_bias": dlogits.sum(axis=0),
    }
    sbo_param_grads = {}
    if sbo_grads is not None:
        dstates += weights.lambda1 * sbo_grads.d_states
        demb = weights.lambda1 * sbo_grads.d_embedding
        if sbo_emb_key in gen_head_grads:
            gen_head_grads[sbo_emb_key] = gen_head_grads[sbo_emb_key] + demb
        else:
            gen_head_grads[sbo_emb_key] = demb
        sbo_param_grads = {k: weights.lambda1 * v for k, v in sbo_grads.params.items()}
    gen_grads = encoder_backward(state.gen, gen_cache, dstates, cfg)
    gen_grads.update(gen_head_grads)

    grads = {f"gen.{k}": v for k, v in gen_grads.items()}
    grads.update({f"sbo.{k}": v for k, v in sbo_param_grads.items()})

    if dprobs is not None:
        dlogit = weights.lambda2 * dprobs * disc_probs * (1.0 - disc_probs)
        disc_grads = encoder_backward(
            state.disc, disc_cache, np.outer(dlogit, state.disc["head_w"]), cfg
        )
        disc_grads["head_w"] = disc_states.T @ dlogit
        disc_grads["head_b"] = np.array([dlogit.sum()])
        grads.update({f"disc.{k}": v for k, v in disc_grads.items()})

    adam_update(state.named_arrays(), grads, state.opt, lr=lr)
    return report


@dataclass
class PretrainResult:
    state: TrainState
    baseline_ppl: float
    epoch_ppl: list[float]
    epoch_loss: list[LossReport]
    phrase_collapses: list[int] = field(default_factory=list)


def pretrain(
    corpus_tokens: list[list[int]],
    val_tokens: list[list[int]],
    lexicon: Lexicon,
    vocab: AugmentedVocab,
    special: SpecialTokens,
    policy: MaskingPolicy,
    config: EncoderConfig,
    weights: LossWeights,
    epochs: int = 4,
    word_only_epochs: int = 2,
    seed: int = 0,
    lr: float = 1e-3,
    eval_policy: MaskingPolicy | None = None,
) -> PretrainResult:
    """Multi-stage pretraining over a tokenized corpus.

    Each epoch remasks the corpus with epoch-derived seeds at the stage the
    schedule dictates. Perplexity on ``val_tokens`` uses a fixed masking
    seed, so per-epoch numbers are comparable. A non-finite loss aborts with
    the last finite state attached to the raised DivergenceError.
    """
    from .perplexity import perplexity  # local import to avoid a cycle

    if not corpus_tokens:
        raise ContractViolation("empty training corpus")
    eval_policy = policy if eval_policy is None else eval_policy
    state = init_train_state(config, weights, policy, seed)

    def val_ppl() -> float:
        return perplexity(
            val_tokens, state, lexicon, vocab, special, eval_policy, seed=seed
        ).token_level

    baseline = val_ppl() if val_tokens else float("nan")
    epoch_ppl: list[float] = []
    epoch_loss: list[LossReport] = []
    collapses: list[int] = []
    for epoch in range(epochs):
        stage = stage_schedule(epoch, epochs, word_only_epochs)
        totals = np.zeros(4)
        steps = 0
        n_collapse = 0
        for idx, tokens in enumerate(corpus_tokens):
            rng = substream(seed, "mask", epoch, idx)
            masked = mask_example(tokens, lexicon, vocab, policy, rng, special, stage=stage)
            n_collapse += sum(1 for s in masked.spans if s.kind == SpanKind.FINANCIAL_PHRASE)
            try:
                report = train_step(
                    state, masked, substream(seed, "sample", epoch, idx), lr=lr
                )
            except DivergenceError as err:
                err.state = state  # last finite parameters: the update never ran
                raise
            if report is None:
                continue
            totals += (report.l_mlm, report.l_sbo, report.l_disc, report.total)
            steps += 1
        state.epoch = epoch + 1
        mean = totals / max(steps, 1)
        epoch_loss.append(LossReport(mean[0], mean[1], mean[2], mean[3]))
        collapses.append(n_collapse)
        epoch_ppl.append(val_ppl() if val_tokens else float("nan"))
    return PretrainResult(
        state=state,
        baseline_ppl=baseline,
        epoch_ppl=epoch_ppl,
        epoch_loss=epoch_loss,
        phrase_collapses=collapses,
    )
