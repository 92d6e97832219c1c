"""Span-boundary representation function and its prediction loss.

Each token inside a masked span is predicted from the encoder states of the
tokens just outside the span plus a learned relative-position embedding:

    h0 = [left_state, right_state, pos_table[i]]
    h1 = LayerNorm1(GELU(w1 @ h0))
    y  = LayerNorm2(GELU(w2 @ h1))
    score = output_embedding @ y
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..errors import ContractViolation
from ..masking.records import SpanRecord
from .activations import gelu, gelu_grad, layer_norm, layer_norm_backward


@dataclass
class SboParams:
    w1: np.ndarray  # [h_dim, 2*d_model + p_dim]
    w2: np.ndarray  # [d_model, h_dim]
    ln1_gain: np.ndarray  # [h_dim]
    ln1_bias: np.ndarray  # [h_dim]
    ln2_gain: np.ndarray  # [d_model]
    ln2_bias: np.ndarray  # [d_model]
    pos_table: np.ndarray  # [max_span, p_dim]

    def __post_init__(self):
        h_dim, in_dim = self.w1.shape
        d_model = self.w2.shape[0]
        p_dim = self.pos_table.shape[1]
        if self.w2.shape != (d_model, h_dim):
            raise ContractViolation("w2 shape inconsistent with w1")
        if in_dim != 2 * d_model + p_dim:
            raise ContractViolation(
                f"w1 input dim {in_dim} != 2*{d_model} + {p_dim}"
            )
        if self.ln1_gain.shape != (h_dim,) or self.ln1_bias.shape != (h_dim,):
            raise ContractViolation("ln1 parameter shapes inconsistent")
        if self.ln2_gain.shape != (d_model,) or self.ln2_bias.shape != (d_model,):
            raise ContractViolation("ln2 parameter shapes inconsistent")

    @property
    def d_model(self) -> int:
        return self.w2.shape[0]

    @property
    def max_span(self) -> int:
        return self.pos_table.shape[0]

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {f.name: np.zeros_like(getattr(self, f.name)) for f in fields(self)}


def init_sbo_params(
    d_model: int,
    h_dim: int,
    p_dim: int,
    max_span: int,
    rng: np.random.Generator,
    init_scale: float = 0.02,
) -> SboParams:
    return SboParams(
        w1=rng.normal(0.0, init_scale, size=(h_dim, 2 * d_model + p_dim)),
        w2=rng.normal(0.0, init_scale, size=(d_model, h_dim)),
        ln1_gain=np.ones(h_dim),
        ln1_bias=np.zeros(h_dim),
        ln2_gain=np.ones(d_model),
        ln2_bias=np.zeros(d_model),
        pos_table=rng.normal(0.0, init_scale, size=(max_span, p_dim)),
    )


def _forward(left_vec, right_vec, span_pos: int, params: SboParams):
    if not 1 <= span_pos <= params.max_span:
        raise ContractViolation(
            f"span position {span_pos} outside [1, {params.max_span}]"
        )
    h0 = np.concatenate([left_vec, right_vec, params.pos_table[span_pos - 1]])
    a1 = params.w1 @ h0
    g1 = gelu(a1)
    h1, ln1_cache = layer_norm(g1, params.ln1_gain, params.ln1_bias)
    a2 = params.w2 @ h1
    g2 = gelu(a2)
    y, ln2_cache = layer_norm(g2, params.ln2_gain, params.ln2_bias)
    cache = (h0, a1, ln1_cache, h1, a2, ln2_cache, span_pos)
    return y, cache


def _backward(dy, cache, params: SboParams, grads: dict[str, np.ndarray]):
    h0, a1, ln1_cache, h1, a2, ln2_cache, span_pos = cache
    dg2, dln2_gain, dln2_bias = layer_norm_backward(dy, ln2_cache)
    grads["ln2_gain"] += dln2_gain
    grads["ln2_bias"] += dln2_bias
    da2 = dg2 * gelu_grad(a2)
    grads["w2"] += np.outer(da2, h1)
    dh1 = params.w2.T @ da2
    dg1, dln1_gain, dln1_bias = layer_norm_backward(dh1, ln1_cache)
    grads["ln1_gain"] += dln1_gain
    grads["ln1_bias"] += dln1_bias
    da1 = dg1 * gelu_grad(a1)
    grads["w1"] += np.outer(da1, h0)
    dh0 = params.w1.T @ da1
    d = params.d_model
    grads["pos_table"][span_pos - 1] += dh0[2 * d :]
    return dh0[:d], dh0[d : 2 * d]


def sbo_representation(left_vec, right_vec, span_pos: int, params: SboParams) -> np.ndarray:
    """Representation of the span token at 1-based in-span position span_pos."""
    left_vec = np.asarray(left_vec, dtype=np.float64)
    right_vec = np.asarray(right_vec, dtype=np.float64)
    y, _ = _forward(left_vec, right_vec, span_pos, params)
    return y


@dataclass
class SboGrads:
    params: dict[str, np.ndarray]
    d_states: np.ndarray  # [seq_len, d_model]
    d_embedding: np.ndarray  # [vocab, d_model]


def sbo_loss(
    spans: list[SpanRecord],
    boundary_states: np.ndarray,
    params: SboParams,
    output_embedding: np.ndarray,
) -> tuple[float, SboGrads]:
    """Mean negative log-likelihood of span tokens given their boundaries.

    boundary_states are the encoder outputs for the (masked) sequence the
    spans index into; output_embedding is the [vocab, d_model] projection
    shared with the generator. An empty span list yields loss 0 and zero
    gradients.
    """
    states = np.asarray(boundary_states, dtype=np.float64)
    emb = np.asarray(output_embedding, dtype=np.float64)
    if states.ndim != 2 or emb.ndim != 2 or states.shape[1] != emb.shape[1]:
        raise ContractViolation("states and output_embedding must share d_model")
    seq_len = states.shape[0]
    vocab = emb.shape[0]

    grads = SboGrads(
        params=params.zeros_like(),
        d_states=np.zeros_like(states),
        d_embedding=np.zeros_like(emb),
    )
    total_tokens = sum(len(s.target_ids) for s in spans)
    if total_tokens == 0:
        return 0.0, grads

    for span in spans:
        if span.left_boundary < 0 or span.right_boundary >= seq_len:
            raise ContractViolation(
                f"span [{span.start},{span.end}) boundaries outside sequence of length {seq_len}"
            )
        if any(t < 0 or t >= vocab for t in span.target_ids):
            raise ContractViolation("span target outside vocabulary")

    loss = 0.0
    for span in spans:
        left = states[span.left_boundary]
        right = states[span.right_boundary]
        for j, target in enumerate(span.target_ids):
            y, cache = _forward(left, right, j + 1, params)
            scores = emb @ y
            shifted = scores - scores.max()
            e = np.exp(shifted)
            probs = e / e.sum()
            loss += -np.log(probs[target])
            dscores = probs.copy()
            dscores[target] -= 1.0
            dscores /= total_tokens
            grads.d_embedding += np.outer(dscores, y)
            dy = emb.T @ dscores
            dleft, dright = _backward(dy, cache, params, grads.params)
            grads.d_states[span.left_boundary] += dleft
            grads.d_states[span.right_boundary] += dright
    return float(loss / total_tokens), grads
