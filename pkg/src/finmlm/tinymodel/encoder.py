"""Post-LN transformer encoder in numpy with a hand-written backward pass.

Everything runs at double precision on one unbatched sequence; training
loops over examples serially, which keeps results bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ContractViolation
from ..objectives.activations import gelu, gelu_grad, layer_norm, layer_norm_backward


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 2
    n_layers: int = 2
    ffn_dim: int = 128
    max_len: int = 128
    dropout: float = 0.0
    sbo_hidden: int = 64
    sbo_pos_dim: int = 16
    sbo_tied_projection: bool = True  # span scores share the generator output embedding
    pool: str = "first"  # or "mean"

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ConfigError("vocab_size must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.dropout != 0.0:
            raise ConfigError("the reference encoder is deterministic; dropout must be 0")
        if self.pool not in ("first", "mean"):
            raise ConfigError(f"pool must be 'first' or 'mean', got {self.pool!r}")

    def to_json(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_layers": self.n_layers,
            "ffn_dim": self.ffn_dim,
            "max_len": self.max_len,
            "dropout": self.dropout,
            "sbo_hidden": self.sbo_hidden,
            "sbo_pos_dim": self.sbo_pos_dim,
            "sbo_tied_projection": self.sbo_tied_projection,
            "pool": self.pool,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EncoderConfig":
        return cls(**data)


def init_encoder_params(
    cfg: EncoderConfig, rng: np.random.Generator, init_scale: float = 0.02
) -> dict[str, np.ndarray]:
    d, f = cfg.d_model, cfg.ffn_dim
    params: dict[str, np.ndarray] = {
        "tok_emb": rng.normal(0.0, init_scale, size=(cfg.vocab_size, d)),
        "pos_emb": rng.normal(0.0, init_scale, size=(cfg.max_len, d)),
    }
    for i in range(cfg.n_layers):
        p = f"l{i}."
        for name in ("wq", "wk", "wv", "wo"):
            params[p + "attn." + name] = rng.normal(0.0, init_scale, size=(d, d))
        for name in ("bq", "bk", "bv", "bo"):
            params[p + "attn." + name] = np.zeros(d)
        params[p + "ln1.gain"] = np.ones(d)
        params[p + "ln1.bias"] = np.zeros(d)
        params[p + "ffn.w1"] = rng.normal(0.0, init_scale, size=(f, d))
        params[p + "ffn.b1"] = np.zeros(f)
        params[p + "ffn.w2"] = rng.normal(0.0, init_scale, size=(d, f))
        params[p + "ffn.b2"] = np.zeros(d)
        params[p + "ln2.gain"] = np.ones(d)
        params[p + "ln2.bias"] = np.zeros(d)
    return params


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    L, d = x.shape
    return x.reshape(L, n_heads, d // n_heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    H, L, dh = x.shape
    return x.transpose(1, 0, 2).reshape(L, H * dh)


def encoder_forward(params: dict[str, np.ndarray], ids, cfg: EncoderConfig):
    """States [L, d_model] for one token-id sequence, plus the backward cache."""
    ids = np.asarray(ids, dtype=np.int64)
    L = ids.shape[0]
    if L > cfg.max_len:
        raise ContractViolation(f"sequence length {L} exceeds max_len {cfg.max_len}")
    if L == 0:
        raise ContractViolation("empty sequence")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ContractViolation("token id outside vocabulary")

    scale = 1.0 / np.sqrt(cfg.d_model // cfg.n_heads)
    x = params["tok_emb"][ids] + params["pos_emb"][:L]
    layer_caches = []
    for i in range(cfg.n_layers):
        p = f"l{i}."
        x_in = x
        q = x_in @ params[p + "attn.wq"].T + params[p + "attn.bq"]
        k = x_in @ params[p + "attn.wk"].T + params[p + "attn.bk"]
        v = x_in @ params[p + "attn.wv"].T + params[p + "attn.bv"]
        qh, kh, vh = (_split_heads(t, cfg.n_heads) for t in (q, k, v))
        scores = qh @ kh.transpose(0, 2, 1) * scale
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        attn = e / e.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(attn @ vh)
        attn_out = ctx @ params[p + "attn.wo"].T + params[p + "attn.bo"]
        x1, ln1_cache = layer_norm(x_in + attn_out, params[p + "ln1.gain"], params[p + "ln1.bias"])
        u = x1 @ params[p + "ffn.w1"].T + params[p + "ffn.b1"]
        g = gelu(u)
        ffn_out = g @ params[p + "ffn.w2"].T + params[p + "ffn.b2"]
        x, ln2_cache = layer_norm(x1 + ffn_out, params[p + "ln2.gain"], params[p + "ln2.bias"])
        layer_caches.append((x_in, qh, kh, vh, attn, ctx, ln1_cache, x1, u, g, ln2_cache))
    return x, (ids, layer_caches)


def encoder_backward(
    params: dict[str, np.ndarray],
    cache,
    dstates: np.ndarray,
    cfg: EncoderConfig,
) -> dict[str, np.ndarray]:
    """Parameter gradients from dloss/dstates; same keys as the params."""
    ids, layer_caches = cache
    L = ids.shape[0]
    scale = 1.0 / np.sqrt(cfg.d_model // cfg.n_heads)
    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    dx = dstates
    for i in reversed(range(cfg.n_layers)):
        p = f"l{i}."
        x_in, qh, kh, vh, attn, ctx, ln1_cache, x1, u, g, ln2_cache = layer_caches[i]

        dres2, dg2, db2 = layer_norm_backward(dx, ln2_cache)
        grads[p + "ln2.gain"] += dg2
        grads[p + "ln2.bias"] += db2
        dffn_out = dres2
        grads[p + "ffn.w2"] += dffn_out.T @ g
        grads[p + "ffn.b2"] += dffn_out.sum(axis=0)
        dg = dffn_out @ params[p + "ffn.w2"]
        du = dg * gelu_grad(u)
        grads[p + "ffn.w1"] += du.T @ x1
        grads[p + "ffn.b1"] += du.sum(axis=0)
        dx1 = du @ params[p + "ffn.w1"] + dres2

        dres1, dg1, db1 = layer_norm_backward(dx1, ln1_cache)
        grads[p + "ln1.gain"] += dg1
        grads[p + "ln1.bias"] += db1
        dattn_out = dres1
        grads[p + "attn.wo"] += dattn_out.T @ ctx
        grads[p + "attn.bo"] += dattn_out.sum(axis=0)
        dctx = _split_heads(dattn_out @ params[p + "attn.wo"], cfg.n_heads)
        dattn = dctx @ vh.transpose(0, 2, 1)
        dvh = attn.transpose(0, 2, 1) @ dctx
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dqh = dscores @ kh * scale
        dkh = dscores.transpose(0, 2, 1) @ qh * scale
        dq, dk, dv = (_merge_heads(t) for t in (dqh, dkh, dvh))
        dx_in = dres1
        for name, dmat in (("wq", dq), ("wk", dk), ("wv", dv)):
            grads[p + "attn." + name] += dmat.T @ x_in
            grads[p + "attn.b" + name[1]] += dmat.sum(axis=0)
            dx_in = dx_in + dmat @ params[p + "attn." + name]
        dx = dx_in

    np.add.at(grads["tok_emb"], ids, dx)
    grads["pos_emb"][:L] += dx
    return grads


def pool_states(states: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    return states[0] if cfg.pool == "first" else states.mean(axis=0)


def pool_backward(dpooled: np.ndarray, seq_len: int, cfg: EncoderConfig) -> np.ndarray:
    dstates = np.zeros((seq_len, dpooled.shape[0]))
    if cfg.pool == "first":
        dstates[0] = dpooled
    else:
        dstates[:] = dpooled / seq_len
    return dstates
