"""The five scalar losses and their mixing rules.

All functions work in float64, return (loss, gradient) pairs, and raise
ContractViolation on malformed inputs rather than producing garbage.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation, DivergenceError

_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights: total = mlm + lambda1*sbo + lambda2*disc during
    pretraining; lambda_cls*ce + (1-lambda_cls)*scl during fine-tuning."""

    lambda1: float = 1.0
    lambda2: float = 50.0
    lambda_cls: float = 0.9
    temperature: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.temperature <= 0:
            raise ContractViolation("loss weights must be non-negative, temperature positive")
        if not 0.0 <= self.lambda_cls <= 1.0:
            raise ContractViolation(f"lambda_cls must be in [0,1], got {self.lambda_cls}")


@dataclass(frozen=True)
class LossReport:
    l_mlm: float
    l_sbo: float
    l_disc: float
    total: float

    @classmethod
    def build(cls, l_mlm: float, l_sbo: float, l_disc: float, weights: LossWeights) -> "LossReport":
        total = total_pretrain_loss(l_mlm, l_sbo, l_disc, weights)
        return cls(l_mlm=l_mlm, l_sbo=l_sbo, l_disc=l_disc, total=total)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mlm_loss(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean masked-token negative log-likelihood.

    logits: [positions, vocab]; labels: one target id per position.
    Returns (loss, dloss/dlogits) with gradient (softmax - onehot)/positions.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ContractViolation("mlm_loss expects [P,V] logits and P labels")
    P, V = logits.shape
    if P == 0:
        raise ContractViolation("mlm_loss requires at least one masked position")
    if labels.min() < 0 or labels.max() >= V:
        raise ContractViolation(f"label outside vocab of size {V}")
    probs = _softmax_rows(logits)
    picked = probs[np.arange(P), labels]
    loss = float(-np.log(picked).mean())
    grad = probs.copy()
    grad[np.arange(P), labels] -= 1.0
    grad /= P
    return loss, grad


def disc_loss(disc_probs: np.ndarray, replaced_flags) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy of replaced-token detection over all tokens.

    Probabilities are clamped to [1e-7, 1-1e-7] before the log; the gradient
    is zero where the clamp was active.
    """
    p_raw = np.asarray(disc_probs, dtype=np.float64)
    flags = np.asarray(replaced_flags, dtype=np.float64)
    if p_raw.shape != flags.shape or p_raw.ndim != 1 or p_raw.size == 0:
        raise ContractViolation("disc_loss expects matching 1-d probs and flags")
    p = np.clip(p_raw, _CLAMP, 1.0 - _CLAMP)
    n = p.size
    loss = float(-(flags * np.log(p) + (1.0 - flags) * np.log(1.0 - p)).mean())
    grad = (-(flags / p) + (1.0 - flags) / (1.0 - p)) / n
    grad[(p_raw < _CLAMP) | (p_raw > 1.0 - _CLAMP)] = 0.0
    return loss, grad


def ce_loss(probs: np.ndarray, labels, validate: bool = True) -> tuple[float, np.ndarray]:
    """Cross entropy -(1/N) sum_i log p[i, y_i] over probability rows.

    ``validate=False`` skips the row-sum check; finite-difference probing
    necessarily steps off the simplex, and the loss extends smoothly there.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ContractViolation("ce_loss expects [N,C] probs and N labels")
    N, C = probs.shape
    if labels.min() < 0 or labels.max() >= C:
        raise ContractViolation(f"label outside class range {C}")
    if validate and np.abs(probs.sum(axis=1) - 1.0).max() > 1e-6:
        raise ContractViolation("probability rows must sum to 1 within 1e-6")
    picked = np.clip(probs[np.arange(N), labels], _CLAMP, None)
    loss = float(-np.log(picked).mean())
    grad = np.zeros_like(probs)
    grad[np.arange(N), labels] = -1.0 / (N * picked)
    return loss, grad


def scl_loss(
    features: np.ndarray, labels, temperature: float = 1.0
) -> tuple[float, np.ndarray]:
    """Supervised contrastive loss over a batch of representations.

    For each anchor i with at least one same-class partner:
        -1/(N_yi - 1) * sum_{j != i, y_j = y_i}
            log( exp(f_i . f_j / tau) / sum_{k != i} exp(f_i . f_k / tau) )
    Anchors whose class has a single member contribute zero. Returns
    (loss, dloss/dfeatures).
    """
    feats = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if feats.ndim != 2 or labels.shape != (feats.shape[0],):
        raise ContractViolation("scl_loss expects [N,d] features and N labels")
    N = feats.shape[0]
    if N < 2:
        raise ContractViolation("scl_loss requires a batch of at least 2")
    if temperature <= 0:
        raise ContractViolation("temperature must be positive")

    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(N, dtype=bool)
    pos_mask = same & off_diag
    pos_counts = pos_mask.sum(axis=1)  # N_yi - 1 per anchor
    if not pos_counts.any():
        warnings.warn("scl_loss: every class is a singleton; loss is 0", stacklevel=2)
        return 0.0, np.zeros_like(feats)

    sims = feats @ feats.T / temperature
    neg_inf = np.full_like(sims, -np.inf)
    sims_off = np.where(off_diag, sims, neg_inf)
    row_max = sims_off.max(axis=1, keepdims=True)
    exp_off = np.exp(sims_off - row_max)
    denom = exp_off.sum(axis=1, keepdims=True)
    log_denom = np.log(denom) + row_max  # log sum_{k != i} exp(s_ik)
    softmax_off = exp_off / denom  # p_ik over k != i

    active = pos_counts > 0
    inv_counts = np.zeros(N)
    inv_counts[active] = 1.0 / pos_counts[active]

    # L_i = -(1/P_i) sum_{j in pos} s_ij + log_denom_i   for active anchors
    pos_sim_sum = np.where(pos_mask, sims, 0.0).sum(axis=1)
    loss = float((-inv_counts * pos_sim_sum + active * log_denom[:, 0]).sum())

    # dL/ds_ij = p_ij - pos_mask_ij / P_i  (active rows only, j != i)
    G = softmax_off - pos_mask * inv_counts[:, None]
    G[~active] = 0.0
    G[~off_diag] = 0.0
    dfeats = (G @ feats + G.T @ feats) / temperature
    return loss, dfeats


def total_pretrain_loss(l_mlm: float, l_sbo: float, l_disc: float, weights: LossWeights) -> float:
    """l_mlm + lambda1 * l_sbo + lambda2 * l_disc, with NaN detection."""
    for name, value in (("l_mlm", l_mlm), ("l_sbo", l_sbo), ("l_disc", l_disc)):
        if not math.isfinite(value):
            raise DivergenceError(name, value)
    return l_mlm + weights.lambda1 * l_sbo + weights.lambda2 * l_disc


def finetune_loss(ce: float, scl: float, weights: LossWeights) -> float:
    """lambda_cls * ce + (1 - lambda_cls) * scl."""
    return weights.lambda_cls * ce + (1.0 - weights.lambda_cls) * scl
