"""Classifier fine-tuning with cross-entropy plus supervised contrastive loss."""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from ..metrics import accuracy, f1_scores
from ..objectives import LossWeights, ce_loss, finetune_loss, scl_loss
from ..rng import substream
from .adam import AdamState, adam_update
from .encoder import encoder_backward, encoder_forward, pool_backward, pool_states
from .train import TrainState


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _predict(state: TrainState, head: dict[str, np.ndarray], tokens) -> tuple[np.ndarray, object, int]:
    states, cache = encoder_forward(state.disc, tokens, state.config)
    pooled = pool_states(states, state.config)
    return pooled, cache, states.shape[0]


def finetune_classifier(
    train_data: list[tuple[list[int], int]],
    state: TrainState,
    weights: LossWeights,
    epochs: int,
    num_classes: int,
    seed: int = 0,
    lr: float = 1e-3,
    batch_size: int = 8,
    eval_data: list[tuple[list[int], int]] | None = None,
) -> dict:
    """Train a classification head (and the discriminator encoder) on pooled
    representations with lambda_cls * CE + (1 - lambda_cls) * SCL.

    Returns a report with accuracy and per-class F1 on ``eval_data``
    (defaulting to the training set) plus the per-epoch combined loss.
    """
    if num_classes < 2:
        raise ContractViolation("need at least 2 classes")
    for _, label in train_data:
        if not 0 <= label < num_classes:
            raise ContractViolation(f"label {label} outside [0, {num_classes})")

    cfg = state.config
    rng = substream(seed, "init", "classifier")
    head = {
        "cls.w": rng.normal(0.0, 0.02, size=(num_classes, cfg.d_model)),
        "cls.b": np.zeros(num_classes),
    }
    opt = AdamState()
    epoch_losses: list[float] = []
    order_rng = substream(seed, "order")

    for _epoch in range(epochs):
        order = order_rng.permutation(len(train_data))
        running = 0.0
        batches = 0
        for lo in range(0, len(order), batch_size):
            batch = [train_data[i] for i in order[lo : lo + batch_size]]
            labels = np.array([lab for _, lab in batch], dtype=np.int64)
            pooled_rows = []
            caches = []
            lengths = []
            for tokens, _ in batch:
                pooled, cache, length = _predict(state, head, tokens)
                pooled_rows.append(pooled)
                caches.append(cache)
                lengths.append(length)
            feats = np.stack(pooled_rows)
            logits = feats @ head["cls.w"].T + head["cls.b"]
            probs = _softmax_rows(logits)
            l_ce, _ = ce_loss(probs, labels)
            n = len(batch)
            dlogits = probs.copy()
            dlogits[np.arange(n), labels] -= 1.0
            dlogits /= n

            if weights.lambda_cls < 1.0 and n >= 2:
                l_scl, dfeats_scl = scl_loss(feats, labels, weights.temperature)
            else:
                l_scl, dfeats_scl = 0.0, np.zeros_like(feats)
            combined = finetune_loss(l_ce, l_scl, weights)
            running += combined
            batches += 1

            dfeats = weights.lambda_cls * (dlogits @ head["cls.w"]) + (
                1.0 - weights.lambda_cls
            ) * dfeats_scl
            grads = {
                "cls.w": weights.lambda_cls * (dlogits.T @ feats),
                "cls.b": weights.lambda_cls * dlogits.sum(axis=0),
            }
            enc_grads: dict[str, np.ndarray] = {}
            for row, cache in enumerate(caches):
                dstates = pool_backward(dfeats[row], lengths[row], cfg)
                g = encoder_backward(state.disc, cache, dstates, cfg)
                for k, v in g.items():
                    if k in enc_grads:
                        enc_grads[k] += v
                    else:
                        enc_grads[k] = v
            grads.update({f"disc.{k}": v for k, v in enc_grads.items()})
            params = dict(head)
            params.update({f"disc.{k}": v for k, v in state.disc.items()})
            adam_update(params, grads, opt, lr=lr)
        epoch_losses.append(running / max(batches, 1))

    eval_set = train_data if eval_data is None else eval_data
    preds = []
    gold = []
    for tokens, label in eval_set:
        pooled, _, _ = _predict(state, head, tokens)
        logits = head["cls.w"] @ pooled + head["cls.b"]
        preds.append(int(np.argmax(logits)))
        gold.append(label)
    f1 = f1_scores(preds, gold, classes=list(range(num_classes)))
    return {
        "accuracy": accuracy(preds, gold),
        "per_class_f1": f1["per_class"],
        "macro_f1": f1["macro"],
        "epoch_loss": epoch_losses,
        "num_eval": len(eval_set),
    }
