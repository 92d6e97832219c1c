"""Pretraining and fine-tuning losses with hand-derived gradients."""

from .activations import gelu, gelu_grad, layer_norm, layer_norm_backward
from .gradcheck import grad_check, pack_arrays, unpack_arrays
from .losses import (
    LossReport,
    LossWeights,
    ce_loss,
    disc_loss,
    finetune_loss,
    mlm_loss,
    scl_loss,
    total_pretrain_loss,
)
from .sbo import SboGrads, SboParams, init_sbo_params, sbo_loss, sbo_representation

__all__ = [
    "gelu",
    "gelu_grad",
    "layer_norm",
    "layer_norm_backward",
    "grad_check",
    "pack_arrays",
    "unpack_arrays",
    "LossReport",
    "LossWeights",
    "mlm_loss",
    "disc_loss",
    "ce_loss",
    "scl_loss",
    "total_pretrain_loss",
    "finetune_loss",
    "SboGrads",
    "SboParams",
    "init_sbo_params",
    "sbo_loss",
    "sbo_representation",
]
