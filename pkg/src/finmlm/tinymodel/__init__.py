"""Small generator/discriminator encoder pair for end-to-end toy runs."""

from .adam import AdamState, adam_update
from .checkpoint import load_checkpoint, save_checkpoint
from .encoder import EncoderConfig, encoder_backward, encoder_forward, init_encoder_params
from .finetune import finetune_classifier
from .perplexity import PerplexityReport, perplexity, phrase_probe
from .train import PretrainResult, TrainState, init_train_state, pretrain, sample_replacements

__all__ = [
    "AdamState",
    "adam_update",
    "load_checkpoint",
    "save_checkpoint",
    "EncoderConfig",
    "encoder_forward",
    "encoder_backward",
    "init_encoder_params",
    "finetune_classifier",
    "PerplexityReport",
    "perplexity",
    "phrase_probe",
    "PretrainResult",
    "TrainState",
    "init_train_state",
    "pretrain",
    "sample_replacements",
]
