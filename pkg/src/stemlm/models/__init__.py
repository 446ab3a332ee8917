from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .compose import CompositionError, mixws_compose, mixws_compose_log, within_class_share
from .config import VARIANTS, ConfigError, ModelConfig, config_for_variant
from .lm import LanguageModel, MixtureHead, SoftmaxHead
from .losses import loss_stem, loss_word, mtl_loss
from .scoring import composed_token_log_probs, token_log_probs
from .train import TrainResult, train

__all__ = [
    "Checkpoint", "CheckpointError", "load_checkpoint", "save_checkpoint",
    "CompositionError", "mixws_compose", "mixws_compose_log", "within_class_share",
    "VARIANTS", "ConfigError", "ModelConfig", "config_for_variant",
    "LanguageModel", "MixtureHead", "SoftmaxHead",
    "loss_stem", "loss_word", "mtl_loss",
    "composed_token_log_probs", "token_log_probs", "TrainResult", "train",
]
