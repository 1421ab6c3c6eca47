from .training import EncoderSchedule, TrainResult, draw_masks, train_causal_lm, train_masked_lm
from .transformer import (
    BIDIRECTIONAL,
    CAUSAL,
    EncoderConfig,
    LayerStack,
    TextEncoder,
    default_config,
    forward_collect,
)
from .vocab import RESERVED, TokenSequence, Vocabulary, tokenize, tokenize_batch

__all__ = [
    "BIDIRECTIONAL",
    "CAUSAL",
    "EncoderConfig",
    "EncoderSchedule",
    "LayerStack",
    "RESERVED",
    "TextEncoder",
    "TokenSequence",
    "TrainResult",
    "Vocabulary",
    "default_config",
    "draw_masks",
    "forward_collect",
    "tokenize",
    "tokenize_batch",
    "train_causal_lm",
    "train_masked_lm",
]
