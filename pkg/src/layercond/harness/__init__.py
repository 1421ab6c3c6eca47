from .checkpoint import Checkpoint
from .config import RunConfig, validate_config
from .pipeline import (
    DiffusionRun,
    EvalResult,
    LoadedEncoder,
    LoadedModel,
    evaluate,
    load_encoder,
    load_model,
    train_diffusion,
    train_encoder,
    write_evaluation,
)
from .rng import stream_seed, substream

__all__ = [
    "Checkpoint",
    "DiffusionRun",
    "EvalResult",
    "LoadedEncoder",
    "LoadedModel",
    "RunConfig",
    "evaluate",
    "load_encoder",
    "load_model",
    "stream_seed",
    "substream",
    "train_diffusion",
    "train_encoder",
    "validate_config",
    "write_evaluation",
]
