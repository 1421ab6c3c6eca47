from .cache import EmbeddingCache, caption_hash, precompute_cache
from .conditioning import (
    ConditioningBundle,
    NullCondition,
    Projection,
    condition,
    encode_captions,
    make_null_condition,
    project,
)
from .strategies import (
    LAST,
    LAST_TOKEN_POOL,
    MEAN,
    MEAN_POOL,
    NORMMEAN,
    SINGLE,
    ExtractionStrategy,
    extract,
    normalize_tokens,
    pool,
)

__all__ = [
    "ConditioningBundle",
    "EmbeddingCache",
    "ExtractionStrategy",
    "LAST",
    "LAST_TOKEN_POOL",
    "MEAN",
    "MEAN_POOL",
    "NORMMEAN",
    "NullCondition",
    "Projection",
    "SINGLE",
    "caption_hash",
    "condition",
    "encode_captions",
    "extract",
    "make_null_condition",
    "normalize_tokens",
    "pool",
    "precompute_cache",
    "project",
]
