from .corpus import Corpus, build_corpus, dumps_corpus, dumps_prompts, loads_corpus, loads_prompts, sample_heldout
from .detect import Detection, detect_objects
from .grammar import caption_words, canonical, realize_caption, sample_prompt
from .render import PALETTE, Scene, paint, render_reference, render_scene
from .report import EvalReport, aggregate, aggregate_csv, aggregate_rows, per_prompt_csv, read_aggregate_csv
from .score import compile_predicates, score, score_detections
from .spec import (
    SKILLS,
    Comparison,
    Negation,
    ObjectClause,
    PromptSpec,
    Relation,
    Universal,
    from_sexpr,
    to_sexpr,
    validate,
)

__all__ = [
    "Comparison",
    "Corpus",
    "Detection",
    "EvalReport",
    "Negation",
    "ObjectClause",
    "PALETTE",
    "PromptSpec",
    "Relation",
    "SKILLS",
    "Scene",
    "Universal",
    "aggregate",
    "aggregate_csv",
    "aggregate_rows",
    "build_corpus",
    "canonical",
    "caption_words",
    "compile_predicates",
    "detect_objects",
    "dumps_corpus",
    "dumps_prompts",
    "from_sexpr",
    "loads_corpus",
    "loads_prompts",
    "paint",
    "per_prompt_csv",
    "read_aggregate_csv",
    "realize_caption",
    "render_reference",
    "render_scene",
    "sample_heldout",
    "sample_prompt",
    "score",
    "score_detections",
    "to_sexpr",
    "validate",
]
