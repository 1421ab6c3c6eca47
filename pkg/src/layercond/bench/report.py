"""Per-skill aggregation of prompt scores and the CSV tables built from it."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DataError
from .spec import SKILLS, PromptSpec

SKILL_COLUMNS = {
    "Attribute": "attribute", "Scene": "scene", "Spatial": "spatial", "Counting": "counting",
    "Comparison": "comparison", "Differentiation": "differentiation", "Negation": "negation",
    "Universality": "universality",
}
AGGREGATE_HEADER = ["label", "avg"] + [SKILL_COLUMNS[s] for s in SKILLS] + ["n_prompts"]


@dataclass
class EvalReport:
    aggregate: float
    skills: dict[str, float | None]  # None: no prompt carries the skill
    counts: dict[str, int]
    scores: list[float]
    tags: list[frozenset[str]]
    seeds: list[int] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def n_prompts(self) -> int:
        return len(self.scores)


def aggregate(scores, specs: list[PromptSpec], seeds=(), metadata: dict | None = None) -> EvalReport:
    scores = [float(s) for s in scores]
    if len(scores) != len(specs):
        raise ContractError(f"{len(scores)} scores for {len(specs)} prompts")
    if any(not 0.0 <= s <= 1.0 for s in scores):
        raise ContractError("scores must lie in [0, 1]")
    tags = [s.tags for s in specs]
    skills, counts = {}, {}
    for skill in SKILLS:
        vals = [sc for sc, t in zip(scores, tags) if skill in t]
        counts[skill] = len(vals)
        skills[skill] = float(np.mean(vals)) if vals else None
    agg = float(np.mean(scores)) if scores else float("nan")
    return EvalReport(agg, skills, counts, scores, tags, list(seeds), dict(metadata or {}))


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def per_prompt_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["prompt_id", "tags", "score"])
    for i, (t, s) in enumerate(zip(report.tags, report.scores)):
        w.writerow([i, "|".join(k for k in SKILLS if k in t), f"{s:.6f}"])
    return buf.getvalue()


def aggregate_rows(labelled: list[tuple[str, EvalReport]], extra: dict[str, list[str]] | None = None) -> str:
    """Aggregate CSV: one row per report; an empty cell marks an absent skill."""
    extra = extra or {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_HEADER + list(extra))
    for i, (label, rep) in enumerate(labelled):
        w.writerow([label, _fmt(rep.aggregate)] + [_fmt(rep.skills[s]) for s in SKILLS] + [rep.n_prompts]
                   + [vals[i] for vals in extra.values()])
    return buf.getvalue()


def aggregate_csv(report: EvalReport, label: str = "run") -> str:
    return aggregate_rows([(label, report)])


def read_aggregate_csv(text: str) -> list[dict[str, str]]:
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and set(AGGREGATE_HEADER) - set(rows[0]):
        raise DataError("aggregate CSV lacks the expected columns")
    return rows
