"""Rubric model, performance bands, two-pass rubric evaluation and rubric generation."""

from __future__ import annotations

import difflib
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any

from rubiscot.errors import (
    MissingCriterion,
    OutOfRange,
    RubiscotError,
    RubricPassError,
    UnparseableResponse,
    ValidationFailed,
)
from rubiscot.llm import Attachment, Backend, GenerationConfig, make_request
from rubiscot.model import Section, SectionKind, ThesisDocument, normalize_heading
from rubiscot.prompts import get_template
from rubiscot.rag import ScoredChunk, format_context
from rubiscot.schemas import ask_structured


class PerformanceLevel(str, Enum):
    EXCELLENT = "EXCELLENT"
    GOOD = "GOOD"
    SATISFACTORY = "SATISFACTORY"
    NEEDS_IMPROVEMENT = "NEEDS_IMPROVEMENT"
    FAILING = "FAILING"
    TOTAL_FAILURE = "TOTAL_FAILURE"

    @property
    def band(self) -> tuple[float, float]:
        """``[low, high)``; EXCELLENT alone is closed at 100."""
        return _BANDS[self]

    @property
    def label(self) -> str:
        return self.value.replace("_", " ").title()


_BANDS = {
    PerformanceLevel.EXCELLENT: (90.0, 100.0),
    PerformanceLevel.GOOD: (75.0, 90.0),
    PerformanceLevel.SATISFACTORY: (60.0, 75.0),
    PerformanceLevel.NEEDS_IMPROVEMENT: (50.0, 60.0),
    PerformanceLevel.FAILING: (25.0, 50.0),
    PerformanceLevel.TOTAL_FAILURE: (0.0, 25.0),
}

# Chapters scored in this order, one rubric each.
RUBRIC_CHAPTERS = (
    SectionKind.INTRODUCTION,
    SectionKind.LITERATURE_REVIEW,
    SectionKind.METHODOLOGY,
    SectionKind.RESULTS,
    SectionKind.CONCLUSION,
)


def classify_band(percentage: float) -> PerformanceLevel:
    if not (isinstance(percentage, (int, float)) and 0.0 <= percentage <= 100.0):
        raise OutOfRange(f"percentage {percentage!r} outside [0, 100]")
    for level, (low, _high) in _BANDS.items():
        if percentage >= low:
            return level
    raise AssertionError("bands do not cover [0, 100]")


def weighted_mean(values, weights) -> float:
    values, weights = list(values), list(weights)
    return math.fsum(v * w for v, w in zip(values, weights)) / math.fsum(weights)


# -- rubric model ----------------------------------------------------------


@dataclass(frozen=True)
class Criterion:
    criterion_id: str
    name: str
    weight: float
    descriptors: dict[PerformanceLevel, str]


@dataclass(frozen=True)
class Rubric:
    rubric_id: str
    target_section: SectionKind
    criteria: tuple[Criterion, ...]

    def normalized(self) -> Rubric:
        total = math.fsum(c.weight for c in self.criteria)
        return replace(
            self, criteria=tuple(replace(c, weight=c.weight / total) for c in self.criteria)
        )

    @property
    def weights(self) -> dict[str, float]:
        return {c.criterion_id: c.weight for c in self.criteria}

    def as_prompt_table(self) -> str:
        levels = list(PerformanceLevel)
        head = "| Criterion | Weight | " + " | ".join(
            f"{lv.label} ({int(lv.band[0])}-{int(lv.band[1]) - (lv is not PerformanceLevel.EXCELLENT)}%)"
            for lv in levels
        ) + " |"
        rows = [head, "|" + "---|" * (len(levels) + 2)]
        for c in self.criteria:
            cells = [f"{c.criterion_id}: {c.name}", f"{c.weight:.3g}"]
            cells += [" ".join(c.descriptors.get(lv, "").split()) for lv in levels]
            rows.append("| " + " | ".join(cells) + " |")
        return "\n".join(rows)


def validate_rubric(rubric: Rubric) -> list[str]:
    """Violated rules, in a fixed order; empty when the rubric is well formed."""
    violations = []
    if not rubric.criteria:
        violations.append("criteria empty")
    ids = [c.criterion_id for c in rubric.criteria]
    if len(set(ids)) != len(ids):
        violations.append("duplicate criterion id")
    if any(not (math.isfinite(c.weight) and c.weight > 0) for c in rubric.criteria):
        violations.append("non-positive weight")
    if any(
        lv not in c.descriptors or not str(c.descriptors[lv]).strip()
        for c in rubric.criteria
        for lv in PerformanceLevel
    ):
        violations.append("descriptor missing")
    return violations


def _level_key(key: str) -> PerformanceLevel | None:
    norm = key.strip().upper().replace(" ", "_").replace("-", "_")
    try:
        return PerformanceLevel(norm)
    except ValueError:
        return None


def rubric_from_dict(data: dict[str, Any], *, normalize: bool = True) -> Rubric:
    """Build from the rubric file format; weights default to equal."""
    criteria = []
    for c in data.get("criteria") or []:
        descriptors = {}
        for k, v in (c.get("descriptors") or {}).items():
            level = _level_key(k)
            if level is not None:
                descriptors[level] = str(v)
        criteria.append(
            Criterion(
                criterion_id=str(c["id"]),
                name=str(c.get("name") or c["id"]),
                weight=float(c.get("weight", 1.0)),
                descriptors=descriptors,
            )
        )
    rubric = Rubric(
        rubric_id=str(data["rubric_id"]),
        target_section=SectionKind(str(data["target_section"]).upper()),
        criteria=tuple(criteria),
    )
    if normalize:
        violations = validate_rubric(rubric)
        if violations:
            raise ValidationFailed(violations)
        rubric = rubric.normalized()
    return rubric


def rubric_to_dict(rubric: Rubric) -> dict[str, Any]:
    return {
        "rubric_id": rubric.rubric_id,
        "target_section": rubric.target_section.value,
        "criteria": [
            {
                "id": c.criterion_id,
                "name": c.name,
                "weight": c.weight,
                "descriptors": {lv.value: c.descriptors[lv] for lv in PerformanceLevel if lv in c.descriptors},
            }
            for c in rubric.criteria
        ],
    }


def load_rubric(path: str | Path) -> Rubric:
    return rubric_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_rubric(rubric: Rubric, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(rubric_to_dict(rubric), indent=2) + "\n", encoding="utf-8")
    return path


def load_rubric_dir(directory: str | Path) -> dict[SectionKind, Rubric]:
    rubrics: dict[SectionKind, Rubric] = {}
    for path in sorted(Path(directory).glob("*.json")):
        rubric = load_rubric(path)
        if rubric.target_section in rubrics:
            raise ValueError(f"two rubrics target {rubric.target_section.value}")
        rubrics[rubric.target_section] = rubric
    return rubrics


# -- evaluation ------------------------------------------------------------


@dataclass(frozen=True)
class CriterionScore:
    criterion_id: str
    percentage: float
    reasoning: str


@dataclass(frozen=True)
class SingleRunEvaluation:
    run_index: int
    per_criterion: tuple[CriterionScore, ...]
    run_average: float

    def percentages(self) -> dict[str, float]:
        return {s.criterion_id: s.percentage for s in self.per_criterion}

    def as_table(self) -> str:
        rows = ["| Criterion | Percentage | Reasoning |", "|---|---|---|"]
        rows += [f"| {s.criterion_id} | {s.percentage:g} | {' '.join(s.reasoning.split())} |" for s in self.per_criterion]
        rows.append(f"| Average | {self.run_average:g} | |")
        return "\n".join(rows)


@dataclass(frozen=True)
class CriterionInfo:
    criterion_id: str
    name: str
    weight: float


@dataclass(frozen=True)
class RubricEvaluation:
    chapter: SectionKind
    section_heading: str
    matched_section_note: str | None
    criteria: tuple[CriterionInfo, ...]
    runs: tuple[SingleRunEvaluation, ...]
    per_criterion_final: dict[str, float]
    final_average: float
    final_level: PerformanceLevel


def score_run(rubric: Rubric, run_index: int, scores: list[CriterionScore]) -> SingleRunEvaluation:
    by_id = {s.criterion_id: s for s in scores}
    ordered = []
    for c in rubric.criteria:
        if c.criterion_id not in by_id:
            raise MissingCriterion(c.criterion_id)
        ordered.append(by_id[c.criterion_id])
    average = weighted_mean((s.percentage for s in ordered), (c.weight for c in rubric.criteria))
    return SingleRunEvaluation(run_index, tuple(ordered), average)


def combine_runs(
    rubric: Rubric,
    first: SingleRunEvaluation,
    second: SingleRunEvaluation,
    *,
    section_heading: str = "",
    matched_section_note: str | None = None,
) -> RubricEvaluation:
    p1, p2 = first.percentages(), second.percentages()
    finals = {c.criterion_id: (p1[c.criterion_id] + p2[c.criterion_id]) / 2 for c in rubric.criteria}
    final_average = weighted_mean(finals.values(), (c.weight for c in rubric.criteria))
    # guard against a one-ulp drift past 100 on all-100 inputs
    final_average = min(100.0, max(0.0, final_average))
    return RubricEvaluation(
        chapter=rubric.target_section,
        section_heading=section_heading,
        matched_section_note=matched_section_note,
        criteria=tuple(CriterionInfo(c.criterion_id, c.name, c.weight) for c in rubric.criteria),
        runs=(first, second),
        per_criterion_final=finals,
        final_average=final_average,
        final_level=classify_band(final_average),
    )


_ALIASES: dict[SectionKind, tuple[str, ...]] = {
    SectionKind.INTRODUCTION: ("introduction", "motivation", "overview"),
    SectionKind.LITERATURE_REVIEW: (
        "literature", "related work", "background", "state of the art", "prior work", "theoretical framework",
    ),
    SectionKind.METHODOLOGY: ("method", "research design", "approach", "experimental setup", "study design"),
    SectionKind.RESULTS: ("result", "finding", "evaluation", "experiment", "analysis"),
    SectionKind.CONCLUSION: ("conclu", "summary", "outlook", "future work", "closing remarks"),
}


def match_section(doc: ThesisDocument, chapter: SectionKind) -> tuple[Section, str | None]:
    """Find the chapter to assess, noting any deviation from the canonical name.

    Order: exact kind, alias keywords in the heading, fuzzy string match,
    then the whole thesis as a last resort. Anything but an exact kind
    match carries a non-empty deviation note.
    """
    exact = doc.section_of_kind(chapter)
    if exact is not None:
        return exact, None
    candidates = [s for s in doc.sections if s.kind is SectionKind.OTHER]
    for s in candidates:
        heading = normalize_heading(s.heading)
        if any(alias in heading for alias in _ALIASES.get(chapter, ())):
            return s, f"Chapter names do not match: '{s.heading}' assessed as {chapter.label}."
    names = {normalize_heading(s.heading): s for s in candidates}
    close = difflib.get_close_matches(chapter.label.lower(), list(names), n=1, cutoff=0.6)
    if close:
        s = names[close[0]]
        return s, f"Chapter names do not match: '{s.heading}' assessed as {chapter.label}."
    whole = Section(
        heading=doc.title or "Entire thesis",
        kind=SectionKind.OTHER,
        body=doc.raw_text,
        char_range=(0, len(doc.raw_text)),
    )
    return whole, f"No chapter resembling {chapter.label} was found; the whole thesis was assessed."


def evaluate_section(
    section: Section,
    rubric: Rubric,
    expectations: list[ScoredChunk],
    backend: Backend,
    run_index: int,
    *,
    config: GenerationConfig | None = None,
    matched_section_note: str | None = None,
    first_run: SingleRunEvaluation | None = None,
    template_dir=None,
) -> SingleRunEvaluation:
    """One rubric pass over ``section``.

    Pass 2 re-sends the same material with the second-look instruction and
    pass 1's table attached as ``first_run``.
    """
    config = config or GenerationConfig()
    if run_index not in (1, 2):
        raise ValueError("run_index must be 1 or 2")
    if run_index == 2 and first_run is None:
        raise ValueError("pass 2 needs the pass-1 evaluation")
    if section.kind is not rubric.target_section and not matched_section_note:
        raise ValueError(
            f"rubric {rubric.rubric_id} targets {rubric.target_section.value}; "
            f"section {section.heading!r} needs a deviation note"
        )
    chapter = rubric.target_section
    template_id = "RUBRIC_ASSESSMENT" if run_index == 1 else "RUBRIC_ASSESSMENT/PASS2"
    template = get_template(template_id, template_dir)
    user_text = template.render(
        {"section": chapter.label, "rubric": rubric.as_prompt_table(), "context": format_context(expectations)}
    )
    attachments = [Attachment("thesis_chapter", f"{section.heading}\n\n{section.body}")]
    if matched_section_note:
        attachments.append(Attachment("chapter_deviation", matched_section_note))
    if first_run is not None:
        attachments.append(Attachment("first_pass_evaluation", first_run.as_table()))
    request = make_request(
        f"RUBRIC_ASSESSMENT/{chapter.value}/PASS{run_index}", user_text, config, attachments
    )

    def check(parsed: dict) -> SingleRunEvaluation:
        scores = [CriterionScore(s["criterion_id"], s["percentage"], s["reasoning"]) for s in parsed["scores"]]
        seen: set[str] = set()
        for s in scores:
            if s.criterion_id in rubric.weights and s.criterion_id in seen:
                raise UnparseableResponse(f"criterion {s.criterion_id!r} scored twice")
            seen.add(s.criterion_id)
        return score_run(rubric, run_index, scores)

    return ask_structured(backend, request, config, template.response_schema_id, check)


def two_pass_evaluate(
    section: Section,
    rubric: Rubric,
    expectations: list[ScoredChunk],
    backend: Backend,
    *,
    config: GenerationConfig | None = None,
    matched_section_note: str | None = None,
    template_dir=None,
) -> RubricEvaluation:
    kwargs = dict(config=config, matched_section_note=matched_section_note, template_dir=template_dir)
    try:
        first = evaluate_section(section, rubric, expectations, backend, 1, **kwargs)
    except RubiscotError as exc:
        raise RubricPassError(1, exc) from exc
    try:
        second = evaluate_section(section, rubric, expectations, backend, 2, first_run=first, **kwargs)
    except RubiscotError as exc:
        raise RubricPassError(2, exc, first_run=first) from exc
    return combine_runs(
        rubric, first, second, section_heading=section.heading, matched_section_note=matched_section_note
    )


# -- generation ------------------------------------------------------------

CREATION_STEPS = 5  # step 6 (document export) is the rubric file written by save_rubric


def generate_rubric(
    chapter_source_summary: str,
    target_section: SectionKind,
    backend: Backend,
    *,
    chapter_label: str,
    config: GenerationConfig | None = None,
    rubric_id: str | None = None,
    template_dir=None,
) -> Rubric:
    """Run the chained rubric-creation prompts and return a validated, normalized rubric.

    Steps 1-4 (summary, expectations, draft, review) are free text and each
    later step sees every earlier answer. Step 5 returns the revised
    rubric as a structured table.
    """
    config = config or GenerationConfig()
    attachments = [Attachment("chapter_source", chapter_source_summary)]
    parsed: Any = None
    for step in range(1, CREATION_STEPS + 1):
        template = get_template(f"RUBRIC_CREATION/{step}", template_dir)
        request = make_request(
            f"RUBRIC_CREATION/{step}",
            template.render({"placeholder_chapter": chapter_label}),
            config,
            attachments,
        )
        parsed = ask_structured(backend, request, config, template.response_schema_id)
        if step < CREATION_STEPS:
            attachments = attachments + [Attachment(f"step_{step}_answer", parsed)]

    rubric = rubric_from_dict(
        {
            "rubric_id": rubric_id or parsed.get("rubric_id") or f"{target_section.value.lower()}-generated",
            "target_section": target_section.value,
            "criteria": parsed["criteria"],
        },
        normalize=False,
    )
    violations = validate_rubric(rubric)
    if violations:
        raise ValidationFailed(violations)
    return rubric.normalized()
