"""Domain types shared across the pipeline, plus thesis ingestion."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from rubiscot.errors import EmptyDocument


class DegreeLevel(str, Enum):
    BACHELOR = "BACHELOR"
    MASTER = "MASTER"
    UNKNOWN = "UNKNOWN"


class SectionKind(str, Enum):
    ABSTRACT = "ABSTRACT"
    INTRODUCTION = "INTRODUCTION"
    LITERATURE_REVIEW = "LITERATURE_REVIEW"
    METHODOLOGY = "METHODOLOGY"
    RESULTS = "RESULTS"
    DISCUSSION = "DISCUSSION"
    CONCLUSION = "CONCLUSION"
    OTHER = "OTHER"

    @property
    def label(self) -> str:
        return self.value.replace("_", " ").title()


class StageId(str, Enum):
    PRELIMINARY = "PRELIMINARY"
    GROUP_STRUCTURE = "GROUP_STRUCTURE"
    GROUP_CLARITY = "GROUP_CLARITY"
    GROUP_TECHNICAL = "GROUP_TECHNICAL"
    GROUP_EDITING = "GROUP_EDITING"
    GROUP_PLAGIARISM = "GROUP_PLAGIARISM"
    GROUP_FORMATTING = "GROUP_FORMATTING"
    CONTENT_EXTRACTION = "CONTENT_EXTRACTION"
    RUBRIC_ASSESSMENT = "RUBRIC_ASSESSMENT"
    REPORT = "REPORT"

    @property
    def is_group(self) -> bool:
        return self.value.startswith("GROUP_")


GROUP_STAGES: tuple[StageId, ...] = tuple(s for s in StageId if s.is_group)


class Severity(str, Enum):
    INFO = "INFO"
    MINOR = "MINOR"
    MAJOR = "MAJOR"
    BLOCKING = "BLOCKING"

    @property
    def rank(self) -> int:
        return list(Severity).index(self)


class RunStatus(str, Enum):
    COMPLETED = "COMPLETED"
    HALTED_PRELIMINARY = "HALTED_PRELIMINARY"
    FAILED = "FAILED"


@dataclass(frozen=True)
class Section:
    heading: str
    kind: SectionKind
    body: str
    char_range: tuple[int, int]

    def __post_init__(self) -> None:
        if not self.heading.strip():
            raise ValueError("section heading must be non-empty")
        start, end = self.char_range
        if not start < end:
            raise ValueError(f"empty section range {self.char_range}")


@dataclass(frozen=True)
class ThesisDocument:
    id: str
    title: str
    declared_level: DegreeLevel
    sections: tuple[Section, ...]
    raw_text: str
    source_path: str

    def section_of_kind(self, kind: SectionKind) -> Section | None:
        for section in self.sections:
            if section.kind is kind:
                return section
        return None


@dataclass(frozen=True)
class Finding:
    group: str
    severity: Severity
    observation: str
    evidence: str
    location: str | None = None

    def __post_init__(self) -> None:
        if not self.observation.strip() or not self.evidence.strip():
            raise ValueError("finding needs a non-empty observation and evidence")
        if self.severity is Severity.BLOCKING and self.group != StageId.PRELIMINARY.value:
            raise ValueError("only the preliminary stage may emit BLOCKING findings")


# -- thesis ingestion ------------------------------------------------------

_MD_HEADING = re.compile(r"^\s{0,3}(#{1,6})\s+(.+?)\s*#*\s*$")
_NUMBERING = re.compile(r"^(?:chapter\s+)?(?:\d+(?:\.\d+)*|[ivxlc]+)[.):]?\s+", re.IGNORECASE)
_WORD = re.compile(r"[A-Za-z][A-Za-z'’\-]*")
_MINOR_WORDS = frozenset(
    "a an the and or of in on for to with at by from vs via as into nor but".split()
)

_CANONICAL: dict[str, SectionKind] = {
    "abstract": SectionKind.ABSTRACT,
    "introduction": SectionKind.INTRODUCTION,
    "literature review": SectionKind.LITERATURE_REVIEW,
    "review of literature": SectionKind.LITERATURE_REVIEW,
    "review of the literature": SectionKind.LITERATURE_REVIEW,
    "methodology": SectionKind.METHODOLOGY,
    "research methodology": SectionKind.METHODOLOGY,
    "methods": SectionKind.METHODOLOGY,
    "method": SectionKind.METHODOLOGY,
    "materials and methods": SectionKind.METHODOLOGY,
    "results": SectionKind.RESULTS,
    "findings": SectionKind.RESULTS,
    "discussion": SectionKind.DISCUSSION,
    "conclusion": SectionKind.CONCLUSION,
    "conclusions": SectionKind.CONCLUSION,
}


def normalize_heading(heading: str) -> str:
    text = heading.strip().strip("#").strip()
    text = _NUMBERING.sub("", text)
    text = re.sub(r"\s+", " ", text).strip(" .:;").lower()
    return text


def classify_heading(heading: str) -> SectionKind:
    """Map a heading to its canonical kind; anything unlisted is OTHER."""
    return _CANONICAL.get(normalize_heading(heading), SectionKind.OTHER)


def _is_title_case(line: str) -> bool:
    text = line.strip()
    if not text or len(text) >= 80 or text[-1] in ".,;!?":
        return False
    if text[0] in "-*+>|`[!(" or "|" in text:
        return False
    words = _WORD.findall(_NUMBERING.sub("", text))
    if not words or not words[0][0].isupper():
        return False
    return all(w[0].isupper() or w.lower() in _MINOR_WORDS for w in words)


def _heading_lines(lines: list[str]) -> list[tuple[int, str]]:
    """Return ``(line_index, heading_text)`` for every heading line."""
    found = []
    in_fence = False
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped.startswith("```") or stripped.startswith("~~~"):
            in_fence = not in_fence
            continue
        if in_fence:
            continue
        m = _MD_HEADING.match(line.rstrip("\r\n"))
        if m:
            found.append((i, m.group(2).strip()))
            continue
        prev_blank = i == 0 or not lines[i - 1].strip()
        next_blank = i + 1 < len(lines) and not lines[i + 1].strip()
        if prev_blank and next_blank and _is_title_case(line):
            found.append((i, stripped))
    return found


def parse_thesis(raw_text: str, source_path: str = "") -> ThesisDocument:
    """Segment ``raw_text`` into sections at heading lines.

    Headings are Markdown ``#`` lines, or Title Case lines under 80
    characters surrounded by blank lines. The first non-blank line is the
    title; unless it is itself a canonical heading it stays front matter,
    and all front matter is attached to the first section. Section ranges
    tile ``raw_text`` exactly.
    """
    if not raw_text.strip():
        raise EmptyDocument("thesis text is blank")

    lines = raw_text.splitlines(keepends=True)
    offsets = [0]
    for line in lines:
        offsets.append(offsets[-1] + len(line))

    first = next(i for i, line in enumerate(lines) if line.strip())
    title = lines[first].strip().lstrip("#").strip()

    headings = [
        (i, text)
        for i, text in _heading_lines(lines)
        if i != first or classify_heading(text) is not SectionKind.OTHER
    ]
    if not headings:
        headings = [(first, title)]

    sections = []
    for n, (line_no, heading) in enumerate(headings):
        start = 0 if n == 0 else offsets[line_no]
        end = offsets[headings[n + 1][0]] if n + 1 < len(headings) else len(raw_text)
        sections.append(
            Section(
                heading=heading,
                kind=classify_heading(heading),
                body=raw_text[start:end],
                char_range=(start, end),
            )
        )

    digest = hashlib.sha256(raw_text.encode("utf-8")).hexdigest()[:12]
    return ThesisDocument(
        id=f"thesis-{digest}",
        title=title,
        declared_level=DegreeLevel.UNKNOWN,
        sections=tuple(sections),
        raw_text=raw_text,
        source_path=source_path,
    )


_BACHELOR_PHRASE = re.compile(r"bachelor(?:'s|’s)?\s+thesis", re.IGNORECASE)


def detect_degree_level(doc: ThesisDocument) -> DegreeLevel:
    """BACHELOR iff "bachelor thesis" appears in the title or opening text, else MASTER."""
    haystack = doc.title + "\n" + doc.raw_text[:2000]
    if _BACHELOR_PHRASE.search(haystack):
        return DegreeLevel.BACHELOR
    return DegreeLevel.MASTER


# -- run record ------------------------------------------------------------


@dataclass(frozen=True)
class StageResult:
    stage: StageId
    payload: Any

    def __to_data__(self) -> dict[str, Any]:
        from rubiscot.codec import to_data

        return {"stage": self.stage.value, "payload": to_data(self.payload)}

    @classmethod
    def __from_data__(cls, data: dict[str, Any]) -> StageResult:
        from rubiscot.codec import from_data
        from rubiscot.pipeline import payload_type

        stage = StageId(data["stage"])
        return cls(stage, from_data(payload_type(stage), data["payload"]))


@dataclass(frozen=True)
class AssessmentRun:
    run_id: str
    thesis: ThesisDocument
    config: dict[str, Any]
    timestamp: str
    stage_results: tuple[StageResult, ...]
    prompt_log: tuple[Any, ...]  # PromptExchange; typed in __from_data__
    status: RunStatus
    failed_stage: str | None = None
    error: str | None = None
    artifacts: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.status is RunStatus.HALTED_PRELIMINARY:
            stages = [r.stage for r in self.stage_results]
            if stages != [StageId.PRELIMINARY]:
                raise ValueError("a halted run holds exactly the preliminary result")

    def result(self, stage: StageId) -> Any:
        for r in self.stage_results:
            if r.stage is stage:
                return r.payload
        raise KeyError(stage)

    @property
    def stages(self) -> list[StageId]:
        return [r.stage for r in self.stage_results]

    @classmethod
    def __from_data__(cls, data: dict[str, Any]) -> AssessmentRun:
        from rubiscot.codec import from_data
        from rubiscot.llm import PromptExchange

        return cls(
            run_id=data["run_id"],
            thesis=from_data(ThesisDocument, data["thesis"]),
            config=data["config"],
            timestamp=data["timestamp"],
            stage_results=tuple(from_data(StageResult, r) for r in data["stage_results"]),
            prompt_log=tuple(from_data(PromptExchange, e) for e in data["prompt_log"]),
            status=RunStatus(data["status"]),
            failed_stage=data.get("failed_stage"),
            error=data.get("error"),
            artifacts=dict(data.get("artifacts", {})),
        )
