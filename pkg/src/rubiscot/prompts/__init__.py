"""Stage prompt catalog.

Templates live as plain-text files with a small ``key: value`` header
between ``---`` fences. A deployment can shadow any built-in template by
pointing :func:`catalog` at a directory holding a file with the same
``template_id``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from rubiscot.errors import MissingBinding

PLACEHOLDERS = ("thesis", "section", "context", "rubric", "placeholder_chapter")
_PLACEHOLDER = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")
RESIDUAL = re.compile(r"\{[a-z_]+\}")

_SEVERITIES = "INFO | MINOR | MAJOR"
_LEVELS = "EXCELLENT, GOOD, SATISFACTORY, NEEDS_IMPROVEMENT, FAILING, TOTAL_FAILURE"

# Appended to every template body with a structured schema; the parser
# registry in rubiscot.schemas reads exactly these shapes.
OUTPUT_INSTRUCTIONS: dict[str, str] = {
    "findings": (
        "Output format: reply with one fenced ```json block holding\n"
        '{"findings": [{"observation": "...", "evidence": "quoted text or section reference", '
        f'"location": "section heading or null", "severity": "{_SEVERITIES}"}}]}}\n'
        "Use an empty findings list when there is nothing to report."
    ),
    "preliminary": (
        "Output format: reply with one fenced ```json block holding\n"
        '{"findings": [{"criterion": "criterion name", "observation": "...", '
        '"evidence": "quoted text or section reference", "location": "section heading or null", '
        f'"severity": "{_SEVERITIES} | BLOCKING", '
        '"missing_element": "research question | objective | null"}]}\n'
        "Use BLOCKING only for a missing fundamental element and name it in missing_element."
    ),
    "degree_level": (
        "Output format: reply with one fenced ```json block holding\n"
        '{"level": "BACHELOR | MASTER"}'
    ),
    "content_map": (
        "Output format: reply with one fenced ```json block holding\n"
        '{"objectives": [{"id": "O1", "text": "...", "source_ref": "section or page"}], '
        '"research_questions": [{"id": "RQ1", "text": "...", "objective_ids": ["O1"], "source_ref": "..."}], '
        '"methods": [{"id": "M1", "text": "...", "rq_ids": ["RQ1"]}], '
        '"results": [{"id": "R1", "text": "...", "rq_ids": ["RQ1"]}], '
        '"discussion_points": [{"id": "D1", "text": "...", "objective_ids": ["O1"]}], '
        '"conclusions": [{"id": "C1", "text": "...", "objective_ids": ["O1"], "rq_ids": ["RQ1"]}]}'
    ),
    "rubric_scores": (
        "Output format: reply with one fenced ```json block holding one entry per rubric criterion\n"
        '{"scores": [{"criterion_id": "...", "percentage": 0, "reasoning": "..."}], '
        '"deviation": "chapter used instead, or null"}\n'
        "Percentages are numbers between 0 and 100."
    ),
    "rubric": (
        "Output format: reply with one fenced ```json block holding\n"
        '{"rubric_id": "...", "criteria": [{"id": "...", "name": "...", "weight": 1, '
        f'"descriptors": {{"LEVEL": "..."}}}}]}}\n'
        f"where descriptors has exactly the keys {_LEVELS}."
    ),
    "summary": (
        "Output format: reply with one fenced ```json block holding\n"
        '{"strengths": ["..."], "weaknesses": ["..."], "improvements": ["..."]}'
    ),
}


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str
    required_placeholders: frozenset[str]
    response_schema_id: str
    verbatim: str = "true"
    body: str = ""

    def __post_init__(self) -> None:
        present = set(_PLACEHOLDER.findall(self.text))
        missing = self.required_placeholders - present
        if missing:
            raise ValueError(f"{self.template_id}: required placeholders absent: {sorted(missing)}")
        unknown = set(RESIDUAL.findall(self.text)) - {"{%s}" % p for p in PLACEHOLDERS}
        if unknown:
            raise ValueError(f"{self.template_id}: unknown placeholders {sorted(unknown)}")

    @property
    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER.findall(self.text))

    def render(self, bindings: dict[str, str] | None = None) -> str:
        bindings = bindings or {}
        for name in sorted(self.required_placeholders):
            if name not in bindings:
                raise MissingBinding(name)
        return _PLACEHOLDER.sub(lambda m: bindings.get(m.group(1), ""), self.text)


def split_front_matter(text: str) -> tuple[dict[str, str], str]:
    """Split a ``---``-fenced ``key: value`` header from the body."""
    if not text.startswith("---"):
        return {}, text
    lines = text.splitlines(keepends=True)
    meta: dict[str, str] = {}
    for i, line in enumerate(lines[1:], start=1):
        if line.strip() == "---":
            return meta, "".join(lines[i + 1 :])
        key, sep, value = line.partition(":")
        if not sep:
            raise ValueError(f"malformed front-matter line: {line!r}")
        meta[key.strip()] = value.strip()
    raise ValueError("unterminated front matter")


def _csv(value: str) -> frozenset[str]:
    return frozenset(v.strip() for v in value.split(",") if v.strip())


def parse_template(text: str) -> PromptTemplate:
    meta, body = split_front_matter(text)
    body = body.strip("\n")
    schema = meta["schema"]
    full = body
    if schema in OUTPUT_INSTRUCTIONS:
        full = f"{body}\n\n{OUTPUT_INSTRUCTIONS[schema]}"
    return PromptTemplate(
        template_id=meta["template_id"],
        text=full,
        body=body,
        required_placeholders=_csv(meta.get("required", "")),
        response_schema_id=schema,
        verbatim=meta.get("verbatim", "true"),
    )


@lru_cache(maxsize=1)
def _builtin() -> tuple[PromptTemplate, ...]:
    folder = resources.files(__package__) / "templates"
    found = [parse_template(f.read_text(encoding="utf-8")) for f in folder.iterdir() if f.name.endswith(".txt")]
    return tuple(sorted(found, key=lambda t: t.template_id))


def catalog(override_dir: str | Path | None = None) -> list[PromptTemplate]:
    templates = {t.template_id: t for t in _builtin()}
    if override_dir is not None:
        for path in sorted(Path(override_dir).glob("*.txt")):
            t = parse_template(path.read_text(encoding="utf-8"))
            templates[t.template_id] = t
    return [templates[k] for k in sorted(templates)]


def get_template(template_id: str, override_dir: str | Path | None = None) -> PromptTemplate:
    template_id = getattr(template_id, "value", template_id)
    for t in catalog(override_dir):
        if t.template_id == template_id:
            return t
    raise KeyError(template_id)


def render(template_id: str, bindings: dict[str, str] | None = None, override_dir=None) -> str:
    return get_template(template_id, override_dir).render(bindings)
