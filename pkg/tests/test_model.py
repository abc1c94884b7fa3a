from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rubiscot.errors import EmptyDocument
from rubiscot.model import (
    DegreeLevel,
    Finding,
    SectionKind,
    Severity,
    classify_heading,
    detect_degree_level,
    parse_thesis,
)

from conftest import FIXTURES

# Frozen from a throwaway line scanner (count of lines starting with "## ")
# run against thesis_small.md before parse_thesis existed.
SMALL_THESIS_HEADINGS = 7


def scan_heading_lines(text: str) -> list[str]:
    """Independent oracle: Markdown level-2 headings only."""
    return [line[3:].strip() for line in text.splitlines() if line.startswith("## ")]


def test_three_canonical_headings():
    text = "Introduction\n\nWe study X.\n\nMethodology\n\nWe do Y.\n\nConclusion\n\nIt works.\n"
    doc = parse_thesis(text)
    assert [s.kind for s in doc.sections] == [
        SectionKind.INTRODUCTION,
        SectionKind.METHODOLOGY,
        SectionKind.CONCLUSION,
    ]


def test_related_work_is_other():
    doc = parse_thesis("# Related Work\n\nPrior systems.\n")
    assert len(doc.sections) == 1
    assert doc.sections[0].kind is SectionKind.OTHER


def test_small_thesis_tiles_body():
    text = (FIXTURES / "thesis_small.md").read_text(encoding="utf-8")
    assert len(scan_heading_lines(text)) == SMALL_THESIS_HEADINGS
    doc = parse_thesis(text, "thesis_small.md")
    assert len(doc.sections) == SMALL_THESIS_HEADINGS
    assert [s.heading for s in doc.sections] == scan_heading_lines(text)
    assert all(s.kind is not SectionKind.OTHER for s in doc.sections)
    assert doc.sections[0].char_range[0] == 0
    assert doc.sections[-1].char_range[1] == len(text)
    for a, b in zip(doc.sections, doc.sections[1:]):
        assert a.char_range[1] == b.char_range[0]
    assert "".join(s.body for s in doc.sections) == text
    # front matter (title, author lines) lives in the first section
    assert "Supervisor" in doc.sections[0].body


def test_numbered_and_title_case_headings():
    text = "My Thesis\n\n1. Introduction\n\nBody here.\n\n2.1 Research Methodology\n\nMore.\n\nFuture Directions for the Field\n\nEnd.\n"
    doc = parse_thesis(text)
    assert [s.kind for s in doc.sections] == [
        SectionKind.INTRODUCTION,
        SectionKind.METHODOLOGY,
        SectionKind.OTHER,
    ]


def test_headings_inside_code_fence_ignored():
    text = "# Introduction\n\n```\n# Results\n```\n\n# Conclusion\n\nDone.\n"
    assert [s.heading for s in parse_thesis(text).sections] == ["Introduction", "Conclusion"]


def test_blank_document_rejected():
    with pytest.raises(EmptyDocument):
        parse_thesis(" \n\t\n")


@pytest.mark.parametrize(
    ("title", "level"),
    [
        ("Bachelor Thesis: Topic X", DegreeLevel.BACHELOR),
        ("Master Thesis on Y", DegreeLevel.MASTER),
        ("A Study of Caches", DegreeLevel.MASTER),
        ("A Bachelor's Thesis in Physics", DegreeLevel.BACHELOR),
    ],
)
def test_detect_degree_level(title, level):
    assert detect_degree_level(parse_thesis(f"{title}\n\nSome text.\n")) is level


def test_level_phrase_beyond_opening_is_ignored():
    text = "On Caches\n\n" + "x " * 1200 + "\nThis is a bachelor thesis.\n"
    assert detect_degree_level(parse_thesis(text)) is DegreeLevel.MASTER


@given(st.lists(st.booleans(), min_size=len("Bachelor Thesis"), max_size=len("Bachelor Thesis")))
def test_level_detection_case_insensitive(flips):
    phrase = "".join(c.upper() if f else c.lower() for c, f in zip("Bachelor Thesis", flips))
    doc = parse_thesis(f"{phrase}: Caching\n\nBody.\n")
    assert detect_degree_level(doc) is DegreeLevel.BACHELOR


_line = st.one_of(
    st.sampled_from(["# Introduction", "## Results", "Discussion", "Related Work", "", "", "```"]),
    st.text(alphabet="abcdefgh XYZ.,", max_size=30),
)


@settings(max_examples=150)
@given(st.lists(_line, min_size=1, max_size=25))
def test_sections_tile_and_parse_is_deterministic(lines):
    text = "\n".join(lines) + "\nend\n"
    doc = parse_thesis(text)
    ranges = [s.char_range for s in doc.sections]
    assert ranges == sorted(ranges)
    assert ranges[0][0] == 0 and ranges[-1][1] == len(text)
    for (a0, a1), (b0, b1) in zip(ranges, ranges[1:]):
        assert a1 == b0
    for s in doc.sections:
        assert s.body == text[s.char_range[0] : s.char_range[1]]
        assert s.heading.strip()
    assert parse_thesis(text) == doc


def test_classify_heading_synonyms():
    assert classify_heading("Chapter 3 Methods") is SectionKind.METHODOLOGY
    assert classify_heading("5. Conclusions") is SectionKind.CONCLUSION
    assert classify_heading("Related Work") is SectionKind.OTHER


def test_finding_invariants():
    with pytest.raises(ValueError):
        Finding("GROUP_CLARITY", Severity.MINOR, "", "x")
    with pytest.raises(ValueError):
        Finding("GROUP_CLARITY", Severity.BLOCKING, "obs", "ev")
    assert Finding("PRELIMINARY", Severity.BLOCKING, "obs", "ev").severity is Severity.BLOCKING
