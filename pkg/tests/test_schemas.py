from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rubiscot.errors import UnparseableResponse
from rubiscot.llm import GenerationConfig, MockBackend, make_request
from rubiscot.model import Severity
from rubiscot.schemas import REMINDER, ask_structured, parse_structured_response, percentage


def fenced(obj) -> str:
    return "Here you go:\n```json\n" + json.dumps(obj) + "\n```\nThanks."


FINDING = {"observation": "Tone is casual.", "evidence": "'gonna'", "location": "Introduction", "severity": "minor"}


def test_well_formed_findings():
    out = parse_structured_response(fenced({"findings": [FINDING]}), "findings")
    assert out == [{"severity": Severity.MINOR, "observation": "Tone is casual.", "evidence": "'gonna'", "location": "Introduction"}]


def test_prose_only_is_unparseable():
    with pytest.raises(UnparseableResponse):
        parse_structured_response("The thesis is good overall.", "findings")


def test_extra_fields_dropped():
    out = parse_structured_response(fenced({"findings": [{**FINDING, "confidence": 0.9}], "note": "x"}), "findings")
    assert set(out[0]) == {"severity", "observation", "evidence", "location"}


def test_missing_required_field():
    bad = {k: v for k, v in FINDING.items() if k != "evidence"}
    with pytest.raises(UnparseableResponse, match="evidence"):
        parse_structured_response(fenced({"findings": [bad]}), "findings")


def test_empty_findings_valid():
    assert parse_structured_response(fenced({"findings": []}), "findings") == []


def test_blocking_only_for_preliminary():
    blocking = {**FINDING, "severity": "BLOCKING", "missing_element": "research question"}
    with pytest.raises(UnparseableResponse):
        parse_structured_response(fenced({"findings": [blocking]}), "findings")
    out = parse_structured_response(fenced({"findings": [blocking]}), "preliminary")
    assert out[0]["severity"] is Severity.BLOCKING and out[0]["missing_element"] == "research question"


def test_first_block_wins():
    text = fenced({"findings": []}) + "\n```json\n{broken\n```"
    assert parse_structured_response(text, "findings") == []


def test_content_map_duplicate_ids_rejected():
    data = {"objectives": [{"id": "O1", "text": "a"}, {"id": "O1", "text": "b"}]}
    with pytest.raises(UnparseableResponse, match="duplicate"):
        parse_structured_response(fenced(data), "content_map")


def test_rubric_scores_string_percentages():
    data = {"scores": [{"criterion_id": "A", "percentage": "85%", "reasoning": "ok"}]}
    assert parse_structured_response(fenced(data), "rubric_scores")["scores"][0]["percentage"] == 85.0


@pytest.mark.parametrize("value", [-1, 100.5, "abc", None, True, float("nan"), [50]])
def test_percentage_rejects(value):
    with pytest.raises(UnparseableResponse):
        percentage(value, "p")


@given(st.one_of(st.floats(allow_nan=True, allow_infinity=True), st.integers(), st.text(max_size=8)))
def test_percentage_never_leaves_range(value):
    try:
        out = percentage(value, "p")
    except UnparseableResponse:
        return
    assert 0.0 <= out <= 100.0


def test_retry_appends_reminder_then_succeeds():
    mock = MockBackend()
    mock.register(["no block here", fenced({"findings": []})], stage_id="GROUP_CLARITY")
    cfg = GenerationConfig(retry_limit=2)
    out = ask_structured(mock, make_request("GROUP_CLARITY", "Assess clarity.", cfg), cfg, "findings")
    assert out == []
    assert len(mock.calls) == 2
    assert REMINDER not in mock.calls[0].user_text
    assert mock.calls[1].user_text.endswith(REMINDER)


@pytest.mark.parametrize("retry_limit", [0, 1, 3])
def test_retry_budget_exhausted(retry_limit):
    mock = MockBackend()
    mock.register("never structured", stage_id="GROUP_CLARITY")
    cfg = GenerationConfig(retry_limit=retry_limit)
    with pytest.raises(UnparseableResponse):
        ask_structured(mock, make_request("GROUP_CLARITY", "x", cfg), cfg, "findings")
    assert len(mock.calls) == retry_limit + 1
