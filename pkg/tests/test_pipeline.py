from __future__ import annotations

import itertools
from dataclasses import replace

import pytest

from rubiscot.errors import BackendUnavailable
from rubiscot.llm import BASE_PROMPT, MockBackend
from rubiscot.model import GROUP_STAGES, DegreeLevel, RunStatus, Severity, StageId, parse_thesis
from rubiscot.pipeline import (
    GroupFindings,
    PipelineConfig,
    run_all,
    run_group,
    run_preliminary,
)

from conftest import FIXED_TS, FIXTURES, load_script


class FailingAt:
    """Delegates to a mock, but the given stage's backend is unreachable."""

    def __init__(self, inner, stage: str):
        self.inner, self.stage = inner, stage

    def complete(self, request, config):
        if request.stage_id == self.stage:
            raise BackendUnavailable("connection refused")
        return self.inner.complete(request, config)


def test_full_run_completes(thesis, full_mock, store, rubrics):
    run = run_all(thesis, full_mock, store, rubrics, timestamp=FIXED_TS)
    assert run.status is RunStatus.COMPLETED
    assert run.stages == list(StageId)
    # scripted stages in the fixture: every StageId has an entry
    scripted = {e["matcher"].split("/")[0] for e in load_script("script_full.json")}
    assert scripted == {s.value for s in StageId}
    assert len(run.prompt_log) == len(full_mock.calls)
    assert all(x.request.system_text == BASE_PROMPT for x in run.prompt_log)


def test_prompt_log_in_stage_order(thesis, full_mock, store, rubrics):
    run = run_all(thesis, full_mock, store, rubrics, timestamp=FIXED_TS)
    stages = [x.request.stage_id.split("/")[0] for x in run.prompt_log]
    firsts = list(dict.fromkeys(stages))
    assert firsts == [s.value for s in StageId]
    chapter_calls = [x.request.stage_id for x in run.prompt_log if x.request.stage_id.startswith("RUBRIC")]
    assert chapter_calls[:2] == ["RUBRIC_ASSESSMENT/INTRODUCTION/PASS1", "RUBRIC_ASSESSMENT/INTRODUCTION/PASS2"]
    assert len(chapter_calls) == 10


def test_halt_on_blocking(thesis, halt_mock, store, rubrics):
    run = run_all(thesis, halt_mock, store, rubrics, timestamp=FIXED_TS)
    assert run.status is RunStatus.HALTED_PRELIMINARY
    assert run.stages == [StageId.PRELIMINARY]
    assert {c.stage_id.split("/")[0] for c in halt_mock.calls} == {"PRELIMINARY"}
    assert len(run.prompt_log) == 1
    prelim = run.result(StageId.PRELIMINARY)
    assert prelim.fundamentals_missing and prelim.missing_elements == ("research question",)


def test_preliminary_info_only(thesis, full_mock):
    out = run_preliminary(thesis, full_mock)
    assert not out.fundamentals_missing and out.missing_elements == ()
    assert full_mock.calls[0].stage_id == "PRELIMINARY/BACHELOR"


def test_preliminary_master_prompt(thesis, full_mock):
    run_preliminary(replace(thesis, declared_level=DegreeLevel.MASTER), full_mock)
    assert "master's thesis" in full_mock.calls[0].user_text


def test_preliminary_requires_level(thesis, full_mock):
    with pytest.raises(ValueError):
        run_preliminary(replace(thesis, declared_level=DegreeLevel.UNKNOWN), full_mock)


def test_failure_at_technical(thesis, full_mock, store, rubrics):
    run = run_all(thesis, FailingAt(full_mock, "GROUP_TECHNICAL"), store, rubrics, timestamp=FIXED_TS)
    assert run.status is RunStatus.FAILED
    assert run.failed_stage == "GROUP_TECHNICAL"
    assert "BackendUnavailable" in run.error
    assert run.stages == [StageId.PRELIMINARY, StageId.GROUP_STRUCTURE, StageId.GROUP_CLARITY]
    assert run.prompt_log[-1].completion is None


def test_failure_in_rubric_pass_names_pass(thesis, store, rubrics):
    script = [e for e in load_script("script_full.json") if e["matcher"] != "RUBRIC_ASSESSMENT/METHODOLOGY/PASS2"]
    script.append({"matcher": "RUBRIC_ASSESSMENT/METHODOLOGY/PASS2", "response": "I refuse."})
    run = run_all(thesis, MockBackend.from_script(script), store, rubrics, timestamp=FIXED_TS)
    assert run.status is RunStatus.FAILED and run.failed_stage == "RUBRIC_ASSESSMENT"
    assert "pass 2" in run.error


def test_group_on_thesis_without_discussion(store):
    doc = parse_thesis((FIXTURES / "thesis_no_discussion.md").read_text(encoding="utf-8"))
    doc = replace(doc, declared_level=DegreeLevel.BACHELOR)
    mock = MockBackend()
    mock.register(
        '```json\n{"findings": [{"observation": "An essential section is absent.", '
        '"evidence": "No discussion chapter between Results and Conclusion", '
        '"location": null, "severity": "MAJOR"}]}\n```',
        stage_id="GROUP_STRUCTURE",
    )
    out = run_group(doc, StageId.GROUP_STRUCTURE, mock, store)
    assert out.findings[0].severity is Severity.MAJOR
    assert "discussion" in out.findings[0].evidence.lower()
    assert "Examine the thesis structure" in mock.calls[0].user_text
    assert "Expectation documents (retrieved excerpts)" in mock.calls[0].user_text


def test_group_empty_findings(thesis, full_mock, store):
    assert run_group(thesis, StageId.GROUP_FORMATTING, full_mock, store) == GroupFindings(StageId.GROUP_FORMATTING, ())


def test_plagiarism_prompt_logged(thesis, full_mock, store, rubrics):
    run = run_all(thesis, full_mock, store, rubrics, timestamp=FIXED_TS)
    entry = next(x for x in run.prompt_log if x.request.stage_id == "GROUP_PLAGIARISM")
    assert "unattributed text" in entry.request.user_text


def test_group_rejects_non_group(thesis, full_mock, store):
    with pytest.raises(ValueError):
        run_group(thesis, StageId.REPORT, full_mock, store)


def test_rerun_equal_except_id_and_time(thesis, store, rubrics):
    a = run_all(thesis, MockBackend.from_script(load_script("script_full.json")), store, rubrics, timestamp=FIXED_TS)
    b = run_all(
        thesis, MockBackend.from_script(load_script("script_full.json")), store, rubrics, timestamp="2030-05-05T00:00:00+00:00"
    )
    assert replace(a, run_id="", timestamp="") == replace(b, run_id="", timestamp="")


@pytest.mark.parametrize(
    "order",
    [GROUP_STAGES, tuple(reversed(GROUP_STAGES)), next(itertools.islice(itertools.permutations(GROUP_STAGES), 200, None))],
)
@pytest.mark.parametrize("concurrent", [False, True])
def test_group_order_independence(thesis, store, rubrics, order, concurrent):
    base = run_all(thesis, MockBackend.from_script(load_script("script_full.json")), store, rubrics, timestamp=FIXED_TS)
    cfg = PipelineConfig(group_order=order, concurrent_groups=concurrent)
    other = run_all(thesis, MockBackend.from_script(load_script("script_full.json")), store, rubrics, cfg, timestamp=FIXED_TS)
    assert other.status is RunStatus.COMPLETED
    groups = lambda r: {x.stage: x.payload for x in r.stage_results if x.stage.is_group}
    assert groups(other) == groups(base)
    assert len(other.prompt_log) == len(base.prompt_log)


def test_run_requires_all_rubrics(thesis, full_mock, store, rubrics):
    partial = {k: v for k, v in rubrics.items() if k.value != "RESULTS"}
    with pytest.raises(ValueError, match="RESULTS"):
        run_all(thesis, full_mock, store, partial)


def test_group_order_must_be_permutation():
    with pytest.raises(ValueError):
        PipelineConfig(group_order=GROUP_STAGES[:5])
