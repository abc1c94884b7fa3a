"""Stage orchestration: preliminary gate, six groups, flow analysis, rubrics, report digest."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any

from rubiscot.codec import to_data
from rubiscot.errors import RubiscotError, RubricPassError
from rubiscot.flow import FlowAnalysis, analyze_flow, extract_content_map
from rubiscot.llm import (
    Attachment,
    Backend,
    GenerationConfig,
    PromptLog,
    RecordingBackend,
    make_request,
)
from rubiscot.model import (
    GROUP_STAGES,
    AssessmentRun,
    DegreeLevel,
    Finding,
    RunStatus,
    Severity,
    StageId,
    StageResult,
    ThesisDocument,
)
from rubiscot.prompts import get_template
from rubiscot.rag import DEFAULT_K, RagStore, format_context
from rubiscot.rubric import (
    RUBRIC_CHAPTERS,
    Rubric,
    RubricEvaluation,
    match_section,
    two_pass_evaluate,
)
from rubiscot.schemas import ask_structured

logger = logging.getLogger(__name__)

FUNDAMENTAL_ELEMENTS = ("research question", "objective")


@dataclass(frozen=True)
class PipelineConfig:
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    retrieval_k: int = DEFAULT_K
    group_order: tuple[StageId, ...] = GROUP_STAGES
    concurrent_groups: bool = False
    template_dir: str | None = None

    def __post_init__(self) -> None:
        if sorted(self.group_order) != sorted(GROUP_STAGES):
            raise ValueError("group_order must be a permutation of the six group stages")
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be >= 1")


@dataclass(frozen=True)
class PreliminaryResult:
    level: DegreeLevel
    criteria_findings: tuple[Finding, ...]
    fundamentals_missing: bool
    missing_elements: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.fundamentals_missing and not self.missing_elements:
            raise ValueError("fundamentals_missing requires named missing elements")


@dataclass(frozen=True)
class GroupFindings:
    group: StageId
    findings: tuple[Finding, ...]

    def __post_init__(self) -> None:
        if not self.group.is_group:
            raise ValueError(f"{self.group} is not an assessment group")
        if any(f.group != self.group.value for f in self.findings):
            raise ValueError("finding group differs from the enclosing group")


@dataclass(frozen=True)
class RubricAssessment:
    evaluations: tuple[RubricEvaluation, ...]

    @property
    def indicative_mean(self) -> float:
        return sum(e.final_average for e in self.evaluations) / len(self.evaluations)


@dataclass(frozen=True)
class ReportSummary:
    strengths: tuple[str, ...]
    weaknesses: tuple[str, ...]
    improvements: tuple[str, ...]


_PAYLOADS: dict[StageId, type] = {
    StageId.PRELIMINARY: PreliminaryResult,
    StageId.CONTENT_EXTRACTION: FlowAnalysis,
    StageId.RUBRIC_ASSESSMENT: RubricAssessment,
    StageId.REPORT: ReportSummary,
    **{g: GroupFindings for g in GROUP_STAGES},
}


def payload_type(stage: StageId) -> type:
    return _PAYLOADS[stage]


# -- stages ----------------------------------------------------------------


def _missing_element(finding: dict) -> str:
    named = finding.get("missing_element")
    text = f"{named or ''} {finding['observation']}".lower()
    for element in FUNDAMENTAL_ELEMENTS:
        if element in text:
            return element
    return named or finding["observation"]


def run_preliminary(
    doc: ThesisDocument, backend: Backend, config: PipelineConfig | None = None
) -> PreliminaryResult:
    """Level-specific criteria review; BLOCKING findings mark missing fundamentals."""
    config = config or PipelineConfig()
    if doc.declared_level not in (DegreeLevel.BACHELOR, DegreeLevel.MASTER):
        raise ValueError("declared_level must be BACHELOR or MASTER before the preliminary stage")
    template_id = f"PRELIMINARY/{doc.declared_level.value}"
    template = get_template(template_id, config.template_dir)
    request = make_request(
        template_id, template.render({}), config.generation, [Attachment("thesis", doc.raw_text)]
    )
    parsed = ask_structured(backend, request, config.generation, template.response_schema_id)

    findings = []
    missing: list[str] = []
    for f in parsed:
        observation = f["observation"]
        if f.get("criterion"):
            observation = f"{f['criterion']}: {observation}"
        findings.append(
            Finding(StageId.PRELIMINARY.value, f["severity"], observation, f["evidence"], f["location"])
        )
        if f["severity"] is Severity.BLOCKING:
            element = _missing_element(f)
            if element not in missing:
                missing.append(element)
    return PreliminaryResult(doc.declared_level, tuple(findings), bool(missing), tuple(missing))


def run_group(
    doc: ThesisDocument,
    group_id: StageId,
    backend: Backend,
    rag: RagStore | None,
    config: PipelineConfig | None = None,
) -> GroupFindings:
    config = config or PipelineConfig()
    group_id = StageId(group_id)
    if not group_id.is_group:
        raise ValueError(f"{group_id} is not an assessment group")
    template = get_template(group_id.value, config.template_dir)
    chunks = rag.retrieve(template.body, config.retrieval_k) if rag is not None and len(rag) else []
    request = make_request(
        group_id.value,
        template.render({"context": format_context(chunks)}),
        config.generation,
        [Attachment("thesis", doc.raw_text)],
    )
    parsed = ask_structured(backend, request, config.generation, template.response_schema_id)
    findings = tuple(
        Finding(group_id.value, f["severity"], f["observation"], f["evidence"], f["location"])
        for f in parsed
    )
    return GroupFindings(group_id, findings)


def run_content_extraction(
    doc: ThesisDocument, backend: Backend, config: PipelineConfig | None = None
) -> FlowAnalysis:
    config = config or PipelineConfig()
    cmap = extract_content_map(doc, backend, config.generation, config.template_dir)
    return analyze_flow(cmap)


def run_rubric_assessment(
    doc: ThesisDocument,
    rubrics: dict,
    backend: Backend,
    rag: RagStore | None,
    config: PipelineConfig | None = None,
) -> RubricAssessment:
    config = config or PipelineConfig()
    evaluations = []
    for chapter in RUBRIC_CHAPTERS:
        rubric: Rubric = rubrics[chapter]
        section, note = match_section(doc, chapter)
        query = f"{chapter.label} expectations. " + " ".join(c.name for c in rubric.criteria)
        chunks = rag.retrieve(query, config.retrieval_k, chapter) if rag is not None and len(rag) else []
        evaluations.append(
            two_pass_evaluate(
                section,
                rubric,
                chunks,
                backend,
                config=config.generation,
                matched_section_note=note,
                template_dir=config.template_dir,
            )
        )
    return RubricAssessment(tuple(evaluations))


def results_digest(stage_results: list[StageResult]) -> str:
    """Plain-text digest of earlier stage results, attached to the summary prompt."""
    lines = []
    for r in stage_results:
        p = r.payload
        if isinstance(p, (PreliminaryResult, GroupFindings)):
            findings = p.criteria_findings if isinstance(p, PreliminaryResult) else p.findings
            lines.append(f"## {r.stage.value}")
            lines += [f"- [{f.severity.value}] {f.observation} (evidence: {f.evidence})" for f in findings]
        elif isinstance(p, FlowAnalysis):
            lines.append(f"## {r.stage.value}")
            lines += [f"- gap {g.kind.value} at {g.subject}: {g.detail}" for g in p.gaps] or ["- no gaps"]
        elif isinstance(p, RubricAssessment):
            lines.append(f"## {r.stage.value}")
            for e in p.evaluations:
                lines.append(f"- {e.chapter.label}: {e.final_average:.1f}% ({e.final_level.label})")
                lines += [f"  - {cid}: {v:.1f}%" for cid, v in e.per_criterion_final.items()]
    return "\n".join(lines)


def run_report_summary(
    stage_results: list[StageResult], backend: Backend, config: PipelineConfig | None = None
) -> ReportSummary:
    config = config or PipelineConfig()
    template = get_template(StageId.REPORT.value, config.template_dir)
    request = make_request(
        StageId.REPORT.value,
        template.render({}),
        config.generation,
        [Attachment("assessment_results", results_digest(stage_results))],
    )
    parsed = ask_structured(backend, request, config.generation, template.response_schema_id)
    return ReportSummary(
        tuple(parsed["strengths"]), tuple(parsed["weaknesses"]), tuple(parsed["improvements"])
    )


# -- orchestration ---------------------------------------------------------


def _run_id(doc: ThesisDocument, timestamp: str, snapshot: dict[str, Any]) -> str:
    blob = json.dumps([doc.id, timestamp, snapshot], sort_keys=True)
    return "run-" + hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def run_all(
    doc: ThesisDocument,
    backend: Backend,
    rag: RagStore | None,
    rubrics: dict,
    config: PipelineConfig | None = None,
    *,
    timestamp: str | None = None,
) -> AssessmentRun:
    """Execute every stage in order and return the persisted run record.

    A preliminary result with missing fundamentals halts the run before
    any other request is issued. A stage error ends the run as FAILED,
    keeping the results of the stages that finished.
    """
    config = config or PipelineConfig()
    if doc.declared_level not in (DegreeLevel.BACHELOR, DegreeLevel.MASTER):
        raise ValueError("set declared_level (detect_degree_level or an override) before run_all")
    absent = [c.value for c in RUBRIC_CHAPTERS if c not in rubrics]
    if absent:
        raise ValueError(f"no rubric loaded for {', '.join(absent)}")

    timestamp = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    snapshot = to_data(config)
    log = PromptLog()
    recorder = RecordingBackend(backend, log)
    results: list[StageResult] = []
    status = RunStatus.COMPLETED
    failed_stage: str | None = None
    error: str | None = None

    def finish() -> AssessmentRun:
        return AssessmentRun(
            run_id=_run_id(doc, timestamp, snapshot),
            thesis=doc,
            config=snapshot,
            timestamp=timestamp,
            stage_results=tuple(results),
            prompt_log=tuple(log.entries),
            status=status,
            failed_stage=failed_stage,
            error=error,
        )

    stage = StageId.PRELIMINARY
    try:
        prelim = run_preliminary(doc, recorder, config)
        results.append(StageResult(stage, prelim))
        if prelim.fundamentals_missing:
            logger.info("halting: missing %s", ", ".join(prelim.missing_elements))
            status = RunStatus.HALTED_PRELIMINARY
            return finish()

        if config.concurrent_groups:
            with ThreadPoolExecutor(max_workers=len(config.group_order)) as pool:
                futures = [
                    (g, pool.submit(run_group, doc, g, recorder, rag, config)) for g in config.group_order
                ]
                for stage, fut in futures:
                    results.append(StageResult(stage, fut.result()))
        else:
            for stage in config.group_order:
                results.append(StageResult(stage, run_group(doc, stage, recorder, rag, config)))

        stage = StageId.CONTENT_EXTRACTION
        results.append(StageResult(stage, run_content_extraction(doc, recorder, config)))

        stage = StageId.RUBRIC_ASSESSMENT
        results.append(StageResult(stage, run_rubric_assessment(doc, rubrics, recorder, rag, config)))

        stage = StageId.REPORT
        results.append(StageResult(stage, run_report_summary(results, recorder, config)))
    except RubiscotError as exc:
        status = RunStatus.FAILED
        failed_stage = stage.value
        if isinstance(exc, RubricPassError):
            error = f"{type(exc.cause).__name__} in pass {exc.pass_index}: {exc.cause}"
        else:
            error = f"{type(exc).__name__}: {exc}"
        logger.error("stage %s failed: %s", failed_stage, error)
    return finish()
