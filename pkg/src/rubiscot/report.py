"""Report assembly and Markdown/JSON emission for an assessment run."""

from __future__ import annotations

import json
from dataclasses import dataclass

from rubiscot.codec import from_data, to_data
from rubiscot.errors import IncompleteRun
from rubiscot.flow import FlowAnalysis
from rubiscot.model import AssessmentRun, Finding, RunStatus, Severity, StageId
from rubiscot.pipeline import GroupFindings, PreliminaryResult, ReportSummary, RubricAssessment
from rubiscot.rubric import RubricEvaluation, weighted_mean

GROUP_TITLES = {
    StageId.GROUP_STRUCTURE: "Structural and Content Completeness",
    StageId.GROUP_CLARITY: "Clarity, Coherence, and Language",
    StageId.GROUP_TECHNICAL: "Technical Accuracy",
    StageId.GROUP_EDITING: "Editing and Consistency",
    StageId.GROUP_PLAGIARISM: "Plagiarism and References",
    StageId.GROUP_FORMATTING: "Formatting and Compliance",
}

TABLE_HEADER = "| Criterion | Pass 1 | Pass 2 | Final | Reasoning |"
DIGEST_KEY = "REPORT"
TOP_FINDINGS = 5


def fmt1(value: float) -> str:
    return f"{value:.1f}"


def _cell(text: str) -> str:
    return " ".join(str(text).split()).replace("|", "\\|")


@dataclass(frozen=True)
class RubricRow:
    criterion: str
    weight: float
    pass1: float
    pass2: float
    final: float
    reasoning: str


@dataclass(frozen=True)
class RubricTable:
    chapter: str
    section_heading: str
    note: str | None
    rows: tuple[RubricRow, ...]
    pass1_average: float
    pass2_average: float
    final_average: float
    level: str


@dataclass(frozen=True)
class ReportSection:
    key: str
    title: str
    lines: tuple[str, ...]
    table: RubricTable | None = None


@dataclass(frozen=True)
class ReportDocument:
    run_id: str
    thesis_title: str
    level: str
    timestamp: str
    status: RunStatus
    halt_note: str | None
    sections: tuple[ReportSection, ...]
    indicative_mean: float | None = None


def _findings_lines(findings: tuple[Finding, ...]) -> list[str]:
    if not findings:
        return ["No findings were reported."]
    lines = ["| Severity | Observation | Evidence | Location |", "|---|---|---|---|"]
    for f in findings:
        lines.append(
            f"| {f.severity.value} | {_cell(f.observation)} | {_cell(f.evidence)} | {_cell(f.location or '-')} |"
        )
    return lines


def _preliminary_section(p: PreliminaryResult) -> ReportSection:
    lines = [f"Assessed against the {p.level.value.lower()}-level criteria.", ""]
    if p.fundamentals_missing:
        lines += [f"Fundamental elements missing: {', '.join(p.missing_elements)}.", ""]
    lines += _findings_lines(p.criteria_findings)
    return ReportSection(StageId.PRELIMINARY.value, "Preliminary Assessment", tuple(lines))


def _flow_section(fa: FlowAnalysis) -> ReportSection:
    lines = ["```mermaid", *fa.mermaid.rstrip("\n").splitlines(), "```", ""]
    if fa.gaps:
        lines.append("Gaps in the logical flow:")
        lines += [f"- {g.kind.value} `{g.subject}`: {g.detail}" for g in fa.gaps]
    else:
        lines.append("No gaps: every objective is carried through to a conclusion.")
    return ReportSection(StageId.CONTENT_EXTRACTION.value, "Content Extraction and Flow Analysis", tuple(lines))


def _rubric_table(e: RubricEvaluation) -> RubricTable:
    run1, run2 = (r.percentages() for r in e.runs)
    reasons1 = {s.criterion_id: s.reasoning for s in e.runs[0].per_criterion}
    reasons2 = {s.criterion_id: s.reasoning for s in e.runs[1].per_criterion}
    rows = []
    for c in e.criteria:
        r1, r2 = reasons1[c.criterion_id], reasons2[c.criterion_id]
        reasoning = r2 if r1 == r2 else f"Pass 1: {r1} Pass 2: {r2}"
        rows.append(
            RubricRow(
                f"{c.criterion_id} {c.name}",
                c.weight,
                run1[c.criterion_id],
                run2[c.criterion_id],
                e.per_criterion_final[c.criterion_id],
                reasoning,
            )
        )
    return RubricTable(
        chapter=e.chapter.label,
        section_heading=e.section_heading,
        note=e.matched_section_note,
        rows=tuple(rows),
        pass1_average=e.runs[0].run_average,
        pass2_average=e.runs[1].run_average,
        final_average=e.final_average,
        level=e.final_level.label,
    )


def table_lines(t: RubricTable) -> list[str]:
    lines = [TABLE_HEADER, "|---|---|---|---|---|"]
    for r in t.rows:
        lines.append(
            f"| {_cell(r.criterion)} | {fmt1(r.pass1)} | {fmt1(r.pass2)} | {fmt1(r.final)} | {_cell(r.reasoning)} |"
        )
    lines.append(
        f"| **Average** | {fmt1(t.pass1_average)} | {fmt1(t.pass2_average)} | {fmt1(t.final_average)} | {t.level} |"
    )
    return lines


def _chapter_section(e: RubricEvaluation) -> ReportSection:
    table = _rubric_table(e)
    lines = [f"Assessed chapter: {e.section_heading}"]
    if e.matched_section_note:
        lines.append(f"Deviation: {e.matched_section_note}")
    weights = ", ".join(f"{r.criterion.split()[0]} {r.weight:.3f}" for r in table.rows)
    lines += [f"Criterion weights: {weights}", "", *table_lines(table)]
    return ReportSection(
        f"{StageId.RUBRIC_ASSESSMENT.value}/{e.chapter.value}",
        f"Rubric Assessment: {e.chapter.label}",
        tuple(lines),
        table,
    )


def _digest_section(run: AssessmentRun, summary: ReportSummary, mean: float | None) -> ReportSection:
    findings: list[Finding] = []
    for r in run.stage_results:
        if isinstance(r.payload, PreliminaryResult):
            findings += r.payload.criteria_findings
        elif isinstance(r.payload, GroupFindings):
            findings += r.payload.findings
    ranked = sorted(findings, key=lambda f: -f.severity.rank)[:TOP_FINDINGS]
    ranked = [f for f in ranked if f.severity is not Severity.INFO] or ranked

    lines: list[str] = []
    if mean is not None:
        lines += [f"Overall mean of chapter averages (indicative only): {fmt1(mean)}%", ""]
    rows = []
    if run.stages and StageId.RUBRIC_ASSESSMENT in run.stages:
        ra: RubricAssessment = run.result(StageId.RUBRIC_ASSESSMENT)
        for e in ra.evaluations:
            names = {c.criterion_id: c.name for c in e.criteria}
            rows += [(v, e.chapter.label, cid, names[cid]) for cid, v in e.per_criterion_final.items()]
    if rows:
        best = max(rows, key=lambda r: r[0])
        worst = min(rows, key=lambda r: r[0])
        lines.append(f"Highest-scoring criterion: {best[1]} / {best[2]} {best[3]} ({fmt1(best[0])}%)")
        lines.append(f"Lowest-scoring criterion: {worst[1]} / {worst[2]} {worst[3]} ({fmt1(worst[0])}%)")
        lines.append("")
    lines.append("Top findings by severity:")
    lines += [f"- [{f.severity.value}] {f.group}: {f.observation}" for f in ranked] or ["- none"]
    for title, items in (
        ("Strengths", summary.strengths),
        ("Weaknesses", summary.weaknesses),
        ("Areas for improvement", summary.improvements),
    ):
        lines += ["", f"{title}:"]
        lines += [f"- {i}" for i in items] or ["- none stated"]
    return ReportSection(DIGEST_KEY, "Strengths, Weaknesses and Areas for Improvement", tuple(lines))


def assemble_report(run: AssessmentRun) -> ReportDocument:
    if run.status is RunStatus.FAILED:
        raise IncompleteRun(f"run failed at {run.failed_stage}: {run.error}")
    sections: list[ReportSection] = []
    halt_note = None
    mean = None
    for r in run.stage_results:
        p = r.payload
        if r.stage is StageId.PRELIMINARY:
            sections.append(_preliminary_section(p))
        elif r.stage.is_group:
            sections.append(ReportSection(r.stage.value, GROUP_TITLES[r.stage], tuple(_findings_lines(p.findings))))
        elif r.stage is StageId.CONTENT_EXTRACTION:
            sections.append(_flow_section(p))
        elif r.stage is StageId.RUBRIC_ASSESSMENT:
            mean = p.indicative_mean
            sections += [_chapter_section(e) for e in p.evaluations]
        elif r.stage is StageId.REPORT:
            sections.append(_digest_section(run, p, mean))
    if run.status is RunStatus.HALTED_PRELIMINARY:
        missing = run.result(StageId.PRELIMINARY).missing_elements
        halt_note = (
            f"The assessment halted after the preliminary stage because fundamental elements are "
            f"missing ({', '.join(missing)}). No further stages were run."
        )
    return ReportDocument(
        run_id=run.run_id,
        thesis_title=run.thesis.title,
        level=run.thesis.declared_level.value,
        timestamp=run.timestamp,
        status=run.status,
        halt_note=halt_note,
        sections=tuple(sections),
        indicative_mean=mean,
    )


def emit_markdown(report: ReportDocument) -> str:
    lines = [
        "# Thesis Assessment Report",
        "",
        f"- Thesis: {report.thesis_title}",
        f"- Degree level: {report.level}",
        f"- Run: {report.run_id}",
        f"- Timestamp: {report.timestamp}",
        f"- Status: {report.status.value}",
    ]
    if report.halt_note:
        lines += ["", f"> {report.halt_note}"]
    for s in report.sections:
        lines += ["", f"## {s.title}", "", *s.lines]
    return "\n".join(lines) + "\n"


def emit_json(run: AssessmentRun) -> str:
    return json.dumps(to_data(run), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def load_run(text: str) -> AssessmentRun:
    return from_data(AssessmentRun, json.loads(text))


def recompute_table(t: RubricTable) -> tuple[float, float, float]:
    """Weighted pass and final averages recomputed from the one-decimal cell values."""
    w = [r.weight for r in t.rows]

    def shown(x: float) -> float:
        return float(fmt1(x))

    return (
        weighted_mean((shown(r.pass1) for r in t.rows), w),
        weighted_mean((shown(r.pass2) for r in t.rows), w),
        weighted_mean((shown(r.final) for r in t.rows), w),
    )
