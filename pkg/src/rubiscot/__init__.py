"""Staged, rubric-based assessment of academic theses with a pluggable LLM backend."""

from rubiscot.llm import GenerationConfig, HttpBackend, MockBackend
from rubiscot.model import (
    AssessmentRun,
    DegreeLevel,
    Finding,
    RunStatus,
    Section,
    SectionKind,
    Severity,
    StageId,
    ThesisDocument,
    detect_degree_level,
    parse_thesis,
)
from rubiscot.pipeline import PipelineConfig, run_all
from rubiscot.rubric import PerformanceLevel, Rubric, classify_band

__version__ = "0.1.0"

__all__ = [
    "AssessmentRun",
    "DegreeLevel",
    "Finding",
    "GenerationConfig",
    "HttpBackend",
    "MockBackend",
    "PerformanceLevel",
    "PipelineConfig",
    "Rubric",
    "RunStatus",
    "Section",
    "SectionKind",
    "Severity",
    "StageId",
    "ThesisDocument",
    "classify_band",
    "detect_degree_level",
    "parse_thesis",
    "run_all",
]
