"""
Scoring a chapter twice against a rubric
========================================

The mock backend plays the model; pass 2 sees pass 1's table.
"""

from __future__ import annotations

import json

from _paths import FIXTURES

from rubiscot.llm import MockBackend
from rubiscot.model import SectionKind, parse_thesis
from rubiscot.rag import build_store
from rubiscot.rubric import PerformanceLevel, classify_band, load_rubric, match_section, two_pass_evaluate


def scores(pairs):
    body = {"scores": [{"criterion_id": c, "percentage": p, "reasoning": f"{c}: {p}"} for c, p in pairs]}
    return "```json\n" + json.dumps(body) + "\n```"


for level in PerformanceLevel:
    lo, hi = level.band
    print(f"{level.label:<18} [{lo:g}, {hi:g}{']' if level is PerformanceLevel.EXCELLENT else ')'}")
print(classify_band(74.99).label, classify_band(75).label)

rubric = load_rubric(FIXTURES / "rubrics" / "introduction.json")
print({c.criterion_id: round(c.weight, 3) for c in rubric.criteria})

doc = parse_thesis((FIXTURES / "thesis_small.md").read_text(encoding="utf-8"))
section, note = match_section(doc, SectionKind.INTRODUCTION)
chunks = build_store(FIXTURES / "expectations").retrieve("introduction objectives", 2, SectionKind.INTRODUCTION)

mock = MockBackend()
mock.register(scores([("I1", 80), ("I2", 70), ("I3", 90)]), stage_id="RUBRIC_ASSESSMENT/INTRODUCTION/PASS1")
mock.register(scores([("I1", 90), ("I2", 70), ("I3", 85)]), stage_id="RUBRIC_ASSESSMENT/INTRODUCTION/PASS2")

ev = two_pass_evaluate(section, rubric, chunks, mock)
print([round(r.run_average, 2) for r in ev.runs])
print(ev.per_criterion_final, round(ev.final_average, 3), ev.final_level.label)
