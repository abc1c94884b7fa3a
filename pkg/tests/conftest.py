from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import pytest

from rubiscot.llm import MockBackend
from rubiscot.model import detect_degree_level, parse_thesis
from rubiscot.rag import build_store
from rubiscot.rubric import load_rubric_dir

FIXTURES = Path(__file__).parent / "fixtures"
FIXED_TS = "2026-01-01T00:00:00+00:00"


def load_script(name: str) -> list[dict]:
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def thesis():
    doc = parse_thesis((FIXTURES / "thesis_small.md").read_text(encoding="utf-8"), "thesis_small.md")
    return replace(doc, declared_level=detect_degree_level(doc))


@pytest.fixture
def rubrics():
    return load_rubric_dir(FIXTURES / "rubrics")


@pytest.fixture
def store():
    return build_store(FIXTURES / "expectations")


@pytest.fixture
def full_mock() -> MockBackend:
    return MockBackend.from_script(load_script("script_full.json"))


@pytest.fixture
def halt_mock() -> MockBackend:
    return MockBackend.from_script(load_script("script_halt.json"))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.RESULTS, key=lambda s: int(s.split("AC")[1].split()[0])):
        terminalreporter.write_line(line)
