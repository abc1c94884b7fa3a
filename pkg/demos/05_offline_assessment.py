"""
A complete offline assessment
=============================

Same fixture and mock script as the test suite; writes into a temp dir.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from _paths import FIXTURES

from rubiscot.cli import cli_main
from rubiscot.report import load_run

out = Path(tempfile.mkdtemp(prefix="rubiscot-demo-"))
args = [
    "assess",
    "--thesis", str(FIXTURES / "thesis_small.md"),
    "--rubrics", str(FIXTURES / "rubrics"),
    "--expectations", str(FIXTURES / "expectations"),
    "--backend", "mock",
    "--script", str(FIXTURES / "script_full.json"),
    "--timestamp", "2026-01-01T00:00:00+00:00",
    "--out", str(out),
]
print("exit", cli_main(args))

run = load_run((out / "run.json").read_text(encoding="utf-8"))
print(run.status.value, [s.value for s in run.stages])
print(len(run.prompt_log), "backend calls logged")

report = (out / "report.md").read_text(encoding="utf-8")
print("\n".join(line for line in report.splitlines() if line.startswith("## ")))

# a script whose preliminary stage flags a missing research question
args[args.index("--script") + 1] = str(FIXTURES / "script_halt.json")
args[-1] = str(out / "halted")
print("exit", cli_main(args))
