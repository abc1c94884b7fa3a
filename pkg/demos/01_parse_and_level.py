"""
Parsing a thesis and detecting its degree level
===============================================

Headings become sections whose character ranges tile the text.
"""

from __future__ import annotations

from _paths import FIXTURES

from rubiscot.model import detect_degree_level, parse_thesis

text = (FIXTURES / "thesis_small.md").read_text(encoding="utf-8")
doc = parse_thesis(text, "thesis_small.md")
print(doc.title)

for s in doc.sections:
    start, end = s.char_range
    print(f"{s.kind.value:<18} {start:>5}-{end:<5} {s.heading}")

# the ranges cover every character exactly once
assert "".join(s.body for s in doc.sections) == text

# level detection is a phrase test on the title and opening text
print(detect_degree_level(doc).value)
print(detect_degree_level(parse_thesis("Master Thesis on Caches\n\nBody.\n")).value)
