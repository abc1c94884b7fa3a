"""
Logical flow and its gaps
=========================

A content map with one dangling chain, rendered as Mermaid.
"""

from __future__ import annotations

from rubiscot.flow import (
    Conclusion,
    ContentMap,
    Method,
    Objective,
    ResearchQuestion,
    Result,
    analyze_flow,
    parse_mermaid,
)

cmap = ContentMap(
    objectives=(Objective("O1", "Reduce origin traffic"), Objective("O2", "Explain eviction choices")),
    research_questions=(
        ResearchQuestion("RQ1", "Does learned eviction raise hit ratio?", ("O1",)),
        ResearchQuestion("RQ2", "Which features matter most?", ("O3",)),
    ),
    methods=(Method("M1", "Trace replay", ("RQ1",)), Method("M2", "Feature ablation", ("RQ2",))),
    results=(Result("R1", "Hit ratio up 4 to 9 percent", ("RQ1",)),),
    conclusions=(Conclusion("C1", "Learned eviction helps", ("O1",), ("RQ1",)),),
)

analysis = analyze_flow(cmap)
print(len(analysis.graph.nodes), "nodes,", len(analysis.graph.edges), "edges")
for gap in analysis.gaps:
    print(f"{gap.kind.value:<22} {gap.subject:<4} {gap.detail}")

print(analysis.mermaid)

# the emitted text parses back to the same edges
diagram = parse_mermaid(analysis.mermaid)
print(sorted(diagram.edges) == sorted(analysis.graph.edges))
