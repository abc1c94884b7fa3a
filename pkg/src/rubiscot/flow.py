"""Content extraction, logical-flow graph, gap detection and Mermaid output."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum

from rubiscot.errors import UnparseableResponse
from rubiscot.llm import Attachment, Backend, GenerationConfig, make_request
from rubiscot.model import StageId, ThesisDocument
from rubiscot.prompts import get_template
from rubiscot.schemas import ask_structured


@dataclass(frozen=True)
class Objective:
    id: str
    text: str
    source_ref: str | None = None


@dataclass(frozen=True)
class ResearchQuestion:
    id: str
    text: str
    objective_ids: tuple[str, ...] = ()
    source_ref: str | None = None


@dataclass(frozen=True)
class Method:
    id: str
    text: str
    rq_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class Result:
    id: str
    text: str
    rq_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class DiscussionPoint:
    id: str
    text: str
    objective_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class Conclusion:
    id: str
    text: str
    objective_ids: tuple[str, ...] = ()
    rq_ids: tuple[str, ...] = ()


class NodeKind(str, Enum):
    OBJECTIVE = "OBJECTIVE"
    RQ = "RQ"
    METHOD = "METHOD"
    RESULT = "RESULT"
    DISCUSSION = "DISCUSSION"
    CONCLUSION = "CONCLUSION"


CHAIN = tuple(NodeKind)
_KIND_ORDER = {k: i for i, k in enumerate(CHAIN)}


@dataclass(frozen=True)
class ContentMap:
    objectives: tuple[Objective, ...] = ()
    research_questions: tuple[ResearchQuestion, ...] = ()
    methods: tuple[Method, ...] = ()
    results: tuple[Result, ...] = ()
    discussion_points: tuple[DiscussionPoint, ...] = ()
    conclusions: tuple[Conclusion, ...] = ()

    def __post_init__(self) -> None:
        for kind, items in self.by_kind().items():
            dupes = [i for i, n in Counter(x.id for x in items).items() if n > 1]
            if dupes:
                raise ValueError(f"duplicate {kind.value} ids: {dupes}")

    def by_kind(self) -> dict[NodeKind, tuple]:
        return {
            NodeKind.OBJECTIVE: self.objectives,
            NodeKind.RQ: self.research_questions,
            NodeKind.METHOD: self.methods,
            NodeKind.RESULT: self.results,
            NodeKind.DISCUSSION: self.discussion_points,
            NodeKind.CONCLUSION: self.conclusions,
        }

    @classmethod
    def from_parsed(cls, data: dict[str, list[dict]]) -> ContentMap:
        def tup(item: dict, key: str) -> tuple[str, ...]:
            return tuple(item.get(key) or ())

        return cls(
            objectives=tuple(Objective(o["id"], o["text"], o.get("source_ref")) for o in data["objectives"]),
            research_questions=tuple(
                ResearchQuestion(q["id"], q["text"], tup(q, "objective_ids"), q.get("source_ref"))
                for q in data["research_questions"]
            ),
            methods=tuple(Method(m["id"], m["text"], tup(m, "rq_ids")) for m in data["methods"]),
            results=tuple(Result(r["id"], r["text"], tup(r, "rq_ids")) for r in data["results"]),
            discussion_points=tuple(
                DiscussionPoint(d["id"], d["text"], tup(d, "objective_ids")) for d in data["discussion_points"]
            ),
            conclusions=tuple(
                Conclusion(c["id"], c["text"], tup(c, "objective_ids"), tup(c, "rq_ids"))
                for c in data["conclusions"]
            ),
        )


@dataclass(frozen=True)
class FlowNode:
    node_id: str
    kind: NodeKind
    label: str


@dataclass(frozen=True)
class FlowGraph:
    nodes: tuple[FlowNode, ...] = ()
    edges: tuple[tuple[str, str], ...] = ()

    def node(self, node_id: str) -> FlowNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)


class GapKind(str, Enum):
    UNADDRESSED_OBJECTIVE = "UNADDRESSED_OBJECTIVE"
    RQ_WITHOUT_METHOD = "RQ_WITHOUT_METHOD"
    RQ_WITHOUT_RESULT = "RQ_WITHOUT_RESULT"
    RQ_WITHOUT_CONCLUSION = "RQ_WITHOUT_CONCLUSION"
    DANGLING_REFERENCE = "DANGLING_REFERENCE"


_GAP_ORDER = {k: i for i, k in enumerate(GapKind)}


@dataclass(frozen=True)
class Gap:
    kind: GapKind
    subject: str
    detail: str
    source: str | None = None  # referring node, for DANGLING_REFERENCE


@dataclass(frozen=True)
class FlowAnalysis:
    """Everything the CONTENT_EXTRACTION stage produces."""

    content_map: ContentMap
    graph: FlowGraph
    gaps: tuple[Gap, ...]
    mermaid: str


# -- extraction ------------------------------------------------------------


def extract_content_map(
    doc: ThesisDocument, backend: Backend, config: GenerationConfig, template_dir=None
) -> ContentMap:
    template = get_template(StageId.CONTENT_EXTRACTION.value, template_dir)
    request = make_request(
        StageId.CONTENT_EXTRACTION.value,
        template.render({}),
        config,
        [Attachment("thesis", doc.raw_text)],
    )

    def to_map(parsed: dict) -> ContentMap:
        try:
            return ContentMap.from_parsed(parsed)
        except ValueError as exc:
            raise UnparseableResponse(str(exc)) from None

    return ask_structured(backend, request, config, template.response_schema_id, to_map)


# -- graph -----------------------------------------------------------------


def node_ids(cmap: ContentMap) -> dict[tuple[NodeKind, str], str]:
    """Graph node id per (kind, element id).

    Element ids are used as-is unless the same id occurs under several
    kinds, in which case every colliding one is prefixed with its kind.
    """
    counts = Counter(e.id for items in cmap.by_kind().values() for e in items)
    return {
        (kind, e.id): e.id if counts[e.id] == 1 else f"{kind.value}_{e.id}"
        for kind, items in cmap.by_kind().items()
        for e in items
    }


def build_flow_graph(cmap: ContentMap) -> FlowGraph:
    """One node per element, edges only between adjacent chain kinds.

    Declared links map to edges as follows: RQ->objective gives
    OBJECTIVE->RQ, method->RQ gives RQ->METHOD, conclusion->objective gives
    the CONCLUSION->OBJECTIVE closure. Results and discussion points do not
    reference adjacent kinds directly, so their edges are derived from
    shared references: METHOD->RESULT when both cite the same RQ,
    RESULT->DISCUSSION when the result's RQs address an objective the point
    discusses, DISCUSSION->CONCLUSION when both cite the same objective.
    """
    ids = node_ids(cmap)
    nodes = sorted(
        (FlowNode(ids[(kind, e.id)], kind, e.text) for kind, items in cmap.by_kind().items() for e in items),
        key=lambda n: (_KIND_ORDER[n.kind], n.node_id),
    )
    objectives = {o.id for o in cmap.objectives}
    rqs = {q.id: q for q in cmap.research_questions}

    edges: set[tuple[str, str]] = set()
    for q in cmap.research_questions:
        for oid in q.objective_ids:
            if oid in objectives:
                edges.add((ids[(NodeKind.OBJECTIVE, oid)], ids[(NodeKind.RQ, q.id)]))
    for m in cmap.methods:
        for rid in m.rq_ids:
            if rid in rqs:
                edges.add((ids[(NodeKind.RQ, rid)], ids[(NodeKind.METHOD, m.id)]))
    for m in cmap.methods:
        for r in cmap.results:
            if set(m.rq_ids) & set(r.rq_ids) & rqs.keys():
                edges.add((ids[(NodeKind.METHOD, m.id)], ids[(NodeKind.RESULT, r.id)]))
    for r in cmap.results:
        served = {oid for rid in r.rq_ids if rid in rqs for oid in rqs[rid].objective_ids}
        for d in cmap.discussion_points:
            if served & set(d.objective_ids) & objectives:
                edges.add((ids[(NodeKind.RESULT, r.id)], ids[(NodeKind.DISCUSSION, d.id)]))
    for d in cmap.discussion_points:
        for c in cmap.conclusions:
            if set(d.objective_ids) & set(c.objective_ids) & objectives:
                edges.add((ids[(NodeKind.DISCUSSION, d.id)], ids[(NodeKind.CONCLUSION, c.id)]))
    for c in cmap.conclusions:
        for oid in c.objective_ids:
            if oid in objectives:
                edges.add((ids[(NodeKind.CONCLUSION, c.id)], ids[(NodeKind.OBJECTIVE, oid)]))

    order = {n.node_id: i for i, n in enumerate(nodes)}
    return FlowGraph(tuple(nodes), tuple(sorted(edges, key=lambda e: (order[e[0]], order[e[1]]))))


def detect_gaps(graph: FlowGraph, cmap: ContentMap) -> list[Gap]:
    ids = node_ids(cmap)
    objectives = {o.id for o in cmap.objectives}
    rq_ids = {q.id for q in cmap.research_questions}
    gaps: list[Gap] = []

    addressed = {oid for q in cmap.research_questions for oid in q.objective_ids}
    for o in cmap.objectives:
        if o.id not in addressed:
            gaps.append(Gap(GapKind.UNADDRESSED_OBJECTIVE, ids[(NodeKind.OBJECTIVE, o.id)], "no research question addresses this objective"))

    with_method = {rid for m in cmap.methods for rid in m.rq_ids}
    with_result = {rid for r in cmap.results for rid in r.rq_ids}
    with_conclusion = {rid for c in cmap.conclusions for rid in c.rq_ids}
    for q in cmap.research_questions:
        node = ids[(NodeKind.RQ, q.id)]
        if q.id not in with_method:
            gaps.append(Gap(GapKind.RQ_WITHOUT_METHOD, node, "no method is linked to this research question"))
        if q.id not in with_result:
            gaps.append(Gap(GapKind.RQ_WITHOUT_RESULT, node, "no result is linked to this research question"))
        if q.id not in with_conclusion:
            gaps.append(Gap(GapKind.RQ_WITHOUT_CONCLUSION, node, "no conclusion is linked to this research question"))

    def dangling(kind: NodeKind, element_id: str, refs, known: set[str], target: str) -> None:
        for ref in refs:
            if ref not in known:
                gaps.append(
                    Gap(
                        GapKind.DANGLING_REFERENCE,
                        ref,
                        f"{element_id} references unknown {target} {ref}",
                        source=ids[(kind, element_id)],
                    )
                )

    for q in cmap.research_questions:
        dangling(NodeKind.RQ, q.id, q.objective_ids, objectives, "objective")
    for m in cmap.methods:
        dangling(NodeKind.METHOD, m.id, m.rq_ids, rq_ids, "research question")
    for r in cmap.results:
        dangling(NodeKind.RESULT, r.id, r.rq_ids, rq_ids, "research question")
    for d in cmap.discussion_points:
        dangling(NodeKind.DISCUSSION, d.id, d.objective_ids, objectives, "objective")
    for c in cmap.conclusions:
        dangling(NodeKind.CONCLUSION, c.id, c.objective_ids, objectives, "objective")
        dangling(NodeKind.CONCLUSION, c.id, c.rq_ids, rq_ids, "research question")

    gaps.sort(key=lambda g: (_GAP_ORDER[g.kind], g.subject, g.source or "", g.detail))
    return gaps


# -- Mermaid ---------------------------------------------------------------

GAP_CLASS = "classDef gap stroke:#d62728,stroke-width:2px,stroke-dasharray:5 5"
MISSING_CLASS = "classDef missing fill:#fff,stroke:#d62728,color:#d62728,stroke-dasharray:3 3"

_MISSING_LABEL = {
    GapKind.UNADDRESSED_OBJECTIVE: ("no research question", "research question"),
    GapKind.RQ_WITHOUT_METHOD: ("no method", "method"),
    GapKind.RQ_WITHOUT_RESULT: ("no result", "result"),
    GapKind.RQ_WITHOUT_CONCLUSION: ("no conclusion", "conclusion"),
    GapKind.DANGLING_REFERENCE: ("unresolved reference", None),
}


def mermaid_ids(graph: FlowGraph) -> dict[str, str]:
    """Injective map from node ids to Mermaid-safe identifiers."""
    out: dict[str, str] = {}
    used: set[str] = set()
    for node in graph.nodes:
        base = re.sub(r"[^A-Za-z0-9_]", "_", node.node_id) or "n"
        if base[0].isdigit():
            base = f"n{base}"
        if base in {"graph", "end", "class", "classDef", "style", "subgraph"} or base.startswith("MISSING_"):
            base = f"n_{base}"
        candidate, i = base, 2
        while candidate in used:
            candidate, i = f"{base}_{i}", i + 1
        used.add(candidate)
        out[node.node_id] = candidate
    return out


def escape_label(text: str) -> str:
    text = " ".join(text.split())
    for raw, entity in (("#", "#35;"), ('"', "#quot;"), ("<", "#lt;"), (">", "#gt;")):
        text = text.replace(raw, entity)
    return text


def emit_mermaid(graph: FlowGraph, gaps: list[Gap] | tuple[Gap, ...] = ()) -> str:
    mid = mermaid_ids(graph)
    lines = ["graph TD", f"    {GAP_CLASS}", f"    {MISSING_CLASS}"]
    for node in graph.nodes:
        label = escape_label(f"{node.node_id}: {node.label}")
        lines.append(f'    {mid[node.node_id]}["{label}"]')
    for src, dst in graph.edges:
        lines.append(f"    {mid[src]} --> {mid[dst]}")

    flagged: list[str] = []
    for n, gap in enumerate(gaps, start=1):
        missing = f"MISSING_{n}"
        short, what = _MISSING_LABEL[gap.kind]
        anchor = gap.source if gap.kind is GapKind.DANGLING_REFERENCE else gap.subject
        text = f"MISSING: {what}" if what else f"MISSING: {gap.subject}"
        lines.append(f'    {missing}["{escape_label(text)}"]')
        if anchor in mid:
            lines.append(f'    {mid[anchor]} -.->|"{escape_label(short)}"| {missing}')
            if mid[anchor] not in flagged:
                flagged.append(mid[anchor])
        lines.append(f"    class {missing} missing")
    for node_id in flagged:
        lines.append(f"    class {node_id} gap")
    return "\n".join(lines) + "\n"


@dataclass
class MermaidDiagram:
    nodes: dict[str, str]
    edges: list[tuple[str, str]]
    dashed_edges: list[tuple[str, str, str]]
    classes: list[tuple[str, str]]
    class_defs: dict[str, str]


_ID = r"[A-Za-z_][A-Za-z0-9_]*"
_NODE_LINE = re.compile(rf'^({_ID})\["([^"]*)"\]$')
_EDGE_LINE = re.compile(rf"^({_ID}) --> ({_ID})$")
_DASHED_LINE = re.compile(rf'^({_ID}) -\.->\|"([^"]*)"\| ({_ID})$')
_CLASS_LINE = re.compile(rf"^class ({_ID}) ({_ID})$")
_CLASSDEF_LINE = re.compile(rf"^classDef ({_ID}) (\S.*)$")


def parse_mermaid(text: str) -> MermaidDiagram:
    """Parse the subset of Mermaid flowchart syntax that :func:`emit_mermaid` writes.

    Accepts the ``graph TD`` header, node definitions, solid and labelled
    dashed edges, ``class`` and ``classDef`` lines; anything else is an
    error, as is an edge or class line naming an undefined node.
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "graph TD":
        raise ValueError("missing 'graph TD' header")
    diagram = MermaidDiagram({}, [], [], [], {})
    for n, line in enumerate(lines[1:], start=2):
        if m := _CLASSDEF_LINE.match(line):
            diagram.class_defs[m.group(1)] = m.group(2)
        elif m := _CLASS_LINE.match(line):
            diagram.classes.append((m.group(1), m.group(2)))
        elif m := _NODE_LINE.match(line):
            if m.group(1) in diagram.nodes:
                raise ValueError(f"line {n}: node {m.group(1)} defined twice")
            diagram.nodes[m.group(1)] = m.group(2)
        elif m := _EDGE_LINE.match(line):
            diagram.edges.append((m.group(1), m.group(2)))
        elif m := _DASHED_LINE.match(line):
            diagram.dashed_edges.append((m.group(1), m.group(3), m.group(2)))
        else:
            raise ValueError(f"line {n}: not in the accepted grammar: {line!r}")
    known = diagram.nodes.keys()
    for a, b in diagram.edges + [(a, b) for a, b, _ in diagram.dashed_edges]:
        if a not in known or b not in known:
            raise ValueError(f"edge {a} -> {b} names an undefined node")
    for node, cls in diagram.classes:
        if node not in known or cls not in diagram.class_defs:
            raise ValueError(f"class line {node} {cls} is unresolved")
    return diagram


def analyze_flow(cmap: ContentMap) -> FlowAnalysis:
    graph = build_flow_graph(cmap)
    gaps = detect_gaps(graph, cmap)
    return FlowAnalysis(cmap, graph, tuple(gaps), emit_mermaid(graph, gaps))

