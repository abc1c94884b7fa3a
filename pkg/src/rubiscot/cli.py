"""Command-line entry point: ``rubiscot assess | gen-rubric | flow | validate-rubric``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from rubiscot.codec import to_data
from rubiscot.errors import RubiscotError
from rubiscot.flow import analyze_flow, extract_content_map
from rubiscot.llm import GenerationConfig, HttpBackend, MockBackend, RecordingBackend
from rubiscot.model import DegreeLevel, RunStatus, SectionKind, StageId, detect_degree_level, parse_thesis
from rubiscot.pipeline import PipelineConfig, run_all
from rubiscot.rag import RagStore, load_expectation_dir
from rubiscot.report import assemble_report, emit_json, emit_markdown
from rubiscot.rubric import generate_rubric, load_rubric_dir, rubric_from_dict, save_rubric, validate_rubric

logger = logging.getLogger("rubiscot")

EXIT_OK, EXIT_FAILED, EXIT_HALTED = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    thesis: str | None = None
    rubrics: str | None = None
    expectations: str | None = None
    out: str = "out"
    backend: str = "mock"
    script: str | None = None
    endpoint: str | None = None
    api_key_env: str = "RUBISCOT_API_KEY"
    model: str = "mock"
    temperature: float = 0.0
    max_tokens: int = 2048
    retry_limit: int = 2
    k: int = 4
    chunk_size: int = 800
    overlap: int = 200
    group_order: list[str] | None = None
    concurrent_groups: bool = False
    timestamp: str | None = None
    level: str | None = None
    templates: str | None = None

    def generation(self) -> GenerationConfig:
        return GenerationConfig(
            temperature=self.temperature,
            max_output_tokens=self.max_tokens,
            model_id=self.model,
            retry_limit=self.retry_limit,
        )

    def pipeline(self) -> PipelineConfig:
        order = tuple(StageId(g) for g in self.group_order) if self.group_order else None
        kwargs: dict[str, Any] = {}
        if order:
            kwargs["group_order"] = order
        return PipelineConfig(
            generation=self.generation(),
            retrieval_k=self.k,
            concurrent_groups=self.concurrent_groups,
            template_dir=self.templates,
            **kwargs,
        )


def load_config(args: argparse.Namespace) -> RunConfig:
    """JSON config file (if any) first, then every flag the user actually set."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = replace(cfg, **data)
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name, None) is not None}
    return replace(cfg, **overrides)


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {p}")
    return p


def _require_dir(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} directory not found: {p}")
    return p


def make_backend(cfg: RunConfig):
    if cfg.backend == "mock":
        return MockBackend.from_file(_require_file(cfg.script, "script"))
    if cfg.backend == "http":
        if not cfg.endpoint:
            raise UsageError("--endpoint is required with --backend http")
        return HttpBackend(cfg.endpoint, cfg.api_key_env)
    raise UsageError(f"unknown backend {cfg.backend!r}")


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _load_thesis(cfg: RunConfig):
    path = _require_file(cfg.thesis, "thesis")
    doc = parse_thesis(path.read_text(encoding="utf-8"), str(path))
    level = DegreeLevel(cfg.level.upper()) if cfg.level else detect_degree_level(doc)
    if level is DegreeLevel.UNKNOWN:
        raise UsageError("--level must be bachelor or master")
    return replace(doc, declared_level=level)


def _snapshot(cfg: RunConfig) -> dict[str, Any]:
    # no secret lives on RunConfig: only the env var *name* is recorded;
    # the output location is left out so reruns elsewhere stay byte-identical
    snap = asdict(cfg)
    snap.pop("out")
    return snap


def cmd_assess(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    rubrics_dir = _require_dir(cfg.rubrics, "rubrics")
    expectations_dir = _require_dir(cfg.expectations, "expectations")
    doc = _load_thesis(cfg)
    backend = make_backend(cfg)
    rubrics = load_rubric_dir(rubrics_dir)
    store = RagStore(chunk_size=cfg.chunk_size, overlap=cfg.overlap)
    for edoc in load_expectation_dir(expectations_dir):
        store.add(edoc)

    run = run_all(doc, backend, store, rubrics, cfg.pipeline(), timestamp=cfg.timestamp)
    out = Path(cfg.out)
    artifacts = {"run": "run.json"}
    if run.status is not RunStatus.FAILED:
        artifacts["report"] = "report.md"
    if StageId.CONTENT_EXTRACTION in run.stages:
        artifacts["flow"] = "flow.mmd"
    run = replace(run, config={**run.config, "run_config": _snapshot(cfg)}, artifacts=artifacts)

    write_atomic(out / "run.json", emit_json(run))
    if "flow" in artifacts:
        write_atomic(out / "flow.mmd", run.result(StageId.CONTENT_EXTRACTION).mermaid)
    if run.status is RunStatus.FAILED:
        print(f"assessment failed at stage {run.failed_stage}: {run.error}", file=sys.stderr)
        print(f"partial results written to {out / 'run.json'}", file=sys.stderr)
        return EXIT_FAILED
    write_atomic(out / "report.md", emit_markdown(assemble_report(run)))
    if run.status is RunStatus.HALTED_PRELIMINARY:
        missing = ", ".join(run.result(StageId.PRELIMINARY).missing_elements)
        print(f"assessment halted at stage PRELIMINARY: missing {missing}", file=sys.stderr)
        return EXIT_HALTED
    print(f"assessment completed: {out / 'report.md'}")
    return EXIT_OK


def cmd_gen_rubric(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    source = _require_file(args.source, "source")
    section = SectionKind(args.section.upper())
    backend = make_backend(cfg)
    try:
        rubric = generate_rubric(
            source.read_text(encoding="utf-8"),
            section,
            backend,
            chapter_label=args.chapter,
            config=cfg.generation(),
            rubric_id=args.rubric_id,
            template_dir=cfg.templates,
        )
    except RubiscotError as exc:
        print(f"rubric generation failed at stage RUBRIC_CREATION: {exc}", file=sys.stderr)
        return EXIT_FAILED
    path = save_rubric(rubric, Path(cfg.out) / f"{section.value.lower()}.json")
    print(f"rubric written to {path}")
    return EXIT_OK


def cmd_flow(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    path = _require_file(cfg.thesis, "thesis")
    doc = parse_thesis(path.read_text(encoding="utf-8"), str(path))
    recorder = RecordingBackend(make_backend(cfg))
    try:
        cmap = extract_content_map(doc, recorder, cfg.generation(), cfg.templates)
    except RubiscotError as exc:
        print(f"flow analysis failed at stage CONTENT_EXTRACTION: {exc}", file=sys.stderr)
        return EXIT_FAILED
    analysis = analyze_flow(cmap)
    out = Path(cfg.out)
    write_atomic(out / "flow.mmd", analysis.mermaid)
    write_atomic(out / "flow.json", json.dumps(to_data(analysis), indent=2, sort_keys=True) + "\n")
    for gap in analysis.gaps:
        print(f"{gap.kind.value}\t{gap.subject}\t{gap.detail}")
    print(f"flow diagram written to {out / 'flow.mmd'}")
    return EXIT_OK


def cmd_validate_rubric(args: argparse.Namespace) -> int:
    paths: list[Path] = []
    for raw in args.paths:
        p = Path(raw)
        if p.is_dir():
            paths += sorted(p.glob("*.json"))
        elif p.is_file():
            paths.append(p)
        else:
            raise UsageError(f"rubric path not found: {p}")
    bad = 0
    for p in paths:
        try:
            violations = validate_rubric(rubric_from_dict(json.loads(p.read_text(encoding="utf-8")), normalize=False))
        except (KeyError, ValueError, TypeError) as exc:
            violations = [f"unreadable rubric: {exc}"]
        if violations:
            bad += 1
            print(f"{p}: " + "; ".join(violations))
        else:
            print(f"{p}: ok")
    return EXIT_FAILED if bad else EXIT_OK


def _backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file mirroring the run configuration")
    p.add_argument("--backend", choices=["mock", "http"])
    p.add_argument("--script", help="mock script: JSON list of {matcher, response}")
    p.add_argument("--endpoint", help="chat-completion URL for the http backend")
    p.add_argument("--api-key-env", dest="api_key_env", help="environment variable holding the API key")
    p.add_argument("--model")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--retry-limit", dest="retry_limit", type=int)
    p.add_argument("--templates", help="directory of prompt template overrides")
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rubiscot", description="Rubric-based thesis assessment pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assess", help="run the full assessment pipeline")
    p.add_argument("--thesis")
    p.add_argument("--rubrics")
    p.add_argument("--expectations")
    p.add_argument("--level", choices=["bachelor", "master"], help="override degree-level detection")
    p.add_argument("-k", dest="k", type=int, help="retrieved chunks per stage prompt")
    p.add_argument("--group-order", dest="group_order", nargs=6, metavar="GROUP")
    p.add_argument("--concurrent-groups", dest="concurrent_groups", action="store_const", const=True)
    p.add_argument("--timestamp", help="fixed timestamp for reproducible artifacts")
    _backend_flags(p)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("gen-rubric", help="generate a chapter rubric with the chained creation prompts")
    p.add_argument("--source", help="chapter summary / expectation text seeding the rubric")
    p.add_argument("--chapter", required=True, help='chapter label, e.g. "17 The Conclusion"')
    p.add_argument("--section", required=True, choices=[k.value.lower() for k in SectionKind if k is not SectionKind.OTHER])
    p.add_argument("--rubric-id", dest="rubric_id")
    _backend_flags(p)
    p.set_defaults(func=cmd_gen_rubric)

    p = sub.add_parser("flow", help="content extraction and flow diagram only")
    p.add_argument("--thesis")
    _backend_flags(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("validate-rubric", help="check rubric files against the rubric rules")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_validate_rubric)
    return parser


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_FAILED
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (RubiscotError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
