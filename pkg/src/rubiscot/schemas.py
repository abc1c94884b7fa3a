"""Structured-response parsing for model completions.

Every completion with a structured schema is expected to carry one fenced
JSON block. Parsing is tolerant of unknown fields and strict about
required ones; a failure raises :class:`UnparseableResponse`, which
:func:`ask_structured` answers by re-sending the request with a reminder.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Any, Callable

from rubiscot.errors import UnparseableResponse
from rubiscot.llm import Backend, GenerationConfig, PromptRequest
from rubiscot.model import Severity

REMINDER = "Respond only with the structured block, in a single fenced ```json block."

_FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_-]*)[ \t]*\r?\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class ResponseSchema:
    schema_id: str
    description: str
    parse: Callable[[Any], Any]
    structured: bool = True


def extract_block(text: str) -> Any:
    """JSON value of the first fenced block in ``text``."""
    m = _FENCE.search(text)
    if m is None:
        raise UnparseableResponse("no fenced structured block in response")
    try:
        return json.loads(m.group(2))
    except json.JSONDecodeError as exc:
        raise UnparseableResponse(f"fenced block is not valid JSON: {exc.msg}") from None


# -- field helpers ---------------------------------------------------------


def _obj(value: Any, where: str) -> dict:
    if not isinstance(value, dict):
        raise UnparseableResponse(f"{where}: expected an object")
    return value


def _list(value: Any, where: str) -> list:
    if not isinstance(value, list):
        raise UnparseableResponse(f"{where}: expected a list")
    return value


def _req(obj: dict, key: str, where: str) -> Any:
    if key not in obj or obj[key] is None:
        raise UnparseableResponse(f"{where}: missing required field {key!r}")
    return obj[key]


def _text(obj: dict, key: str, where: str, *, required: bool = True) -> str | None:
    if not required and obj.get(key) in (None, ""):
        return None
    value = _req(obj, key, where)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = str(value)
    if not isinstance(value, str) or not value.strip():
        raise UnparseableResponse(f"{where}: field {key!r} must be a non-empty string")
    return value


def _ids(obj: dict, key: str, where: str) -> list[str]:
    value = obj.get(key) or []
    if isinstance(value, str):
        value = [value]
    return [str(v) for v in _list(value, f"{where}.{key}")]


def percentage(value: Any, where: str) -> float:
    """A finite number in [0, 100]; anything else is rejected, never clamped."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        if isinstance(value, str):
            try:
                value = float(value.strip().rstrip("%"))
            except ValueError:
                raise UnparseableResponse(f"{where}: percentage is not numeric") from None
        else:
            raise UnparseableResponse(f"{where}: percentage is not numeric")
    value = float(value)
    if not math.isfinite(value) or not 0.0 <= value <= 100.0:
        raise UnparseableResponse(f"{where}: percentage {value} outside [0, 100]")
    return value


# -- schema parsers --------------------------------------------------------


def _parse_findings(data: Any, allow_blocking: bool = False) -> list[dict]:
    items = _list(_req(_obj(data, "response"), "findings", "response"), "findings")
    out = []
    for i, raw in enumerate(items):
        where = f"findings[{i}]"
        item = _obj(raw, where)
        sev_text = str(_req(item, "severity", where)).strip().upper()
        try:
            severity = Severity(sev_text)
        except ValueError:
            raise UnparseableResponse(f"{where}: unknown severity {sev_text!r}") from None
        if severity is Severity.BLOCKING and not allow_blocking:
            raise UnparseableResponse(f"{where}: BLOCKING is reserved for the preliminary stage")
        finding = {
            "severity": severity,
            "observation": _text(item, "observation", where),
            "evidence": _text(item, "evidence", where),
            "location": _text(item, "location", where, required=False),
        }
        if allow_blocking:
            finding["criterion"] = _text(item, "criterion", where, required=False)
            finding["missing_element"] = _text(item, "missing_element", where, required=False)
        out.append(finding)
    return out


def _parse_degree_level(data: Any) -> str:
    level = str(_req(_obj(data, "response"), "level", "response")).strip().upper()
    if level not in ("BACHELOR", "MASTER"):
        raise UnparseableResponse(f"unknown degree level {level!r}")
    return level


_CONTENT_KINDS = {
    "objectives": ("source_ref",),
    "research_questions": ("objective_ids", "source_ref"),
    "methods": ("rq_ids",),
    "results": ("rq_ids",),
    "discussion_points": ("objective_ids",),
    "conclusions": ("objective_ids", "rq_ids"),
}


def _parse_content_map(data: Any) -> dict[str, list[dict]]:
    data = _obj(data, "response")
    out: dict[str, list[dict]] = {}
    for kind, extra in _CONTENT_KINDS.items():
        items = []
        seen = set()
        for i, raw in enumerate(_list(data.get(kind) or [], kind)):
            where = f"{kind}[{i}]"
            item = _obj(raw, where)
            entry: dict[str, Any] = {
                "id": _text(item, "id", where),
                "text": _text(item, "text", where),
            }
            if entry["id"] in seen:
                raise UnparseableResponse(f"{where}: duplicate id {entry['id']!r}")
            seen.add(entry["id"])
            for key in extra:
                if key == "source_ref":
                    entry[key] = _text(item, key, where, required=False)
                else:
                    entry[key] = _ids(item, key, where)
            items.append(entry)
        out[kind] = items
    return out


def _parse_rubric_scores(data: Any) -> dict[str, Any]:
    data = _obj(data, "response")
    scores = []
    for i, raw in enumerate(_list(_req(data, "scores", "response"), "scores")):
        where = f"scores[{i}]"
        item = _obj(raw, where)
        scores.append(
            {
                "criterion_id": _text(item, "criterion_id", where),
                "percentage": percentage(_req(item, "percentage", where), where),
                "reasoning": _text(item, "reasoning", where),
            }
        )
    deviation = data.get("deviation")
    return {"scores": scores, "deviation": deviation if isinstance(deviation, str) and deviation.strip() else None}


def _parse_rubric(data: Any) -> dict[str, Any]:
    data = _obj(data, "response")
    criteria = []
    for i, raw in enumerate(_list(_req(data, "criteria", "response"), "criteria")):
        where = f"criteria[{i}]"
        item = _obj(raw, where)
        weight = item.get("weight", 1.0)
        if isinstance(weight, bool) or not isinstance(weight, (int, float)):
            raise UnparseableResponse(f"{where}: weight is not numeric")
        descriptors = _obj(item.get("descriptors") or {}, f"{where}.descriptors")
        criteria.append(
            {
                "id": _text(item, "id", where),
                "name": _text(item, "name", where),
                "weight": float(weight),
                "descriptors": {str(k).strip().upper(): str(v) for k, v in descriptors.items()},
            }
        )
    rubric_id = data.get("rubric_id")
    return {"rubric_id": rubric_id if isinstance(rubric_id, str) else None, "criteria": criteria}


def _parse_summary(data: Any) -> dict[str, list[str]]:
    data = _obj(data, "response")
    return {
        key: [str(v) for v in _list(data.get(key) or [], key) if str(v).strip()]
        for key in ("strengths", "weaknesses", "improvements")
    }


def _parse_prose(text: Any) -> str:
    if not isinstance(text, str) or not text.strip():
        raise UnparseableResponse("empty response")
    return text.strip()


SCHEMAS: dict[str, ResponseSchema] = {
    s.schema_id: s
    for s in [
        ResponseSchema("findings", "findings: list of {observation, evidence, location?, severity}", _parse_findings),
        ResponseSchema(
            "preliminary",
            "findings: list of {criterion?, observation, evidence, location?, severity, missing_element?}",
            lambda d: _parse_findings(d, allow_blocking=True),
        ),
        ResponseSchema("degree_level", "level: BACHELOR | MASTER", _parse_degree_level),
        ResponseSchema("content_map", "objectives, research_questions, methods, results, discussion_points, conclusions", _parse_content_map),
        ResponseSchema("rubric_scores", "scores: list of {criterion_id, percentage in [0,100], reasoning}", _parse_rubric_scores),
        ResponseSchema("rubric", "rubric_id?, criteria: list of {id, name, weight?, descriptors}", _parse_rubric),
        ResponseSchema("summary", "strengths, weaknesses, improvements: lists of strings", _parse_summary),
        ResponseSchema("prose", "free text", _parse_prose, structured=False),
    ]
}


def parse_structured_response(text: str, schema_id: str) -> Any:
    schema = SCHEMAS[schema_id]
    if not schema.structured:
        return schema.parse(text)
    return schema.parse(extract_block(text))


def ask_structured(
    backend: Backend,
    request: PromptRequest,
    config: GenerationConfig,
    schema_id: str,
    check: Callable[[Any], Any] | None = None,
) -> Any:
    """Send ``request`` and parse the reply, retrying unparseable replies.

    ``check`` may post-validate (and transform) the parsed value, raising
    :class:`UnparseableResponse` to trigger the same retry. After
    ``config.retry_limit`` re-sends the last parse error propagates.
    """
    attempt_request = request
    for attempt in range(config.retry_limit + 1):
        completion = backend.complete(attempt_request, config)
        try:
            value = parse_structured_response(completion.text, schema_id)
            return check(value) if check is not None else value
        except UnparseableResponse:
            if attempt == config.retry_limit:
                raise
            attempt_request = request.with_reminder(REMINDER)
    raise AssertionError("unreachable")
