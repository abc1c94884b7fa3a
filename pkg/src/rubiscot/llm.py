"""Text-generation backends: a scripted offline mock and an HTTP chat adapter."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

import httpx

from rubiscot.errors import BackendUnavailable, ContextOverflow, UnscriptedPrompt

logger = logging.getLogger(__name__)

BASE_PROMPT = (
    "Please provide responses focusing on coherent and straightforward "
    "information where creativity is less valued."
)


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 0.0
    max_output_tokens: int = 2048
    base_prompt: str = BASE_PROMPT
    model_id: str = "mock"
    retry_limit: int = 2
    context_budget: int = 400_000  # characters across system, user and attachments

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must lie in [0, 1], got {self.temperature}")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")


@dataclass(frozen=True)
class Attachment:
    name: str
    text: str


@dataclass(frozen=True)
class PromptRequest:
    stage_id: str
    system_text: str
    user_text: str
    attachments: tuple[Attachment, ...] = ()

    def __post_init__(self) -> None:
        if not self.user_text.strip():
            raise ValueError("user_text must be non-empty")

    @property
    def rendered_length(self) -> int:
        return (
            len(self.system_text)
            + len(self.user_text)
            + sum(len(a.name) + len(a.text) for a in self.attachments)
        )

    def fingerprint(self) -> str:
        return prompt_fingerprint(self.stage_id, self.user_text)

    def with_reminder(self, reminder: str) -> PromptRequest:
        return PromptRequest(
            self.stage_id, self.system_text, f"{self.user_text}\n\n{reminder}", self.attachments
        )

    def full_user_message(self) -> str:
        parts = [self.user_text]
        for a in self.attachments:
            parts.append(f"--- attached: {a.name} ---\n{a.text}\n--- end of {a.name} ---")
        return "\n\n".join(parts)


def make_request(
    stage_id: str, user_text: str, config: GenerationConfig, attachments=()
) -> PromptRequest:
    return PromptRequest(stage_id, config.base_prompt, user_text, tuple(attachments))


def prompt_fingerprint(stage_id: str, user_text: str) -> str:
    """Stable hash of the stage id and whitespace-collapsed prompt text."""
    normalized = " ".join(user_text.split())
    return hashlib.sha256(f"{stage_id}\n{normalized}".encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Completion:
    text: str
    backend_id: str
    usage: dict[str, int] | None = None


@dataclass(frozen=True)
class PromptExchange:
    request: PromptRequest
    completion: Completion | None
    error: str | None = None


class Backend(Protocol):
    def complete(self, request: PromptRequest, config: GenerationConfig) -> Completion: ...


def check_budget(request: PromptRequest, config: GenerationConfig) -> None:
    if request.rendered_length > config.context_budget:
        raise ContextOverflow(request.rendered_length, config.context_budget)


# -- mock ------------------------------------------------------------------


@dataclass
class _Script:
    responses: list[str]
    served: int = 0

    def next(self) -> str:
        text = self.responses[min(self.served, len(self.responses) - 1)]
        self.served += 1
        return text


class MockBackend:
    """Deterministic scripted backend.

    Responses are registered against a prompt fingerprint or a stage id.
    Stage ids are hierarchical (``RUBRIC_ASSESSMENT/INTRODUCTION/PASS1``), so
    a registration for ``RUBRIC_ASSESSMENT`` covers every sub-stage. A
    fingerprint match beats any stage match, and a longer stage id beats a
    shorter one. Registering a list serves its items in order, repeating
    the last one.
    """

    backend_id = "mock"

    def __init__(self) -> None:
        self._by_fingerprint: dict[str, _Script] = {}
        self._by_stage: dict[str, _Script] = {}
        self._lock = threading.Lock()
        self.calls: list[PromptRequest] = []

    def register(
        self,
        response: str | list[str],
        *,
        stage_id: str | None = None,
        fingerprint: str | None = None,
    ) -> None:
        if (stage_id is None) == (fingerprint is None):
            raise ValueError("register exactly one of stage_id or fingerprint")
        responses = [response] if isinstance(response, str) else list(response)
        if not responses:
            raise ValueError("empty response list")
        if fingerprint is not None:
            self._by_fingerprint[fingerprint] = _Script(responses)
        else:
            self._by_stage[str(getattr(stage_id, "value", stage_id))] = _Script(responses)

    def _resolve(self, request: PromptRequest) -> _Script:
        fp = request.fingerprint()
        if fp in self._by_fingerprint:
            return self._by_fingerprint[fp]
        stage = request.stage_id
        while True:
            if stage in self._by_stage:
                return self._by_stage[stage]
            if "/" not in stage:
                raise UnscriptedPrompt(request.stage_id, fp)
            stage = stage.rsplit("/", 1)[0]

    def complete(self, request: PromptRequest, config: GenerationConfig) -> Completion:
        check_budget(request, config)
        with self._lock:
            self.calls.append(request)
            text = self._resolve(request).next()
        return Completion(text=text, backend_id=self.backend_id)

    @classmethod
    def from_script(cls, entries: list[dict[str, Any]]) -> MockBackend:
        """Build from ``[{"matcher": ..., "response": ...}]``.

        ``matcher`` is a stage id string, ``"fingerprint:<hex>"``, or an
        object with a ``stage_id`` or ``fingerprint`` key.
        """
        mock = cls()
        for entry in entries:
            matcher = entry["matcher"]
            if isinstance(matcher, str):
                if matcher.startswith("fingerprint:"):
                    matcher = {"fingerprint": matcher.split(":", 1)[1]}
                else:
                    matcher = {"stage_id": matcher}
            mock.register(
                entry["response"],
                stage_id=matcher.get("stage_id"),
                fingerprint=matcher.get("fingerprint"),
            )
        return mock

    @classmethod
    def from_file(cls, path: str | Path) -> MockBackend:
        return cls.from_script(json.loads(Path(path).read_text(encoding="utf-8")))


# -- HTTP ------------------------------------------------------------------


class HttpBackend:
    """Chat-completion style JSON API over HTTPS.

    The API key is read from ``api_key_env`` at call time and never stored
    on the instance, so it cannot leak into run artifacts.
    """

    backend_id = "http"

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = "RUBISCOT_API_KEY",
        *,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
        backoff: float = 1.0,
    ) -> None:
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.backoff = backoff
        self._transport = transport

    def payload(self, request: PromptRequest, config: GenerationConfig) -> dict[str, Any]:
        return {
            "model": config.model_id,
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.full_user_message()},
            ],
        }

    def complete(self, request: PromptRequest, config: GenerationConfig) -> Completion:
        check_budget(request, config)
        key = os.environ.get(self.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = self.payload(request, config)
        logger.debug("POST %s %s", self.endpoint, _redact(json.dumps(body), key))

        last_error = "no attempt made"
        with httpx.Client(timeout=self.timeout, transport=self._transport) as client:
            for attempt in range(config.retry_limit + 1):
                if attempt and self.backoff:
                    time.sleep(self.backoff * 2 ** (attempt - 1))
                try:
                    resp = client.post(self.endpoint, json=body, headers=headers)
                except httpx.HTTPError as exc:
                    last_error = _redact(f"{type(exc).__name__}: {exc}", key)
                    logger.warning("attempt %d failed: %s", attempt + 1, last_error)
                    continue
                if resp.status_code in (401, 403):
                    raise BackendUnavailable(f"authentication failed ({resp.status_code})")
                if resp.status_code >= 400:
                    last_error = f"HTTP {resp.status_code}"
                    logger.warning("attempt %d failed: %s", attempt + 1, last_error)
                    continue
                data = resp.json()
                logger.debug("response %s", _redact(resp.text, key))
                try:
                    text = data["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError) as exc:
                    raise BackendUnavailable(f"malformed response body: {exc}") from None
                usage = data.get("usage")
                return Completion(
                    text=text,
                    backend_id=f"{self.backend_id}:{config.model_id}",
                    usage={k: int(v) for k, v in usage.items() if isinstance(v, int)}
                    if isinstance(usage, dict)
                    else None,
                )
        raise BackendUnavailable(
            f"{self.endpoint} unreachable after {config.retry_limit + 1} attempts: {last_error}"
        )


def _redact(text: str, secret: str) -> str:
    if secret:
        text = text.replace(secret, "***")
    return re.sub(r"(Bearer\s+)\S+", r"\1***", text)


# -- audit -----------------------------------------------------------------


@dataclass
class PromptLog:
    """Append-only, totally ordered record of backend calls."""

    entries: list[PromptExchange] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def append(self, exchange: PromptExchange) -> None:
        with self._lock:
            self.entries.append(exchange)

    def __len__(self) -> int:
        return len(self.entries)


class RecordingBackend:
    """Wraps a backend and appends every call, failed or not, to a PromptLog."""

    def __init__(self, inner: Backend, log: PromptLog | None = None) -> None:
        self.inner = inner
        self.log = log if log is not None else PromptLog()

    def complete(self, request: PromptRequest, config: GenerationConfig) -> Completion:
        try:
            completion = self.inner.complete(request, config)
        except Exception as exc:
            self.log.append(PromptExchange(request, None, f"{type(exc).__name__}: {exc}"))
            raise
        self.log.append(PromptExchange(request, completion))
        return completion
