from __future__ import annotations

import json
import logging
import os
import threading

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rubiscot.errors import BackendUnavailable, ContextOverflow, UnscriptedPrompt
from rubiscot.llm import (
    BASE_PROMPT,
    Attachment,
    GenerationConfig,
    HttpBackend,
    MockBackend,
    PromptLog,
    RecordingBackend,
    make_request,
    prompt_fingerprint,
)

CFG = GenerationConfig()


def req(stage="PRELIMINARY", text="Assess the thesis.", attachments=()):
    return make_request(stage, text, CFG, attachments)


def test_fingerprint_match_returns_scripted_text():
    mock = MockBackend()
    r = req()
    mock.register("OK", fingerprint=r.fingerprint())
    assert mock.complete(r, CFG).text == "OK"


def test_stage_registration():
    mock = MockBackend()
    mock.register("r1", stage_id="PRELIMINARY")
    assert mock.complete(req(), CFG).text == "r1"


def test_unregistered_raises():
    with pytest.raises(UnscriptedPrompt) as exc:
        MockBackend().complete(req(), CFG)
    assert exc.value.stage_id == "PRELIMINARY"


def test_fingerprint_beats_stage():
    mock = MockBackend()
    special = req(text="special prompt")
    mock.register("by-stage", stage_id="PRELIMINARY")
    mock.register("by-fingerprint", fingerprint=special.fingerprint())
    assert mock.complete(special, CFG).text == "by-fingerprint"
    assert mock.complete(req(text="other prompt"), CFG).text == "by-stage"


def test_hierarchical_stage_fallback_prefers_longest():
    mock = MockBackend()
    mock.register("generic", stage_id="RUBRIC_ASSESSMENT")
    mock.register("intro", stage_id="RUBRIC_ASSESSMENT/INTRODUCTION")
    assert mock.complete(req("RUBRIC_ASSESSMENT/INTRODUCTION/PASS1"), CFG).text == "intro"
    assert mock.complete(req("RUBRIC_ASSESSMENT/RESULTS/PASS2"), CFG).text == "generic"


def test_list_responses_served_in_order_then_repeat():
    mock = MockBackend()
    mock.register(["a", "b"], stage_id="REPORT")
    assert [mock.complete(req("REPORT"), CFG).text for _ in range(4)] == ["a", "b", "b", "b"]


def test_same_request_twice_identical():
    mock = MockBackend()
    mock.register("same", stage_id="PRELIMINARY")
    assert mock.complete(req(), CFG) == mock.complete(req(), CFG)


def test_context_overflow():
    cfg = GenerationConfig(context_budget=100)
    mock = MockBackend()
    mock.register("x", stage_id="PRELIMINARY")
    big = make_request("PRELIMINARY", "go", cfg, [Attachment("thesis", "y" * 200)])
    with pytest.raises(ContextOverflow):
        mock.complete(big, cfg)


def test_fingerprint_ignores_whitespace_changes():
    assert prompt_fingerprint("S", "a  b\n\nc") == prompt_fingerprint("S", " a b c ")
    assert prompt_fingerprint("S", "a b") != prompt_fingerprint("T", "a b")


def test_from_script_matcher_forms():
    r = req(text="fp prompt")
    mock = MockBackend.from_script(
        [
            {"matcher": "PRELIMINARY", "response": "stage"},
            {"matcher": f"fingerprint:{r.fingerprint()}", "response": "fp"},
            {"matcher": {"stage_id": "REPORT"}, "response": "obj"},
        ]
    )
    assert mock.complete(r, CFG).text == "fp"
    assert mock.complete(req(), CFG).text == "stage"
    assert mock.complete(req("REPORT"), CFG).text == "obj"


@pytest.mark.parametrize("kwargs", [{"temperature": 1.5}, {"retry_limit": -1}, {"max_output_tokens": 0}])
def test_generation_config_validation(kwargs):
    with pytest.raises(ValueError):
        GenerationConfig(**kwargs)


def test_base_prompt_always_system_text():
    mock = MockBackend()
    mock.register("x", stage_id="GROUP_CLARITY")
    cfg = GenerationConfig(base_prompt="custom base")
    mock.complete(make_request("GROUP_CLARITY", "hi", cfg), cfg)
    assert mock.calls[0].system_text == "custom base"
    assert GenerationConfig().base_prompt == BASE_PROMPT


@settings(max_examples=50)
@given(st.lists(st.sampled_from(["A", "B", "A/x", "B/y/z"]), max_size=12))
def test_mock_is_pure_function_of_request_sequence(stages):
    def run():
        mock = MockBackend()
        mock.register(["a1", "a2"], stage_id="A")
        mock.register(["b1", "b2", "b3"], stage_id="B")
        return [mock.complete(req(s), CFG).text for s in stages]

    assert run() == run()


def test_concurrent_calls_are_all_logged():
    mock = MockBackend()
    mock.register("ok", stage_id="S")
    log = PromptLog()
    rec = RecordingBackend(mock, log)
    threads = [threading.Thread(target=rec.complete, args=(req("S", f"p{i}"), CFG)) for i in range(32)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(log) == 32 == len(mock.calls)


def test_recording_backend_logs_failures():
    log = PromptLog()
    with pytest.raises(UnscriptedPrompt):
        RecordingBackend(MockBackend(), log).complete(req(), CFG)
    assert log.entries[0].completion is None
    assert "UnscriptedPrompt" in log.entries[0].error


# -- HTTP adapter ----------------------------------------------------------

OK_BODY = {"choices": [{"message": {"content": "hello"}}], "usage": {"prompt_tokens": 3, "completion_tokens": 1}}


def _counting(statuses):
    seen = []

    def handler(request: httpx.Request) -> httpx.Response:
        seen.append(request)
        status = statuses[min(len(seen) - 1, len(statuses) - 1)]
        return httpx.Response(status, json=OK_BODY if status == 200 else {"error": "x"})

    return seen, handler


def test_http_success_sends_base_prompt_and_key(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "sk-secret-123")
    seen, handler = _counting([200])
    backend = HttpBackend("https://llm.example/v1/chat", "TEST_KEY", transport=httpx.MockTransport(handler), backoff=0)
    out = backend.complete(req(), CFG)
    assert out.text == "hello" and out.usage == {"prompt_tokens": 3, "completion_tokens": 1}
    body = json.loads(seen[0].content)
    assert body["messages"][0] == {"role": "system", "content": BASE_PROMPT}
    assert body["temperature"] == 0.0
    assert seen[0].headers["authorization"] == "Bearer sk-secret-123"


@pytest.mark.parametrize("retry_limit", [0, 1, 2, 4])
def test_http_retry_bound(retry_limit):
    seen, handler = _counting([503])
    backend = HttpBackend("https://llm.example", transport=httpx.MockTransport(handler), backoff=0)
    with pytest.raises(BackendUnavailable):
        backend.complete(req(), GenerationConfig(retry_limit=retry_limit))
    assert len(seen) == retry_limit + 1


def test_http_recovers_after_transient_error():
    seen, handler = _counting([500, 200])
    backend = HttpBackend("https://llm.example", transport=httpx.MockTransport(handler), backoff=0)
    assert backend.complete(req(), CFG).text == "hello"
    assert len(seen) == 2


def test_http_auth_failure_is_not_retried():
    seen, handler = _counting([401])
    backend = HttpBackend("https://llm.example", transport=httpx.MockTransport(handler), backoff=0)
    with pytest.raises(BackendUnavailable):
        backend.complete(req(), CFG)
    assert len(seen) == 1


def test_http_network_error_counts_as_attempt():
    calls = []

    def handler(request):
        calls.append(request)
        raise httpx.ConnectError("refused", request=request)

    backend = HttpBackend("https://llm.example", transport=httpx.MockTransport(handler), backoff=0)
    with pytest.raises(BackendUnavailable):
        backend.complete(req(), GenerationConfig(retry_limit=1))
    assert len(calls) == 2


@settings(max_examples=30, deadline=None)
@given(st.from_regex(r"sk-[A-Za-z0-9]{24,40}", fullmatch=True))
def test_api_key_never_logged(key):
    os.environ["PROP_KEY"] = key
    try:

        def handler(request):
            return httpx.Response(500, text=f"echo {request.headers.get('authorization')}")

        records: list[str] = []

        class Grab(logging.Handler):
            def emit(self, record):
                records.append(record.getMessage())

        logger = logging.getLogger("rubiscot.llm")
        h = Grab(level=logging.DEBUG)
        logger.addHandler(h)
        old = logger.level
        logger.setLevel(logging.DEBUG)
        try:
            backend = HttpBackend("https://llm.example", "PROP_KEY", transport=httpx.MockTransport(handler), backoff=0)
            with pytest.raises(BackendUnavailable) as exc:
                backend.complete(req(), GenerationConfig(retry_limit=1))
        finally:
            logger.removeHandler(h)
            logger.setLevel(old)
        assert records
        assert all(key not in r for r in records)
        assert key not in str(exc.value)
        assert key not in repr(vars(backend))
    finally:
        del os.environ["PROP_KEY"]
