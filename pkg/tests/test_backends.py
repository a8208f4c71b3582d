import json

import httpx
import pytest

from pointloop.backends import (
    AuditLog,
    BackendClient,
    BackendDescriptor,
    ChatRequest,
    ChatResponse,
    HttpTransport,
    Message,
    RateLimitedError,
    ResponseCache,
    RetriesExhaustedError,
    Sampling,
    SchemaViolationError,
    ScriptedBackend,
    SlidingWindowRateLimiter,
    TransportError,
    UnknownFingerprintError,
    fingerprint_chat,
    fingerprint_embed,
)

CHAT = BackendDescriptor(kind="chat", model_name="scripted-chat")
EMB = BackendDescriptor(kind="embedding", model_name="scripted-emb")


def req(text="hello", **kw):
    return ChatRequest(messages=[Message("user", text)], **kw)


def make_client(transport, **kw):
    return BackendClient(CHAT, transport, audit_log=AuditLog(), **kw)


# ---------------------------------------------------------------------------
# Fingerprints


def test_fingerprint_stable_and_sensitive():
    a = fingerprint_chat(CHAT, req("hi"))
    assert a == fingerprint_chat(CHAT, req("hi"))
    assert a != fingerprint_chat(CHAT, req("hi!"))
    assert a != fingerprint_chat(CHAT, req("hi", sampling=Sampling(seed=1)))
    other = BackendDescriptor(kind="chat", model_name="other")
    assert a != fingerprint_chat(other, req("hi"))


def test_fingerprint_embed_order_sensitive():
    assert fingerprint_embed(EMB, ["a", "b"]) != fingerprint_embed(EMB, ["b", "a"])


# ---------------------------------------------------------------------------
# Scripted transport


def test_scripted_replay_exact():
    r = req("what is this?")
    fp = fingerprint_chat(CHAT, r)
    backend = ScriptedBackend(replay={fp: ChatResponse(text="A red chair.")})
    client = make_client(backend)
    assert client.complete(r).text == "A red chair."


def test_scripted_unknown_fingerprint():
    client = make_client(ScriptedBackend())
    with pytest.raises(UnknownFingerprintError):
        client.complete(req("never scripted"))


def test_scripted_determinism():
    backend = ScriptedBackend(default_rule=lambda fp, r: ChatResponse(text=f"echo:{fp[:8]}"))
    client = make_client(backend)
    r = req("same request")
    assert client.complete(r).text == client.complete(r).text


def test_scripted_embed_and_normalization():
    backend = ScriptedBackend(embed_rule=lambda fp, texts: [[2.0, 0.0] for _ in texts])
    client = BackendClient(EMB, backend)
    vecs = client.embed(["a"])
    assert abs(sum(x * x for x in vecs[0]) ** 0.5 - 1.0) < 1e-6
    assert vecs[0] == [1.0, 0.0]


def test_embed_batch_order():
    def rule(fp, texts):
        return [[1.0, 0.0] if t == "x" else [0.0, 3.0] for t in texts]

    client = BackendClient(EMB, ScriptedBackend(embed_rule=rule))
    vecs = client.embed(["x", "y", "x"])
    assert vecs == [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]


def test_kind_validation():
    client = make_client(ScriptedBackend())
    with pytest.raises(ValueError, match="images not allowed"):
        client.complete(req("a", images=[b"png"]))
    with pytest.raises(ValueError, match="point payload not allowed"):
        client.complete(req("a", point_payload="obj-1"))
    with pytest.raises(ValueError, match="embedding backend"):
        client.embed(["a"])
    emb_client = BackendClient(EMB, ScriptedBackend())
    with pytest.raises(ValueError, match="non-empty"):
        emb_client.embed([])


# ---------------------------------------------------------------------------
# Audit log


def test_audit_completeness_success_and_failure():
    log = AuditLog()
    backend = ScriptedBackend(default_rule=lambda fp, r: ChatResponse(text="ok"))
    client = BackendClient(CHAT, backend, audit_log=log)
    client.complete(req("one"))
    client.complete(req("two"))
    with pytest.raises(UnknownFingerprintError):
        BackendClient(CHAT, ScriptedBackend(), audit_log=log).complete(req("three"))
    records = log.records()
    assert len(records) == 3
    assert [r["status"] for r in records] == ["ok", "ok", "error"]
    assert all(r["event"] == "request" and r["kind"] == "chat" for r in records)


def test_audit_log_file_roundtrip(tmp_path):
    log = AuditLog(tmp_path / "audit.jsonl")
    log.append({"ts": 1.0, "event": "request", "fingerprint": "f", "status": "ok"})
    assert log.records()[0]["fingerprint"] == "f"


# ---------------------------------------------------------------------------
# Retries and backoff


class FlakyTransport:
    def __init__(self, failures, exc=TransportError("boom")):
        self.failures = failures
        self.exc = exc
        self.calls = 0

    def complete(self, descriptor, req):
        self.calls += 1
        if self.calls <= self.failures:
            raise self.exc
        return ChatResponse(text="recovered")


def test_retry_then_success():
    sleeps = []
    flaky = FlakyTransport(failures=2)
    client = make_client(flaky, max_retries=3, sleeper=sleeps.append)
    assert client.complete(req()).text == "recovered"
    assert flaky.calls == 3
    assert len(sleeps) == 2
    assert sleeps[1] > sleeps[0]  # exponential growth despite jitter <= 2x


def test_retries_exhausted():
    log = AuditLog()
    client = BackendClient(CHAT, FlakyTransport(failures=10), audit_log=log,
                           max_retries=2, sleeper=lambda s: None)
    with pytest.raises(RetriesExhaustedError):
        client.complete(req())
    assert log.records()[-1]["status"] == "error"
    assert log.records()[-1]["attempts"] == 3


def test_rate_limited_is_retryable():
    flaky = FlakyTransport(failures=1, exc=RateLimitedError("429"))
    client = make_client(flaky, sleeper=lambda s: None)
    assert client.complete(req()).text == "recovered"


def test_schema_violation_is_fatal():
    class Bad:
        calls = 0

        def complete(self, d, r):
            self.calls += 1
            raise SchemaViolationError("nope", raw_body="raw!")

    bad = Bad()
    client = make_client(bad, sleeper=lambda s: None)
    with pytest.raises(SchemaViolationError) as exc:
        client.complete(req())
    assert bad.calls == 1
    assert exc.value.raw_body == "raw!"


# ---------------------------------------------------------------------------
# Rate limiter


def test_sliding_window_never_exceeded():
    class Clock:
        t = 0.0

        def __call__(self):
            return self.t

    clock = Clock()

    def sleeper(s):
        clock.t += s

    limiter = SlidingWindowRateLimiter(3, clock=clock, sleeper=sleeper)
    stamps = []
    for _ in range(10):
        limiter.acquire()
        stamps.append(clock.t)
        clock.t += 0.01
    for i, t in enumerate(stamps):
        inside = [s for s in stamps if t - 1.0 < s <= t]
        assert len(inside) <= 3


def test_audit_timestamps_respect_rate_limit():
    # Slow first response must not let later fast responses compress the
    # persisted timestamps past the limit: records carry outbound time.
    import time as _time

    class VariableLatency:
        calls = 0

        def complete(self, d, r):
            self.calls += 1
            _time.sleep(0.25 if self.calls == 1 else 0.0)
            return ChatResponse(text="ok")

    log = AuditLog()
    client = BackendClient(CHAT, VariableLatency(), audit_log=log, rate_limit_per_s=4)
    for i in range(8):
        client.complete(req(f"msg {i}"))
    stamps = sorted(r["ts"] for r in log.records())
    for t in stamps:
        assert sum(1 for s in stamps if t - 1.0 < s <= t) <= 4


# ---------------------------------------------------------------------------
# Cache


def test_cache_hit_skips_transport(tmp_path):
    calls = []

    def rule(fp, r):
        calls.append(fp)
        return ChatResponse(text="fresh")

    log = AuditLog()
    cache = ResponseCache(tmp_path / "cache")
    client = BackendClient(CHAT, ScriptedBackend(default_rule=rule),
                           audit_log=log, cache=cache)
    r = req("cached?")
    assert client.complete(r).text == "fresh"
    assert client.complete(r).text == "fresh"
    assert len(calls) == 1
    events = [rec["event"] for rec in log.records()]
    assert events == ["request", "cache_hit"]
    # Outbound request fingerprints stay unique.
    outbound = [rec["fingerprint"] for rec in log.records() if rec["event"] == "request"]
    assert len(outbound) == len(set(outbound))


# ---------------------------------------------------------------------------
# HTTP transport


def http_client(handler):
    return HttpTransport(client=httpx.Client(transport=httpx.MockTransport(handler)))


def test_http_complete_ok():
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"text": "hi there", "usage": {"total": 3}})

    desc = BackendDescriptor(kind="vision", model_name="m", endpoint="http://api/chat")
    resp = http_client(handler).complete(desc, ChatRequest(
        messages=[Message("user", "look")], images=[b"\x89PNGdata"]))
    assert resp.text == "hi there"
    parts = seen["body"]["messages"][0]["content"]
    assert parts[0] == {"type": "text", "text": "look"}
    assert parts[1]["type"] == "image_png_base64"


def test_http_openai_style_choices():
    def handler(request):
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    desc = BackendDescriptor(kind="chat", model_name="m", endpoint="http://api/chat")
    assert http_client(handler).complete(desc, req()).text == "ok"


def test_http_schema_violation_carries_body():
    def handler(request):
        return httpx.Response(200, json={"weird": 1})

    desc = BackendDescriptor(kind="chat", model_name="m", endpoint="http://api/chat")
    with pytest.raises(SchemaViolationError) as exc:
        http_client(handler).complete(desc, req())
    assert "weird" in exc.value.raw_body


def test_http_429_and_500():
    desc = BackendDescriptor(kind="chat", model_name="m", endpoint="http://api/chat")
    with pytest.raises(RateLimitedError):
        http_client(lambda r: httpx.Response(429)).complete(desc, req())
    with pytest.raises(TransportError):
        http_client(lambda r: httpx.Response(503)).complete(desc, req())


def test_http_embed():
    def handler(request):
        body = json.loads(request.content)
        return httpx.Response(200, json={"vectors": [[1, 1] for _ in body["input"]]})

    desc = BackendDescriptor(kind="embedding", model_name="e", endpoint="http://api/embed")
    vecs = http_client(handler).embed(desc, ["a", "b"])
    assert len(vecs) == 2


def test_credentials_from_env(monkeypatch):
    monkeypatch.setenv("TEST_TOKEN", "sekret")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"text": "ok"})

    desc = BackendDescriptor(kind="chat", model_name="m", endpoint="http://api/chat",
                             credentials_env="TEST_TOKEN")
    http_client(handler).complete(desc, req())
    assert seen["auth"] == "Bearer sekret"


def test_empty_text_requires_refusal():
    with pytest.raises(SchemaViolationError):
        ChatResponse(text="")
    assert ChatResponse(text="", refusal=True).text == ""
