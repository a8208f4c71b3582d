"""Gateway to chat / vision-chat / point-chat / embedding model services.

Every outbound request is fingerprinted (stable hash of the canonicalized
request), rate limited, retried with exponential backoff + jitter, and
recorded in a JSONL audit log. A persistent fingerprint-keyed response cache
(off by default) makes long pipeline runs resumable without re-issuing
completed requests.

The ScriptedBackend transport replays canned responses (or runs a
deterministic rule) keyed by fingerprint, for offline tests and demos.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import httpx

__all__ = [
    "BackendDescriptor",
    "Message",
    "Sampling",
    "ChatRequest",
    "ChatResponse",
    "BackendError",
    "TransportError",
    "RateLimitedError",
    "SchemaViolationError",
    "RetriesExhaustedError",
    "UnknownFingerprintError",
    "AuditLog",
    "ResponseCache",
    "HttpTransport",
    "ScriptedBackend",
    "BackendClient",
    "fingerprint_chat",
    "fingerprint_embed",
]

KINDS = ("chat", "vision", "point", "embedding")


class BackendError(Exception):
    pass


class TransportError(BackendError):
    """Network-level failure; retryable."""


class RateLimitedError(BackendError):
    """Service said slow down; retryable."""


class SchemaViolationError(BackendError):
    """Response body does not match the expected schema; fatal."""

    def __init__(self, message: str, raw_body: str = ""):
        super().__init__(message)
        self.raw_body = raw_body


class RetriesExhaustedError(BackendError):
    pass


class UnknownFingerprintError(BackendError):
    """Scripted backend has no entry and no default rule for this request."""


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str
    model_name: str
    endpoint: str = ""
    params: dict = field(default_factory=dict)
    credentials_env: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class Message:
    role: str
    text: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad role {self.role!r}")


@dataclass(frozen=True)
class Sampling:
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: int | None = None


@dataclass
class ChatRequest:
    messages: list[Message]
    images: list[bytes] | None = None
    point_payload: str | None = None
    sampling: Sampling = field(default_factory=Sampling)

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request must contain at least one message")


@dataclass
class ChatResponse:
    text: str
    token_logprobs: list[tuple[str, float]] | None = None
    usage: dict = field(default_factory=dict)
    refusal: bool = False

    def __post_init__(self):
        if not self.text and not self.refusal:
            raise SchemaViolationError("empty response text without explicit refusal")


# ---------------------------------------------------------------------------
# Fingerprinting


def _canon(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def fingerprint_chat(descriptor: BackendDescriptor, req: ChatRequest) -> str:
    return _canon({
        "kind": descriptor.kind,
        "model": descriptor.model_name,
        "messages": [{"role": m.role, "text": m.text} for m in req.messages],
        "images": [hashlib.sha256(b).hexdigest() for b in (req.images or [])],
        "point_payload": req.point_payload,
        "sampling": {
            "temperature": req.sampling.temperature,
            "max_tokens": req.sampling.max_tokens,
            "seed": req.sampling.seed,
        },
    })


def fingerprint_embed(descriptor: BackendDescriptor, texts: Sequence[str]) -> str:
    return _canon({
        "kind": descriptor.kind,
        "model": descriptor.model_name,
        "texts": list(texts),
    })


# ---------------------------------------------------------------------------
# Audit log, rate limiter, cache


class AuditLog:
    """Append-only JSONL record of every outbound request (and cache hit).

    Appends are serialized; pass path=None for an in-memory log.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._memory: list[dict] = []
        self._lock = threading.Lock()
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, ensure_ascii=False)
        with self._lock:
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            else:
                self._memory.append(json.loads(line))

    def records(self) -> list[dict]:
        with self._lock:
            if not self.path:
                return list(self._memory)
            if not self.path.exists():
                return []
            out = []
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    out.append(json.loads(line))
            return out


class SlidingWindowRateLimiter:
    """At most `per_second` acquisitions in any sliding 1-second window."""

    def __init__(self, per_second: int, clock=time.monotonic, sleeper=time.sleep):
        if per_second < 1:
            raise ValueError("per_second must be >= 1")
        self.per_second = per_second
        self._events: deque[float] = deque()
        self._lock = threading.Lock()
        self._clock = clock
        self._sleep = sleeper

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._events and now - self._events[0] >= 1.0:
                    self._events.popleft()
                if len(self._events) < self.per_second:
                    self._events.append(now)
                    return
                wait = 1.0 - (now - self._events[0])
            self._sleep(max(wait, 1e-4))


class ResponseCache:
    """Fingerprint-keyed response store; entries written atomically."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    def _path(self, fingerprint: str) -> Path:
        return self.dir / f"{fingerprint}.json"

    def get(self, fingerprint: str) -> dict | None:
        p = self._path(fingerprint)
        if not p.exists():
            return None
        return json.loads(p.read_text(encoding="utf-8"))

    def put(self, fingerprint: str, payload: dict) -> None:
        p = self._path(fingerprint)
        tmp = p.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, sort_keys=True, ensure_ascii=False),
                       encoding="utf-8")
        os.replace(tmp, p)


# ---------------------------------------------------------------------------
# Transports


def _response_to_payload(resp: ChatResponse) -> dict:
    return {
        "text": resp.text,
        "token_logprobs": resp.token_logprobs,
        "usage": resp.usage,
        "refusal": resp.refusal,
    }


def _payload_to_response(payload: dict) -> ChatResponse:
    lp = payload.get("token_logprobs")
    return ChatResponse(
        text=payload["text"],
        token_logprobs=[(t, float(p)) for t, p in lp] if lp else None,
        usage=payload.get("usage", {}),
        refusal=payload.get("refusal", False),
    )


class HttpTransport:
    """Chat-completion style JSON over HTTP(S).

    Request: {model, messages:[{role, content:[parts]}], temperature,
    max_tokens, seed}. Image parts are base64-inlined PNG; point payloads go
    as a reference part (or inline floats when the backend's params set
    point_inline). Accepts either {"text": ...} or an OpenAI-style choices
    body in response.
    """

    def __init__(self, timeout: float = 120.0, client: httpx.Client | None = None):
        self._client = client or httpx.Client(timeout=timeout)

    def _headers(self, descriptor: BackendDescriptor) -> dict:
        headers = {"content-type": "application/json"}
        if descriptor.credentials_env:
            token = os.environ.get(descriptor.credentials_env, "")
            if token:
                headers["authorization"] = f"Bearer {token}"
        return headers

    def _post(self, descriptor: BackendDescriptor, body: dict) -> dict:
        try:
            resp = self._client.post(descriptor.endpoint, json=body,
                                     headers=self._headers(descriptor))
        except httpx.HTTPError as exc:
            raise TransportError(f"request to {descriptor.endpoint} failed: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimitedError(f"rate limited by {descriptor.endpoint}")
        if resp.status_code >= 500:
            raise TransportError(f"server error {resp.status_code}")
        if resp.status_code >= 400:
            raise SchemaViolationError(f"request rejected: {resp.status_code}",
                                       raw_body=resp.text)
        try:
            return resp.json()
        except ValueError as exc:
            raise SchemaViolationError(f"non-JSON response: {exc}", raw_body=resp.text)

    def complete(self, descriptor: BackendDescriptor, req: ChatRequest) -> ChatResponse:
        messages = []
        for i, m in enumerate(req.messages):
            parts: list[dict] = [{"type": "text", "text": m.text}]
            if i == len(req.messages) - 1:
                for img in req.images or []:
                    parts.append({"type": "image_png_base64",
                                  "data": base64.b64encode(img).decode("ascii")})
                if req.point_payload is not None:
                    if descriptor.params.get("point_inline"):
                        parts.append({"type": "point_inline", "ref": req.point_payload})
                    else:
                        parts.append({"type": "point_ref", "ref": req.point_payload})
            messages.append({"role": m.role, "content": parts})
        body = {
            "model": descriptor.model_name,
            "messages": messages,
            "temperature": req.sampling.temperature,
            "max_tokens": req.sampling.max_tokens,
        }
        if req.sampling.seed is not None:
            body["seed"] = req.sampling.seed
        data = self._post(descriptor, body)
        if "text" in data:
            text = data["text"]
        elif "choices" in data:
            try:
                text = data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise SchemaViolationError(f"malformed choices: {exc}",
                                           raw_body=json.dumps(data))
        else:
            raise SchemaViolationError("response missing 'text' or 'choices'",
                                       raw_body=json.dumps(data))
        if not isinstance(text, str):
            raise SchemaViolationError(f"response text is {type(text).__name__}",
                                       raw_body=json.dumps(data))
        lp = data.get("token_logprobs")
        try:
            return ChatResponse(
                text=text,
                token_logprobs=[(t, float(p)) for t, p in lp] if lp else None,
                usage=data.get("usage", {}),
                refusal=bool(data.get("refusal", False)),
            )
        except (SchemaViolationError, ValueError, TypeError) as exc:
            if isinstance(exc, SchemaViolationError):
                exc.raw_body = json.dumps(data)
                raise
            raise SchemaViolationError(f"bad logprobs: {exc}", raw_body=json.dumps(data))

    def embed(self, descriptor: BackendDescriptor, texts: Sequence[str]) -> list[list[float]]:
        data = self._post(descriptor, {"model": descriptor.model_name,
                                       "input": list(texts)})
        if "vectors" in data:
            vectors = data["vectors"]
        elif "data" in data:
            vectors = [item.get("embedding") for item in data["data"]]
        else:
            raise SchemaViolationError("response missing 'vectors' or 'data'",
                                       raw_body=json.dumps(data))
        if len(vectors) != len(texts):
            raise SchemaViolationError(
                f"{len(vectors)} vectors for {len(texts)} texts", raw_body=json.dumps(data))
        return [[float(x) for x in v] for v in vectors]


class ScriptedBackend:
    """Deterministic offline transport: replay table plus optional default rule.

    Identical requests always produce identical responses. Unknown
    fingerprints with no default rule raise UnknownFingerprintError.
    """

    def __init__(
        self,
        replay: dict[str, ChatResponse] | None = None,
        default_rule: Callable[[str, ChatRequest], ChatResponse | None] | None = None,
        embed_replay: dict[str, list[list[float]]] | None = None,
        embed_rule: Callable[[str, Sequence[str]], list[list[float]]] | None = None,
        latency_s: float = 0.0,
    ):
        self.replay = dict(replay or {})
        self.default_rule = default_rule
        self.embed_replay = dict(embed_replay or {})
        self.embed_rule = embed_rule
        self.latency_s = latency_s

    def complete(self, descriptor: BackendDescriptor, req: ChatRequest) -> ChatResponse:
        if self.latency_s:
            time.sleep(self.latency_s)
        fp = fingerprint_chat(descriptor, req)
        if fp in self.replay:
            return self.replay[fp]
        if self.default_rule is not None:
            resp = self.default_rule(fp, req)
            if resp is not None:
                return resp
        raise UnknownFingerprintError(f"no scripted response for fingerprint {fp[:12]}…")

    def embed(self, descriptor: BackendDescriptor, texts: Sequence[str]) -> list[list[float]]:
        if self.latency_s:
            time.sleep(self.latency_s)
        fp = fingerprint_embed(descriptor, texts)
        if fp in self.embed_replay:
            return self.embed_replay[fp]
        if self.embed_rule is not None:
            return self.embed_rule(fp, texts)
        raise UnknownFingerprintError(f"no scripted embedding for fingerprint {fp[:12]}…")


def hash_embed_rule(dim: int = 16) -> Callable[[str, Sequence[str]], list[list[float]]]:
    """Deterministic unit vectors derived from each text's own hash."""

    def rule(_fp: str, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for t in texts:
            rng = random.Random(hashlib.sha256(t.encode("utf-8")).hexdigest())
            v = [rng.gauss(0, 1) for _ in range(dim)]
            norm = math.sqrt(sum(x * x for x in v))
            out.append([x / norm for x in v])
        return out

    return rule


# ---------------------------------------------------------------------------
# Client


class BackendClient:
    """Binds a descriptor to a transport with retries, rate limit, audit, cache."""

    def __init__(
        self,
        descriptor: BackendDescriptor,
        transport,
        audit_log: AuditLog | None = None,
        rate_limit_per_s: int | None = None,
        max_retries: int = 3,
        backoff_base_s: float = 0.2,
        cache: ResponseCache | None = None,
        sleeper=time.sleep,
        jitter_rng: random.Random | None = None,
    ):
        self.descriptor = descriptor
        self.transport = transport
        self.audit = audit_log or AuditLog()
        self.limiter = SlidingWindowRateLimiter(rate_limit_per_s) if rate_limit_per_s else None
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self.cache = cache
        self._sleep = sleeper
        self._jitter = jitter_rng or random.Random()

    @property
    def kind(self) -> str:
        return self.descriptor.kind

    def _audit(self, event: str, fingerprint: str, status: str, attempts: int,
               error: str | None = None, ts: float | None = None) -> None:
        rec = {
            # Outbound time (post rate-limit) when available, so limiter
            # guarantees hold over the persisted timestamps too.
            "ts": time.time() if ts is None else ts,
            "event": event,
            "kind": self.descriptor.kind,
            "model": self.descriptor.model_name,
            "fingerprint": fingerprint,
            "status": status,
            "attempts": attempts,
        }
        if error:
            rec["error"] = error
        self.audit.append(rec)

    def _run_with_retries(self, fp: str, call):
        attempts = 0
        while True:
            attempts += 1
            if self.limiter:
                self.limiter.acquire()
            started = time.time()
            try:
                result = call()
            except (TransportError, RateLimitedError) as exc:
                if attempts > self.max_retries:
                    self._audit("request", fp, "error", attempts, error=str(exc),
                                ts=started)
                    raise RetriesExhaustedError(
                        f"gave up after {attempts} attempts: {exc}") from exc
                delay = self.backoff_base_s * (2 ** (attempts - 1))
                self._sleep(delay * (1.0 + self._jitter.random()))
                continue
            except BackendError as exc:
                self._audit("request", fp, "error", attempts, error=str(exc), ts=started)
                raise
            except Exception as exc:
                self._audit("request", fp, "error", attempts, error=repr(exc), ts=started)
                raise
            return result, attempts, started

    def complete(self, req: ChatRequest) -> ChatResponse:
        if req.images and self.descriptor.kind != "vision":
            raise ValueError(f"images not allowed for kind {self.descriptor.kind!r}")
        if req.point_payload is not None and self.descriptor.kind != "point":
            raise ValueError(f"point payload not allowed for kind {self.descriptor.kind!r}")
        if self.descriptor.kind == "embedding":
            raise ValueError("use embed() on embedding backends")
        fp = fingerprint_chat(self.descriptor, req)
        if self.cache:
            hit = self.cache.get(fp)
            if hit is not None:
                self._audit("cache_hit", fp, "ok", 0)
                return _payload_to_response(hit)
        resp, attempts, started = self._run_with_retries(
            fp, lambda: self.transport.complete(self.descriptor, req))
        if self.cache:
            self.cache.put(fp, _response_to_payload(resp))
        self._audit("request", fp, "ok", attempts, ts=started)
        return resp

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if self.descriptor.kind != "embedding":
            raise ValueError(f"embed() requires an embedding backend, got {self.descriptor.kind!r}")
        if not texts:
            raise ValueError("texts must be non-empty")
        fp = fingerprint_embed(self.descriptor, texts)
        if self.cache:
            hit = self.cache.get(fp)
            if hit is not None:
                self._audit("cache_hit", fp, "ok", 0)
                return hit["vectors"]
        vectors, attempts, started = self._run_with_retries(
            fp, lambda: self.transport.embed(self.descriptor, texts))
        if len(vectors) != len(texts):
            err = SchemaViolationError(f"{len(vectors)} vectors for {len(texts)} texts")
            self._audit("request", fp, "error", attempts, error=str(err), ts=started)
            raise err
        normalized = []
        for i, v in enumerate(vectors):
            norm = math.sqrt(sum(x * x for x in v))
            if norm == 0 or not math.isfinite(norm):
                err = SchemaViolationError(f"vector {i} has norm {norm}")
                self._audit("request", fp, "error", attempts, error=str(err), ts=started)
                raise err
            normalized.append([x / norm for x in v])
        if self.cache:
            self.cache.put(fp, {"vectors": normalized})
        self._audit("request", fp, "ok", attempts, ts=started)
        return normalized
