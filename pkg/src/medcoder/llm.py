"""Chat-completion provider abstraction.

One remote HTTP implementation with retry/backoff, a deterministic
replay mock keyed by a canonical request hash, a cache wrapper, and a
recording wrapper for regenerating replay fixtures.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol

import httpx

from .errors import FixtureMiss, MalformedResponse, ProviderUnavailable, RateLimited

LLM_API_KEY_ENV = "MEDCODER_LLM_API_KEY"

_VALID_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _VALID_ROLES:
            raise ValueError(f"invalid role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    model: str = "default"
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def __post_init__(self):
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("request must contain at least one user message")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0


def canonical_request_hash(request: ChatRequest) -> str:
    """SHA-256 over the canonical JSON of the messages.

    Stable under key reordering; sensitive to any content change. Model
    and decoding parameters are deliberately excluded so fixtures survive
    a model rename.
    """
    canonical = json.dumps(
        [{"content": m.content, "role": m.role} for m in request.messages],
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class LlmProvider(Protocol):
    provider_id: str

    def complete(self, request: ChatRequest) -> ChatResponse: ...


def complete(request: ChatRequest, provider: LlmProvider) -> ChatResponse:
    return provider.complete(request)


class MockLlmProvider:
    """Replays responses from a fixture map keyed by request hash.

    Fixture file format: JSON object mapping hash -> {"response": text,
    "note": optional string}; a bare string value is also accepted.
    """

    provider_id = "mock"

    def __init__(self, fixtures: dict[str, object]):
        self._responses: dict[str, str] = {}
        for key, value in fixtures.items():
            if isinstance(value, str):
                self._responses[key] = value
            else:
                self._responses[key] = value["response"]
        self.calls = 0

    @classmethod
    def from_file(cls, path: str) -> "MockLlmProvider":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        request_hash = canonical_request_hash(request)
        if request_hash not in self._responses:
            raise FixtureMiss(request_hash)
        return ChatResponse(text=self._responses[request_hash])


class HttpLlmProvider:
    """POSTs to {base_url}/chat/completions, OpenAI-style body/response.

    Timeouts and 429s are retried with exponential backoff up to
    max_attempts, then surfaced.
    """

    provider_id = "http"

    def __init__(
        self,
        base_url: str,
        model: str,
        timeout_secs: float = 60.0,
        max_attempts: int = 5,
        backoff_base_secs: float = 0.5,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout_secs = timeout_secs
        self.max_attempts = max_attempts
        self.backoff_base_secs = backoff_base_secs

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {}
        api_key = os.environ.get(LLM_API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                response = httpx.post(
                    f"{self.base_url}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=self.timeout_secs,
                )
                if response.status_code == 429:
                    raise RateLimited(response.text)
                response.raise_for_status()
                return _parse_chat_response(response.json())
            except (httpx.TimeoutException, RateLimited) as exc:
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    time.sleep(self.backoff_base_secs * (2.0**attempt))
            except httpx.HTTPError as exc:
                raise ProviderUnavailable(str(exc)) from exc
        raise ProviderUnavailable(
            f"provider failed after {self.max_attempts} attempts: {last_error}"
        ) from last_error


def _parse_chat_response(payload: object) -> ChatResponse:
    try:
        choice = payload["choices"][0]
        text = choice["message"]["content"]
        finish_reason = choice.get("finish_reason", "stop")
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected chat payload: {exc}") from exc
    if text is None:
        text = ""
    if text == "" and finish_reason not in ("length", "content_filter"):
        raise MalformedResponse("empty text with finish_reason " + str(finish_reason))
    usage = payload.get("usage") or {}
    return ChatResponse(
        text=text,
        finish_reason=finish_reason,
        prompt_tokens=int(usage.get("prompt_tokens", 0)),
        completion_tokens=int(usage.get("completion_tokens", 0)),
    )


class CachingProvider:
    """In-memory cache keyed by (provider id, model, request hash)."""

    def __init__(self, inner: LlmProvider):
        self.inner = inner
        self.provider_id = f"cached:{inner.provider_id}"
        self._cache: dict[tuple[str, str, str], ChatResponse] = {}
        self._lock = threading.Lock()
        self.provider_calls = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = (self.inner.provider_id, request.model, canonical_request_hash(request))
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        response = self.inner.complete(request)
        with self._lock:
            self._cache[key] = response
            self.provider_calls += 1
        return response


class RecordingProvider:
    """Wraps a live provider and appends replay fixtures to a JSON file."""

    def __init__(self, inner: LlmProvider, fixture_path: str, note: str = ""):
        self.inner = inner
        self.provider_id = f"recording:{inner.provider_id}"
        self.fixture_path = fixture_path
        self.note = note
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.complete(request)
        request_hash = canonical_request_hash(request)
        with self._lock:
            fixtures = {}
            if os.path.exists(self.fixture_path):
                with open(self.fixture_path, encoding="utf-8") as fh:
                    fixtures = json.load(fh)
            entry: dict[str, str] = {"response": response.text}
            if self.note:
                entry["note"] = self.note
            fixtures[request_hash] = entry
            with open(self.fixture_path, "w", encoding="utf-8") as fh:
                json.dump(fixtures, fh, indent=2, ensure_ascii=False)
        return response
