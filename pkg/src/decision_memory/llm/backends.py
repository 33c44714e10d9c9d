"""LLM backends: a deterministic scripted one and an OpenAI-compatible HTTP one."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol, TypeVar

import httpx

from ..errors import EmptyResponse, FormatViolation, NoFixtureMatch, RateLimited, TransportError
from .prompts import LlmRequest, PromptKind

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class LlmResponse:
    raw: str
    backend_id: str
    latency: float  # seconds


class Backend(Protocol):
    backend_id: str

    def complete(self, request: LlmRequest) -> LlmResponse: ...


def complete(backend: Backend, request: LlmRequest) -> LlmResponse:
    response = backend.complete(request)
    if not response.raw or not response.raw.strip():
        raise EmptyResponse(f"{backend.backend_id} returned an empty {request.kind.value} response")
    return response


def ask(backend: Backend, request: LlmRequest, parse: Callable[[str], T]) -> T:
    """Complete and parse; on a format violation retry once with a stricter suffix."""
    try:
        return parse(complete(backend, request).raw)
    except FormatViolation as first:
        logger.debug("%s format violation (%s); retrying once", request.kind.value, first)
        return parse(complete(backend, request.with_retry_suffix()).raw)


# --- scripted backend -----------------------------------------------------


class Fallback(str, Enum):
    ERROR = "Error"
    RULE_BASED = "RuleBased"


@dataclass(frozen=True)
class FixtureEntry:
    kind: PromptKind
    pattern: str
    response: str


class ScriptedBackend:
    """Fixture lookup by (kind, substring of payload); first match wins.

    Immutable after construction, so one instance can be shared across threads.
    """

    backend_id = "scripted"

    def __init__(self, entries: Iterable[FixtureEntry] = (), fallback: Fallback = Fallback.ERROR) -> None:
        self._entries = tuple(entries)
        self._fallback = Fallback(fallback)

    @property
    def entries(self) -> tuple[FixtureEntry, ...]:
        return self._entries

    @property
    def fallback(self) -> Fallback:
        return self._fallback

    @classmethod
    def from_records(cls, records: Iterable[dict], fallback: Fallback = Fallback.ERROR) -> "ScriptedBackend":
        entries = [FixtureEntry(PromptKind(r["kind"]), r.get("pattern", ""), r["response"]) for r in records]
        return cls(entries, fallback)

    @classmethod
    def from_file(cls, path: str | Path, fallback: Fallback = Fallback.ERROR) -> "ScriptedBackend":
        records = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(records, list):
            raise ValueError(f"{path}: fixture file must hold a JSON array")
        return cls.from_records(records, fallback)

    def with_entries(self, entries: Iterable[FixtureEntry], prepend: bool = True) -> "ScriptedBackend":
        extra = tuple(entries)
        merged = extra + self._entries if prepend else self._entries + extra
        return ScriptedBackend(merged, self._fallback)

    def lookup(self, request: LlmRequest) -> str | None:
        for entry in self._entries:
            if entry.kind == request.kind and entry.pattern in request.payload:
                return entry.response
        return None

    def complete(self, request: LlmRequest) -> LlmResponse:
        start = time.perf_counter()
        raw = self.lookup(request)
        if raw is None:
            if self._fallback is Fallback.ERROR:
                raise NoFixtureMatch(f"no fixture for {request.kind.value}")
            from .rulebased import respond

            raw = respond(request.kind, request.payload)
        return LlmResponse(raw, self.backend_id, time.perf_counter() - start)


# --- HTTP backend ---------------------------------------------------------


@dataclass(frozen=True)
class HttpBackendConfig:
    endpoint_url: str
    model_name: str = "gpt-3.5-turbo"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    max_inflight: int = 4
    retry_limit: int = 3
    timeout: float = 60.0
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be positive")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be nonnegative")


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class HttpBackend:
    """Chat-completions client with bounded concurrency and exponential backoff."""

    def __init__(
        self,
        config: HttpBackendConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config
        self.backend_id = f"http:{config.model_name}"
        self._gate = threading.BoundedSemaphore(config.max_inflight)
        self._sleep = sleep
        self._client = httpx.Client(timeout=config.timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "").strip()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _body(self, request: LlmRequest) -> dict:
        return {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": request.text}],
            "temperature": self.config.temperature,
            "max_tokens": request.budget,
        }

    def complete(self, request: LlmRequest) -> LlmResponse:
        body = self._body(request)
        last_error: Exception | None = None
        with self._gate:
            start = time.perf_counter()
            for attempt in range(self.config.retry_limit + 1):
                if attempt:
                    self._sleep(self.config.backoff_base * 2 ** (attempt - 1))
                try:
                    resp = self._client.post(self.config.endpoint_url, headers=self._headers(), json=body)
                except httpx.HTTPError as exc:
                    last_error = TransportError(f"request failed: {exc}")
                    continue
                if resp.status_code == 429:
                    last_error = RateLimited(f"rate limited by {self.config.endpoint_url}")
                    continue
                if resp.status_code in _RETRYABLE_STATUS:
                    last_error = TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                    continue
                if resp.status_code // 100 != 2:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                raw = _extract_text(resp)
                return LlmResponse(raw, self.backend_id, time.perf_counter() - start)
        assert last_error is not None
        raise last_error


def _extract_text(resp: httpx.Response) -> str:
    try:
        data = resp.json()
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed chat-completions body: {exc}") from exc
    if not isinstance(content, str) or not content.strip():
        raise EmptyResponse("chat-completions response had no content")
    return content
