"""Minimal chat-completions client for OpenAI-compatible endpoints."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

logger = logging.getLogger(__name__)

API_KEY_ENV = "ACOF_API_KEY"
ROLES = ("system", "user", "assistant")
RETRY_STATUS = frozenset({429, 500, 502, 503, 504})


class ConfigurationError(RuntimeError):
    pass


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple
    temperature: float = 0.2
    max_tokens: int = 2048

    def __post_init__(self):
        msgs = tuple({"role": m["role"], "content": m["content"]} for m in self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs:
            raise ValueError("request needs at least one message")
        if msgs[0]["role"] != "system":
            raise ValueError("first message must be the system message")
        if any(m["role"] not in ROLES for m in msgs):
            raise ValueError(f"message roles must be one of {ROLES}")
        if not 0 <= self.temperature <= 2:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")

    def body(self) -> dict:
        return {
            "model": self.model,
            "messages": list(self.messages),
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.body(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TranscriptEntry:
    request_digest: str
    response: str
    latency: float
    outcome: str  # ok | http_error | timeout | parse_retry

    def to_dict(self) -> dict:
        return {
            "request_digest": self.request_digest,
            "response": self.response,
            "latency": self.latency,
            "outcome": self.outcome,
        }


class Transcript:
    """Append-only record of every exchange with the endpoint."""

    def __init__(self):
        self._entries: list[TranscriptEntry] = []

    def append(self, entry: TranscriptEntry):
        self._entries.append(entry)

    @property
    def entries(self) -> tuple[TranscriptEntry, ...]:
        return tuple(self._entries)

    def __len__(self):
        return len(self._entries)


class HttpxTransport:
    def send(self, url: str, headers: dict, body: dict, timeout: float) -> tuple[int, str]:
        import httpx

        try:
            resp = httpx.post(url, headers=headers, json=body, timeout=timeout)
        except httpx.TimeoutException as exc:
            raise TimeoutError(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise ConnectionError(str(exc)) from exc
        return resp.status_code, resp.text


def completion_body(content: str) -> str:
    return json.dumps({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})


class ScriptedTransport:
    """Replays a fixed script: str -> 200 with that content, int -> bare status,
    an exception instance (e.g. ``TimeoutError()``) -> raised."""

    def __init__(self, script: Sequence):
        self.script = list(script)
        self.requests: list[tuple[str, dict, dict]] = []

    def send(self, url, headers, body, timeout):
        self.requests.append((url, dict(headers), body))
        if not self.script:
            raise ConnectionError("scripted transport exhausted")
        item = self.script.pop(0)
        if isinstance(item, BaseException):
            raise item
        if isinstance(item, int):
            return item, json.dumps({"error": {"code": item}})
        return 200, completion_body(item)


class LLMClient:
    def __init__(self, base_url: str, model: str, api_key: str, transport=None, temperature: float = 0.2,
                 max_tokens: int = 2048, timeout: float = 60.0, max_attempts: int = 3,
                 backoff_base: float = 1.0, backoff_factor: float = 2.0,
                 sleep: Callable[[float], None] = time.sleep):
        if not api_key:
            raise ConfigurationError(f"missing API key (set {API_KEY_ENV})")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._api_key = api_key
        self.transport = transport or HttpxTransport()
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self.sleep = sleep
        self.transcript = Transcript()

    @classmethod
    def from_env(cls, base_url: str, model: str, **kwargs) -> "LLMClient":
        key = os.environ.get(API_KEY_ENV, "").strip()
        if not key:
            raise ConfigurationError(f"{API_KEY_ENV} is not set")
        return cls(base_url, model, key, **kwargs)

    def __repr__(self):
        return f"LLMClient(base_url={self.base_url!r}, model={self.model!r})"

    def request(self, messages) -> ChatRequest:
        return ChatRequest(self.model, tuple(messages), self.temperature, self.max_tokens)

    def complete(self, request: ChatRequest) -> str:
        url = f"{self.base_url}/chat/completions"
        headers = {"Authorization": f"Bearer {self._api_key}", "Content-Type": "application/json"}
        body = request.body()
        digest = request.digest()
        logger.debug("chat request %s: %s", digest, json.dumps(body))
        last_error = "no attempt made"
        for attempt in range(self.max_attempts):
            if attempt:
                self.sleep(self.backoff_base * self.backoff_factor ** (attempt - 1))
            t0 = time.monotonic()
            try:
                status, text = self.transport.send(url, headers, body, self.timeout)
            except TimeoutError as exc:
                self._record(digest, "", t0, "timeout")
                last_error = f"timeout: {exc}"
                continue
            except ConnectionError as exc:
                self._record(digest, "", t0, "http_error")
                last_error = f"connection error: {exc}"
                continue
            if status != 200:
                self._record(digest, text, t0, "http_error")
                last_error = f"HTTP {status}"
                if status in RETRY_STATUS:
                    continue
                raise TransportError(last_error)
            try:
                content = json.loads(text)["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                self._record(digest, text, t0, "http_error")
                raise TransportError(f"malformed completion body: {exc}") from exc
            self._record(digest, content, t0, "ok")
            logger.debug("chat response %s: %s", digest, content)
            return content if isinstance(content, str) else json.dumps(content)
        raise TransportError(f"giving up after {self.max_attempts} attempts ({last_error})")

    def _record(self, digest, text, t0, outcome):
        self.transcript.append(TranscriptEntry(digest, text, round(time.monotonic() - t0, 6), outcome))
