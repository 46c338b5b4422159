"""Chat-completion backends: an HTTP client and a scripted replay backend."""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import requests

API_KEY_ENV = "FLOWFORGE_API_KEY"
ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role != "assistant" and not self.content:
            raise ValueError(f"{self.role} message must not be empty")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(self.prompt_tokens + other.prompt_tokens, self.output_tokens + other.output_tokens)

    def to_dict(self) -> dict:
        return {"prompt_tokens": self.prompt_tokens, "output_tokens": self.output_tokens}


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 0.5


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    model: str = "default"
    temperature: float = 0.0
    max_tokens: int = 2048
    timeout: float = 60.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    json_constraint: bool = False


class LlmError(Exception):
    pass


class TransportError(LlmError):
    pass


class BackendTimeout(TransportError):
    pass


class TranscriptExhausted(TransportError):
    def __init__(self):
        super().__init__("transcript exhausted")


class ProviderError(LlmError):
    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body[:200]


def word_count(text: str) -> int:
    return len(text.split())


def _check(messages: Sequence[ChatMessage]) -> None:
    if not messages:
        raise ValueError("messages must not be empty")
    if messages[0].role != "system":
        raise ValueError("first message must be a system message")


class Backend(Protocol):
    def complete(self, messages: Sequence[ChatMessage]) -> tuple[str, Usage]: ...


class ScriptedBackend:
    """Replays a fixed list of replies, one per call."""

    def __init__(self, transcript: Sequence[str]):
        self._queue = list(transcript)
        self._lock = threading.Lock()
        self.calls: list[list[ChatMessage]] = []

    @property
    def remaining(self) -> int:
        return len(self._queue)

    def complete(self, messages: Sequence[ChatMessage]) -> tuple[str, Usage]:
        _check(messages)
        with self._lock:
            if not self._queue:
                raise TranscriptExhausted()
            text = self._queue.pop(0)
            self.calls.append(list(messages))
        prompt = sum(word_count(m.content) for m in messages)
        return text, Usage(prompt, word_count(text))


def scripted(transcript: Sequence[str]) -> ScriptedBackend:
    return ScriptedBackend(transcript)


class HttpBackend:
    """Client for the common chat-completions wire shape."""

    def __init__(self, config: BackendConfig, session: requests.Session | None = None,
                 api_key: str | None = None, sleep=time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self._sleep = sleep

    def request_body(self, messages: Sequence[ChatMessage]) -> dict:
        cfg = self.config
        body = {
            "model": cfg.model,
            "messages": [m.to_dict() for m in messages],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        }
        if cfg.json_constraint:
            body["response_format"] = {"type": "json_object"}
        return body

    def complete(self, messages: Sequence[ChatMessage]) -> tuple[str, Usage]:
        _check(messages)
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = self.request_body(messages)
        last: Exception | None = None
        for attempt in range(cfg.retry.max_attempts):
            if attempt:
                self._sleep(cfg.retry.backoff_base * 2 ** (attempt - 1))
            try:
                resp = self.session.post(cfg.endpoint, json=body, headers=headers, timeout=cfg.timeout)
            except requests.Timeout as exc:
                last = BackendTimeout(f"request timed out: {exc}")
                continue
            except requests.RequestException as exc:
                last = TransportError(f"transport failure: {exc}")
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = ProviderError(resp.status_code, resp.text)
                continue
            if resp.status_code >= 400:
                raise ProviderError(resp.status_code, resp.text)
            return self._decode(resp, messages)
        if isinstance(last, ProviderError):
            raise TransportError(f"gave up after {cfg.retry.max_attempts} attempts: {last}") from last
        raise last if last else TransportError("no attempts made")

    @staticmethod
    def _decode(resp: requests.Response, messages: Sequence[ChatMessage]) -> tuple[str, Usage]:
        try:
            doc = resp.json()
            text = doc["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(resp.status_code, resp.text) from exc
        usage = doc.get("usage") or {}
        prompt = usage.get("prompt_tokens")
        output = usage.get("completion_tokens", usage.get("output_tokens"))
        if prompt is None:
            prompt = sum(word_count(m.content) for m in messages)
        if output is None:
            output = word_count(text)
        return text, Usage(int(prompt), int(output))


class Conversation:
    """One chat session: the message list plus usage of every call made."""

    def __init__(self, backend: Backend, system: str):
        self.backend = backend
        self.messages: list[ChatMessage] = [ChatMessage("system", system)]
        self.usage = Usage()
        self.calls = 0

    def add_user(self, content: str) -> None:
        self.messages.append(ChatMessage("user", content))

    def ask(self) -> tuple[str, Usage]:
        text, usage = self.backend.complete(self.messages)
        self.messages.append(ChatMessage("assistant", text))
        self.usage = self.usage + usage
        self.calls += 1
        return text, usage
