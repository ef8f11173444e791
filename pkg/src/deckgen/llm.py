"""Pluggable chat-completion backends.

Two implementations share one contract: a scripted deterministic mock for
offline runs and tests, and an HTTP backend speaking a messages-array wire
format with text and image parts. Requests are never mutated; backends are
safe to share across concurrent pipeline tasks.
"""
from __future__ import annotations

import base64
import json
import os
import threading
import time
from dataclasses import dataclass
from hashlib import sha256
from pathlib import Path

import requests

DEFAULT_MAX_TOKENS = 4096
DEFAULT_TEMPERATURE = 0.0


class BackendError(Exception):
    kind = "backend"


class TransportError(BackendError):
    kind = "transport"


class AuthenticationError(BackendError):
    kind = "auth"


class EmptyResponseError(BackendError):
    kind = "empty_response"


class BackendTimeoutError(BackendError):
    kind = "timeout"


class UnscriptedPromptError(BackendError):
    kind = "unscripted_prompt"


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    """Image by file reference; ``data`` short-circuits the disk read."""

    path: str
    data: bytes | None = None


@dataclass(frozen=True)
class ChatRequest:
    system: str
    parts: tuple = ()
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = DEFAULT_TEMPERATURE

    def text_content(self) -> str:
        """All text parts joined; image bytes never participate in matching."""
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: dict | None = None


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"
    endpoint: str = ""
    model: str = ""
    api_key_env: str = ""
    timeout: float = 60.0
    retries: int = 2
    retry_backoff: float = 0.5
    script_path: str = ""

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and (not self.endpoint or not self.model):
            raise ValueError("http backend requires endpoint and model")


def prompt_hash(text: str) -> str:
    return sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ScriptEntry:
    """Matcher plus canned reply; ``match`` is a substring unless ``is_hash``."""

    match: str
    reply: str
    is_hash: bool = False

    def matches(self, text: str) -> bool:
        if self.is_hash:
            return prompt_hash(text) == self.match
        return self.match in text


class MockBackend:
    """Scripted backend: first matching entry wins, unscripted prompts error.

    Every served call lands in a replay log (request text, system, reply) so
    a run can be re-scripted exactly from its own trace.
    """

    def __init__(self, entries: list[ScriptEntry]):
        self._entries = list(entries)
        self._log: list[dict] = []
        self._lock = threading.Lock()

    def complete(self, req: ChatRequest) -> ChatResponse:
        text = req.text_content()
        for entry in self._entries:
            if entry.matches(text):
                with self._lock:
                    self._log.append(
                        {"system": req.system, "request_text": text, "reply": entry.reply}
                    )
                return ChatResponse(text=entry.reply)
        raise UnscriptedPromptError(
            f"no script entry matches prompt (hash {prompt_hash(text)[:12]}...)"
        )

    def replay_log(self) -> list[dict]:
        with self._lock:
            return [dict(item) for item in self._log]

    def call_count(self) -> int:
        with self._lock:
            return len(self._log)

    @classmethod
    def from_replay_log(cls, log: list[dict]) -> "MockBackend":
        entries = [
            ScriptEntry(match=prompt_hash(item["request_text"]), reply=item["reply"], is_hash=True)
            for item in log
        ]
        return cls(entries)


def script_mock(entries: list[tuple[str, str]] | list[ScriptEntry]) -> MockBackend:
    """Build a mock backend from (matcher, reply) pairs or ScriptEntry objects."""
    normalized = [
        e if isinstance(e, ScriptEntry) else ScriptEntry(match=e[0], reply=e[1])
        for e in entries
    ]
    return MockBackend(normalized)


def load_script(path: str | Path) -> MockBackend:
    """Load script entries from a JSON file: [{match, reply, is_hash?}, ...]."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return MockBackend(
        [
            ScriptEntry(
                match=item["match"],
                reply=item["reply"],
                is_hash=bool(item.get("is_hash", False)),
            )
            for item in raw
        ]
    )


class HttpBackend:
    """Chat-completion over HTTP with bounded retries on transient failures."""

    def __init__(self, cfg: BackendConfig):
        self.cfg = cfg

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env:
            key = os.environ.get(self.cfg.api_key_env)
            if not key:
                raise AuthenticationError(
                    f"environment variable {self.cfg.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, req: ChatRequest) -> dict:
        content: list[dict] = []
        for part in req.parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            elif isinstance(part, ImagePart):
                raw = part.data if part.data is not None else Path(part.path).read_bytes()
                data = base64.b64encode(raw).decode("ascii")
                content.append(
                    {"type": "image", "media_type": "image/png", "data": data}
                )
            else:
                raise ValueError(f"unsupported request part {part!r}")
        return {
            "model": self.cfg.model,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": content},
            ],
        }

    @staticmethod
    def _extract_text(data: dict) -> str:
        if "text" in data:
            return data["text"]
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise EmptyResponseError("response carries no recognizable text field")

    def complete(self, req: ChatRequest) -> ChatResponse:
        headers = self._headers()
        payload = self._payload(req)
        last_error: BackendError | None = None
        for attempt in range(self.cfg.retries + 1):
            if attempt:
                time.sleep(self.cfg.retry_backoff * (2 ** (attempt - 1)))
            try:
                resp = requests.post(
                    self.cfg.endpoint,
                    json=payload,
                    headers=headers,
                    timeout=self.cfg.timeout,
                )
            except requests.Timeout as exc:
                last_error = BackendTimeoutError(str(exc))
                continue
            except requests.RequestException as exc:
                last_error = TransportError(str(exc))
                continue
            if resp.status_code in (401, 403):
                raise AuthenticationError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            if resp.status_code >= 500:
                last_error = TransportError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            data = resp.json()
            text = self._extract_text(data)
            if not text:
                raise EmptyResponseError("backend returned empty text")
            return ChatResponse(text=text, usage=data.get("usage"))
        raise last_error if last_error else TransportError("request never attempted")


def make_backend(cfg: BackendConfig):
    if cfg.kind == "http":
        return HttpBackend(cfg)
    if not cfg.script_path:
        raise ValueError("mock backend config requires script_path")
    return load_script(cfg.script_path)


def complete(req: ChatRequest, cfg: BackendConfig) -> ChatResponse:
    """One-shot completion against a config-described backend."""
    return make_backend(cfg).complete(req)
