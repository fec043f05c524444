"""Chat-completion client, scripted mock model, and reply post-processing.

The HTTP client speaks the common chat-completions JSON protocol:
POST <endpoint_url>/chat/completions with {model, messages, temperature,
max_tokens}, reading back choices[0].message.content. Transport failures
(connection errors, timeouts, 429/5xx) are retried with backoff up to a
budget; anything surviving the budget surfaces as TransportError, which
the pipeline records as a model-error attempt.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .prompts import Conversation

log = logging.getLogger(__name__)

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}
_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)\n?```", re.DOTALL)


class LlmError(RuntimeError):
    pass


class TransportError(LlmError):
    """Endpoint unreachable or persistently failing; attempt is a model-error."""


class MockScriptError(LlmError):
    """The mock fixture lacks a reply for the requested key (a fixture bug)."""


@dataclass(frozen=True)
class ModelConfig:
    model_name: str
    endpoint_url: str = ""
    temperature: float = 0.2
    max_tokens: int = 2048
    request_timeout_s: float = 120.0
    max_retries_on_transport_error: int = 2
    retry_backoff_s: float = 0.5
    max_concurrency: int = 4
    auth_env: str | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.request_timeout_s <= 0:
            raise ValueError("request_timeout_s must be > 0")


@dataclass(frozen=True)
class ModelReply:
    raw_text: str
    latency_ms: float = 0.0
    token_usage: dict | None = None
    truncated: bool = False


class HttpChatClient:
    """Shareable across workers; bounds in-flight requests per endpoint."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.model_name = config.model_name
        self._session = requests.Session()
        self._slots = threading.Semaphore(max(1, config.max_concurrency))

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env:
            token = os.environ.get(self.config.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, conv: Conversation, sample_id: str = "", attempt_index: int = 1) -> ModelReply:
        del sample_id, attempt_index  # keys only matter to the scripted mock
        cfg = self.config
        body = {
            "model": cfg.model_name,
            "messages": conv.messages(),
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        }
        url = cfg.endpoint_url.rstrip("/") + "/chat/completions"
        last_error: Exception | None = None
        with self._slots:
            for attempt in range(cfg.max_retries_on_transport_error + 1):
                if attempt:
                    time.sleep(cfg.retry_backoff_s * (2 ** (attempt - 1)))
                started = time.monotonic()
                try:
                    response = self._session.post(
                        url, json=body, headers=self._headers(), timeout=cfg.request_timeout_s
                    )
                except requests.RequestException as exc:
                    last_error = exc
                    log.warning("model %s: transport error (%s), attempt %d", cfg.model_name, exc, attempt + 1)
                    continue
                if response.status_code in _RETRYABLE_STATUS:
                    last_error = TransportError(f"HTTP {response.status_code} from {url}")
                    log.warning("model %s: HTTP %d, attempt %d", cfg.model_name, response.status_code, attempt + 1)
                    continue
                if response.status_code != 200:
                    raise TransportError(f"HTTP {response.status_code} from {url}: {response.text[:200]}")
                latency_ms = (time.monotonic() - started) * 1000.0
                return _parse_chat_response(response.text, latency_ms)
        raise TransportError(f"model {cfg.model_name}: retries exhausted ({last_error})")


def _parse_chat_response(text: str, latency_ms: float) -> ModelReply:
    try:
        payload = json.loads(text)
        choice = payload["choices"][0]
        content = choice["message"]["content"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed chat-completions response: {exc}") from exc
    return ModelReply(
        raw_text=content,
        latency_ms=latency_ms,
        token_usage=payload.get("usage"),
        truncated=choice.get("finish_reason") == "length",
    )


def chat_complete(conv: Conversation, cfg: ModelConfig) -> ModelReply:
    """One-off completion; see :class:`HttpChatClient` for pooled use."""
    return HttpChatClient(cfg).complete(conv)


class MockChatClient:
    """Scripted responder keyed by (sample_id, attempt_index).

    Fixture rows are JSON objects: {"sample_id": ..., "attempt": ...,
    "reply": ...}. ``attempt`` may be null to provide a fallback for any
    attempt. A row carrying "error": "transport" raises TransportError,
    and "truncated": true marks the reply as cut off.
    """

    def __init__(self, script: dict[tuple[str, int | None], dict], model_name: str = "mock"):
        self.model_name = model_name
        self._script = script

    @classmethod
    def from_jsonl(cls, path: str | Path, model_name: str = "mock") -> "MockChatClient":
        script: dict[tuple[str, int | None], dict] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                script[(row["sample_id"], row.get("attempt"))] = row
        return cls(script, model_name)

    def complete(self, conv: Conversation, sample_id: str = "", attempt_index: int = 1) -> ModelReply:
        del conv
        row = self._script.get((sample_id, attempt_index)) or self._script.get((sample_id, None))
        if row is None:
            raise MockScriptError(f"no scripted reply for ({sample_id!r}, attempt {attempt_index})")
        if row.get("error") == "transport":
            raise TransportError(f"scripted transport failure for {sample_id}")
        return ModelReply(raw_text=row["reply"], truncated=bool(row.get("truncated", False)))


def _strip_blank_edges(text: str) -> str:
    lines = text.split("\n")
    while lines and not lines[0].strip():
        lines.pop(0)
    while lines and not lines[-1].strip():
        lines.pop()
    return "\n".join(lines)


def extract_code(reply_text: str) -> str:
    """Candidate source from a model reply.

    The first complete fenced code block wins; with no complete block but
    an opening fence (a truncated reply), everything after the fence line
    is taken; otherwise the whole reply is the candidate. Leading and
    trailing blank lines are stripped.
    """
    match = _FENCE_RE.search(reply_text)
    if match:
        return _strip_blank_edges(match.group(1))
    fence_at = reply_text.find("```")
    if fence_at != -1:
        after = reply_text[fence_at:].split("\n", 1)
        if len(after) == 2:
            return _strip_blank_edges(after[1])
    return _strip_blank_edges(reply_text)
