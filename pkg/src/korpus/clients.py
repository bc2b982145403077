"""Chat-completion clients behind one small interface.

MockChatClient is a deterministic transcript player for tests and offline
runs; HTTPChatClient talks to an OpenAI-style chat completions endpoint
configured through the environment.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

from .chat_template import Turn
from .errors import ChatClientError, ValidationError


@dataclass
class GenerationParams:
    top_p: float = 0.95
    top_k: int = 50
    temperature: float = 0.9
    do_sample: bool = True
    num_beams: int = 1
    max_new_tokens: int = 512

    def __post_init__(self):
        if not 0 < self.top_p <= 1:
            raise ValidationError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.top_k < 0:
            raise ValidationError(f"top_k must be >= 0, got {self.top_k}")
        if self.do_sample and self.temperature <= 0:
            raise ValidationError("temperature must be > 0 when do_sample is set")
        if self.num_beams < 1:
            raise ValidationError(f"num_beams must be >= 1, got {self.num_beams}")
        if self.max_new_tokens < 1:
            raise ValidationError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")


class ChatClient(Protocol):
    def complete(self, turns: Sequence[Turn], params: GenerationParams,
                 seed: int | None = None) -> str: ...


def transcript_key(turns: Sequence[Turn]) -> str:
    """Stable hash of a transcript's (role, content) sequence."""
    payload = json.dumps([[t.role, t.content] for t in turns], ensure_ascii=False)
    return hashlib.blake2b(payload.encode("utf-8"), digest_size=16).hexdigest()


def _echo(turns: Sequence[Turn], params: GenerationParams, seed: int | None) -> str:
    for t in reversed(turns):
        if t.role != "system":
            return t.content
    return ""


class MockChatClient:
    """Deterministic canned-reply client.

    Reply lookup order: full-transcript hash (see transcript_key), then the
    last turn's exact content, then the fallback callable. The default
    fallback echoes the last non-system turn, which keeps plumbing tests
    hermetic without a script.
    """

    def __init__(self, script: Mapping[str, str] | None = None,
                 fallback: Callable[[Sequence[Turn], GenerationParams, int | None], str] | None = None):
        self.script = dict(script) if script else {}
        self.fallback = fallback or _echo
        self.calls: list[list[Turn]] = []

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def complete(self, turns: Sequence[Turn], params: GenerationParams,
                 seed: int | None = None) -> str:
        self.calls.append([Turn(t.role, t.content, t.content_ms, t.indon) for t in turns])
        key = transcript_key(turns)
        if key in self.script:
            return self.script[key]
        last = turns[-1].content if turns else ""
        if last in self.script:
            return self.script[last]
        return self.fallback(turns, params, seed)


_ROLE_MAP = {"system": "system", "user": "user", "assistant": "assistant", "context": "user"}


class HTTPChatClient:
    """OpenAI-style chat completions over HTTP.

    Endpoint, key and model come from KORPUS_CHAT_ENDPOINT,
    KORPUS_CHAT_API_KEY and KORPUS_CHAT_MODEL unless passed explicitly.
    Single-shot; retry policy belongs to the caller.
    """

    def __init__(self, endpoint: str | None = None, api_key: str | None = None,
                 model: str | None = None, timeout: float | None = None):
        self.endpoint = endpoint or os.environ.get("KORPUS_CHAT_ENDPOINT", "")
        self.api_key = api_key if api_key is not None else os.environ.get("KORPUS_CHAT_API_KEY", "")
        self.model = model or os.environ.get("KORPUS_CHAT_MODEL", "")
        if timeout is None:
            timeout = float(os.environ.get("KORPUS_CHAT_TIMEOUT", "120"))
        self.timeout = timeout
        if not self.endpoint:
            raise ValidationError("no chat endpoint configured (set KORPUS_CHAT_ENDPOINT)")

    def complete(self, turns: Sequence[Turn], params: GenerationParams,
                 seed: int | None = None) -> str:
        import requests

        body = {
            "messages": [{"role": _ROLE_MAP[t.role], "content": t.content} for t in turns],
            "temperature": params.temperature if params.do_sample else 0.0,
            "top_p": params.top_p,
            "max_tokens": params.max_new_tokens,
        }
        if self.model:
            body["model"] = self.model
        if seed is not None:
            body["seed"] = seed
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
        except requests.RequestException as e:
            raise ChatClientError(f"chat request failed: {e}") from e
        if resp.status_code != 200:
            raise ChatClientError(f"chat endpoint returned {resp.status_code}: {resp.text[:500]}")
        try:
            data = resp.json()
            return data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise ChatClientError(f"unexpected chat response shape: {e}") from e


def make_client(name: str, **kwargs) -> ChatClient:
    if name == "mock":
        return MockChatClient()
    if name == "http":
        return HTTPChatClient(**kwargs)
    raise ValidationError(f"unknown client {name!r}, expected 'mock' or 'http'")
