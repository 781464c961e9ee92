"""Minimal OpenAI-compatible chat-completion client with an offline mock transport."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol

import httpx

from .errors import LLMConfigError, LLMHTTPError, LLMTimeout, LLMTransportError

log = logging.getLogger(__name__)

ENV_BASE_URL = "CLOTHSKILL_LLM_BASE_URL"
ENV_API_KEY = "CLOTHSKILL_LLM_API_KEY"
ENV_MODEL = "CLOTHSKILL_LLM_MODEL"


@dataclass
class PromptConfig:
    system: str
    exemplars: list[tuple[str, str]] = field(default_factory=list)
    temperature: float = 0.0
    max_tokens: int = 512
    retries: int = 2
    answer_marker: str = "ANSWER:"

    def __post_init__(self):
        if self.retries < 0:
            raise ValueError("retry count must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def default(cls) -> "PromptConfig":
        """Few-shot chain-of-thought prompt shipped with the package."""
        base = resources.files("clothskill") / "data" / "prompts"
        system = (base / "system.txt").read_text()
        exemplars = json.loads((base / "exemplars.json").read_text())
        return cls(system=system, exemplars=[(e["user"], e["assistant"]) for e in exemplars])

    @classmethod
    def load(cls, path: str | Path) -> "PromptConfig":
        d = json.loads(Path(path).read_text())
        d["exemplars"] = [tuple(e) if isinstance(e, list) else (e["user"], e["assistant"])
                          for e in d.get("exemplars", [])]
        return cls(**d)


@dataclass
class ChatTranscript:
    messages: list[dict]
    response: str
    latency: float
    model: str

    def check_roles(self) -> None:
        roles = [m["role"] for m in self.messages]
        body = roles[1:] if roles and roles[0] == "system" else roles
        for i, role in enumerate(body):
            want = "user" if i % 2 == 0 else "assistant"
            if role != want:
                raise ValueError(f"message {i} has role {role!r}, expected {want!r}")
        if not body or body[-1] != "user":
            raise ValueError("conversation must end with a user message")


class Transport(Protocol):
    model: str

    def send(self, payload: dict) -> str: ...


def payload_key(messages: list[dict]) -> str:
    """Hash of the user-side payload, used to key mock responses."""
    user = [m["content"] for m in messages if m["role"] == "user"]
    return hashlib.sha256(json.dumps(user).encode()).hexdigest()[:16]


class MockTransport:
    """Scripted transport. Responses come from ``responses`` keyed by
    ``payload_key``; otherwise from ``script`` in call order."""

    def __init__(self, responses: dict[str, str] | None = None, script: list[str] | None = None,
                 model: str = "mock"):
        self.responses = dict(responses or {})
        self.script = list(script or [])
        self.model = model
        self.calls: list[dict] = []

    def send(self, payload: dict) -> str:
        self.calls.append(payload)
        key = payload_key(payload["messages"])
        if key in self.responses:
            return self.responses[key]
        if self.script:
            return self.script.pop(0)
        raise LLMTransportError(f"mock transport has no response for payload {key}")


class LiveTransport:
    def __init__(self, base_url: str | None, api_key: str | None, model: str = "gpt-4o",
                 timeout: float = 60.0, client: httpx.Client | None = None):
        if not base_url:
            raise LLMConfigError(f"no chat endpoint configured (set {ENV_BASE_URL})")
        if not api_key:
            raise LLMConfigError(f"no API key configured (set {ENV_API_KEY})")
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self._client = client

    @classmethod
    def from_env(cls, timeout: float = 60.0) -> "LiveTransport":
        return cls(os.environ.get(ENV_BASE_URL), os.environ.get(ENV_API_KEY),
                   os.environ.get(ENV_MODEL, "gpt-4o"), timeout)

    def send(self, payload: dict) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}"}
        client = self._client or httpx.Client()
        try:
            resp = client.post(self.url, json=payload, headers=headers, timeout=self.timeout)
        except httpx.TimeoutException as exc:
            raise LLMTimeout(f"chat endpoint timed out after {self.timeout} s") from exc
        except httpx.HTTPError as exc:
            raise LLMTransportError(f"chat request failed: {exc}") from exc
        finally:
            if self._client is None:
                client.close()
        if not 200 <= resp.status_code < 300:
            raise LLMHTTPError(resp.status_code, resp.text)
        try:
            choices = resp.json().get("choices") or []
        except ValueError as exc:
            raise LLMTransportError("chat endpoint returned non-JSON body") from exc
        if not choices:
            return ""
        return str((choices[0].get("message") or {}).get("content") or "")


class ChatClient:
    def __init__(self, transport: Transport, transcript_log: str | Path | None = None):
        self.transport = transport
        self.transcript_log = Path(transcript_log) if transcript_log else None
        self._lock = threading.Lock()

    @property
    def deterministic(self) -> bool:
        return isinstance(self.transport, MockTransport)

    def complete(self, messages: list[dict], config: PromptConfig) -> str:
        payload = {
            "model": self.transport.model,
            "messages": messages,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        }
        t0 = time.perf_counter()
        text = self.transport.send(payload)
        transcript = ChatTranscript(list(messages), text, time.perf_counter() - t0, self.transport.model)
        self._record(transcript)
        return text

    def _record(self, transcript: ChatTranscript) -> None:
        if self.transcript_log is None:
            return
        line = json.dumps(asdict(transcript), sort_keys=True)
        with self._lock:
            self.transcript_log.parent.mkdir(parents=True, exist_ok=True)
            with open(self.transcript_log, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def read_transcripts(path: str | Path) -> list[ChatTranscript]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(ChatTranscript(**json.loads(line)))
    return out


def build_messages(user: str, config: PromptConfig) -> list[dict]:
    msgs = [{"role": "system", "content": config.system}]
    for u, a in config.exemplars:
        msgs.append({"role": "user", "content": u})
        msgs.append({"role": "assistant", "content": a})
    msgs.append({"role": "user", "content": user})
    return msgs


_BULLET = re.compile(r"^\s*(?:\d+\s*[.):]|[-*•]|step\s+\d+\s*[:.)-])\s*", re.IGNORECASE)


def extract_answer(response: str, config: PromptConfig) -> list[str]:
    """Lines of the final answer: text after the last marker, bullets and numbering removed."""
    if not response or not response.strip():
        return []
    idx = response.lower().rfind(config.answer_marker.lower())
    if idx < 0:
        log.warning("answer marker %r not found; using the whole response", config.answer_marker)
        body = response
    else:
        body = response[idx + len(config.answer_marker):]
    lines = []
    for raw in body.splitlines():
        s = raw.strip()
        if not s or s.startswith("```"):
            continue
        s = _BULLET.sub("", s).strip().strip('"').strip()
        if s:
            lines.append(s)
    return lines
