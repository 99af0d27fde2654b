"""Generation backends: a replayable scripted gateway and an HTTP chat-completions adapter."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol

import httpx

from .corpus import Document
from .errors import GatewayConfigError, GatewayFailure, IoFailure, MalformedRecord

logger = logging.getLogger(__name__)

GENERATION_ROLES = ("dual_thought", "single_thought", "reasoning_chain", "verifier", "answer")

ScriptKey = tuple[str, str, "int | None"]


@dataclass(frozen=True)
class GenerationRequest:
    role: str
    rendered_prompt: str
    context_docs: tuple[Document, ...] = ()
    # routing metadata for scripted replay; the HTTP adapter ignores it
    sample_id: str | None = None
    round: int | None = None


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    usage: dict | None = None


class Gateway(Protocol):
    live: bool

    def generate(self, request: GenerationRequest) -> GenerationResponse: ...


class ScriptedGateway:
    """Replays responses keyed by ``(sample_id, role, round)``.

    A script entry whose round is ``None`` matches any round for that sample
    and role; an exact round match always wins.  ``latency`` (seconds) is slept
    on every call to imitate a remote model.
    """

    live = False

    def __init__(self, script: Mapping[ScriptKey, str], latency: float = 0.0) -> None:
        self._script = dict(script)
        self.latency = latency
        self._lock = threading.Lock()
        self.calls: list[GenerationRequest] = []

    @classmethod
    def from_file(cls, path: str | Path, latency: float = 0.0) -> "ScriptedGateway":
        return cls(load_script(path), latency=latency)

    def __len__(self) -> int:
        return len(self._script)

    def lookup(self, sample_id: str | None, role: str, round: int | None) -> str | None:
        if sample_id is None:
            return None
        text = self._script.get((sample_id, role, round))
        if text is None:
            text = self._script.get((sample_id, role, None))
        return text

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        with self._lock:
            self.calls.append(request)
        if self.latency:
            time.sleep(self.latency)
        text = self.lookup(request.sample_id, request.role, request.round)
        if text is None:
            raise GatewayFailure(
                "MissingScript",
                f"no scripted response for sample={request.sample_id!r} role={request.role!r} round={request.round!r}",
            )
        return GenerationResponse(text)


def load_script(path: str | Path) -> dict[ScriptKey, str]:
    script: dict[ScriptKey, str] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read script {path}: {exc}") from exc
    with fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                key = (str(rec["sample_id"]), rec["role"], rec.get("round"))
                response = rec["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedRecord(line_number, f"bad script record ({exc})", str(path)) from exc
            if key[1] not in GENERATION_ROLES:
                raise MalformedRecord(line_number, f"unknown role {key[1]!r}", str(path))
            if key[2] is not None and (not isinstance(key[2], int) or isinstance(key[2], bool)):
                raise MalformedRecord(line_number, "round must be an integer or null", str(path))
            if not isinstance(response, str):
                raise MalformedRecord(line_number, "response must be a string", str(path))
            script[key] = response
    return script


def dump_script(script: Mapping[ScriptKey, str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (sample_id, role, rnd), response in script.items():
            rec = {"sample_id": sample_id, "role": role, "round": rnd, "response": response}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


_RETRYABLE = {429, 500, 502, 503, 504}


@dataclass
class HttpGateway:
    """OpenAI-compatible ``/v1/chat/completions`` client.

    Retries 429, 5xx and timeouts up to ``max_retries`` times with exponential
    backoff.  At most ``max_in_flight`` requests are outstanding at once across
    all threads sharing the gateway.
    """

    base_url: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    max_in_flight: int = 8
    system_prompt: str | None = None
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep
    live: bool = field(default=True, init=False)

    def __post_init__(self) -> None:
        key = os.environ.get(self.api_key_env, "").strip()
        if not key:
            raise GatewayConfigError(
                f"environment variable {self.api_key_env} is unset or empty; "
                f"export it with your API key or set gateway.api_key_env to the variable that holds it"
            )
        if self.max_in_flight < 1:
            raise GatewayConfigError("max_in_flight must be >= 1")
        self.url = self.base_url.rstrip("/") + "/v1/chat/completions"
        self._client = httpx.Client(
            timeout=self.timeout,
            transport=self.transport,
            headers={"Authorization": f"Bearer {key}"},
        )
        self._slots = threading.BoundedSemaphore(self.max_in_flight)

    def close(self) -> None:
        self._client.close()

    def payload(self, request: GenerationRequest) -> dict:
        messages = []
        if self.system_prompt:
            messages.append({"role": "system", "content": self.system_prompt})
        messages.append({"role": "user", "content": request.rendered_prompt})
        return {"model": self.model, "messages": messages, "temperature": self.temperature}

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        body = self.payload(request)
        last: GatewayFailure | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._client.post(self.url, json=body)
            except httpx.TimeoutException as exc:
                last = GatewayFailure("Timeout", str(exc) or "request timed out")
                continue
            except httpx.TransportError as exc:
                last = GatewayFailure("Transport", str(exc))
                continue
            if resp.status_code in _RETRYABLE:
                last = GatewayFailure("HTTPStatus", f"{resp.status_code} from {self.url}")
                continue
            if resp.status_code >= 400:
                raise GatewayFailure("HTTPStatus", f"{resp.status_code} from {self.url}: {resp.text[:200]}")
            try:
                data = resp.json()
                text = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise GatewayFailure("BadPayload", f"unexpected response body ({exc})") from exc
            if text is None:
                text = ""
            return GenerationResponse(text, data.get("usage"))
        assert last is not None
        logger.warning("giving up after %d attempts: %s", self.max_retries + 1, last)
        raise last
