"""OpenAI-compatible chat-completions client with cassette record/replay.

In ``replay`` mode no HTTP client is ever constructed, so replay cannot touch
the network.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

API_KEY_ENV = "PERSONASIM_LLM_API_KEY"
MODES = ("live", "record", "replay")


class LLMError(RuntimeError):
    pass


class TransportError(LLMError):
    pass


class CassetteMiss(LLMError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no cassette entry for request fingerprint {fingerprint}")
        self.fingerprint = fingerprint


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.messages[0][0] != "system":
            raise ValueError("the first message must have role 'system'")
        bad = [role for role, _ in self.messages if role not in ("system", "user")]
        if bad:
            raise ValueError(f"unsupported message roles: {bad}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def body(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": r, "content": t} for r, t in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def fingerprint(body: dict) -> str:
    """Stable hash of a request body; key order is irrelevant, text is not."""
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


def response_text(body: dict) -> str:
    try:
        return body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise LLMError(f"malformed chat-completions response: {str(body)[:200]}") from exc


@dataclass
class Cassette:
    path: Path | None = None
    mode: str = "replay"
    entries: dict[str, dict] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown cassette mode {self.mode!r}")
        if self.path is not None:
            self.path = Path(self.path)
            if self.path.exists():
                self.entries.update(load_cassette(self.path))

    def lookup(self, fp: str) -> dict:
        try:
            return self.entries[fp]
        except KeyError:
            raise CassetteMiss(fp) from None

    def append(self, fp: str, response: dict) -> None:
        with self._lock:
            self.entries[fp] = response
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(canonical_json({"fingerprint": fp, "response": response}) + "\n")


def load_cassette(path) -> dict[str, dict]:
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                entries[obj["fingerprint"]] = obj["response"]
    return entries


class ChatSession:
    """Chat-completions session for one endpoint and model, backed by a cassette."""

    def __init__(
        self,
        base_url: str = "",
        model: str = "",
        cassette: Cassette | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        retries: int = 2,
        backoff: float = 0.5,
        transport=None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.cassette = cassette if cassette is not None else Cassette(mode="live")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._transport = transport
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = None
        self._client_lock = threading.Lock()
        self._count_lock = threading.Lock()
        self.network_calls = 0

    @property
    def mode(self) -> str:
        return self.cassette.mode

    def _http(self):
        with self._client_lock:
            if self._client is None:
                import httpx

                if not self.base_url:
                    raise LLMError("no LLM endpoint configured")
                headers = {"Content-Type": "application/json"}
                if self.api_key:
                    headers["Authorization"] = f"Bearer {self.api_key}"
                self._client = httpx.Client(timeout=self.timeout, headers=headers, transport=self._transport)
            return self._client

    def _post(self, body: dict) -> dict:
        import httpx

        client = self._http()
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    with self._count_lock:
                        self.network_calls += 1
                    resp = client.post(f"{self.base_url}/chat/completions", content=canonical_json(body))
                if resp.status_code < 300:
                    return resp.json()
                last = f"HTTP {resp.status_code}: {resp.text[:200]}"
            except (httpx.HTTPError, ValueError) as exc:
                last = f"{type(exc).__name__}: {exc}"
            logger.warning("chat request failed (attempt %d): %s", attempt + 1, last)
        raise TransportError(f"chat request failed after {self.retries + 1} attempts: {last}")

    def chat_body(self, req: ChatRequest) -> dict:
        body = req.body()
        fp = fingerprint(body)
        if self.mode == "replay":
            return self.cassette.lookup(fp)
        response = self._post(body)
        if self.mode == "record":
            self.cassette.append(fp, response)
        return response

    def chat(self, req: ChatRequest) -> str:
        return response_text(self.chat_body(req))

    def close(self):
        if self._client is not None:
            self._client.close()


def chat(req: ChatRequest, session: ChatSession) -> str:
    return session.chat(req)
