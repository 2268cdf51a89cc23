"""
Chat-completions client.

Requests go out as a JSON body with a fixed field order so equal requests are
byte-identical on the wire. Transient failures (429, 5xx, timeouts, dropped
connections) are retried with exponential backoff; the jitter is drawn from a
seeded generator so delays are reproducible.
"""
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Tuple, Union

import numpy as np
import requests

from bcr.config import Settings
from bcr.errors import TransportError

logger = logging.getLogger(__name__)

VALID_ROLES = ("system", "user", "assistant")
RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: Tuple[Tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: Optional[int] = None

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        for role, _ in self.messages:
            if role not in VALID_ROLES:
                raise ValueError(f"invalid role {role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @classmethod
    def from_messages(cls, model: str, messages: List[Dict[str, str]], temperature: float = 0.0,
                      max_tokens: Optional[int] = None) -> "ChatRequest":
        return cls(model, tuple((m["role"], m["content"]) for m in messages), temperature, max_tokens)

    def to_body(self) -> bytes:
        body = {
            "model": self.model,
            "messages": [{"role": role, "content": content} for role, content in self.messages],
            "temperature": self.temperature,
        }
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        return json.dumps(body, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


@dataclass
class ChatResponse:
    text: str
    usage: Optional[Dict[str, int]] = None
    latency: float = 0.0
    retries: int = 0


@dataclass
class HttpReply:
    status: int
    text: str


class Transport(Protocol):
    def post(self, url: str, headers: Dict[str, str], body: bytes, timeout: float) -> HttpReply:
        ...


class RequestsTransport:
    """HTTP transport over a pooled requests.Session"""

    def __init__(self, session: Optional[requests.Session] = None):
        self.session = session or requests.Session()

    def post(self, url: str, headers: Dict[str, str], body: bytes, timeout: float) -> HttpReply:
        response = self.session.post(url, data=body, headers=headers, timeout=timeout)
        return HttpReply(response.status_code, response.text)


@dataclass
class MockTransport:
    """
    Scripted transport for tests. Each entry is either an HttpReply, a
    (status, payload) pair, or an exception instance to raise.
    """

    script: List[Union[HttpReply, Tuple[int, Union[Dict, str]], Exception]]
    calls: List[Dict] = field(default_factory=list)

    @staticmethod
    def completion(text: str, status: int = 200) -> HttpReply:
        payload = {"choices": [{"message": {"role": "assistant", "content": text}}],
                   "usage": {"prompt_tokens": 0, "completion_tokens": 0}}
        return HttpReply(status, json.dumps(payload))

    def post(self, url: str, headers: Dict[str, str], body: bytes, timeout: float) -> HttpReply:
        self.calls.append({"url": url, "headers": dict(headers), "body": body})
        if not self.script:
            raise AssertionError("mock transport script exhausted")
        entry = self.script.pop(0)
        if isinstance(entry, Exception):
            raise entry
        if isinstance(entry, HttpReply):
            return entry
        status, payload = entry
        return HttpReply(status, payload if isinstance(payload, str) else json.dumps(payload))


class ChatClient:
    def __init__(self, endpoint: str, api_key: str, transport: Optional[Transport] = None,
                 timeout: float = 30.0, max_retries: int = 5, backoff_base: float = 0.5,
                 backoff_cap: float = 8.0, seed: int = 0, sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint
        self.api_key = api_key
        self.transport = transport or RequestsTransport()
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.seed = seed
        self.sleep = sleep

    @classmethod
    def from_settings(cls, settings: Settings, transport: Optional[Transport] = None, **kwargs) -> "ChatClient":
        return cls(settings.llm_endpoint, settings.api_key, transport,
                   timeout=settings.http_timeout, max_retries=settings.http_max_retries, **kwargs)

    def backoff_delay(self, attempt: int) -> float:
        """Delay before retry number attempt+1; a pure function of (attempt, seed)"""
        jitter = np.random.default_rng([self.seed, attempt]).uniform(0.0, 0.25)
        return min(self.backoff_cap, self.backoff_base * (2 ** attempt)) * (1.0 + jitter)

    def _headers(self) -> Dict[str, str]:
        return {"Content-Type": "application/json", "Authorization": f"Bearer {self.api_key}"}

    def _parse(self, reply: HttpReply) -> Tuple[str, Optional[Dict[str, int]]]:
        try:
            payload = json.loads(reply.text)
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise TransportError("malformed_response", f"unexpected completion payload ({e})", reply.status)
        if not isinstance(text, str):
            raise TransportError("malformed_response", "completion content is not text", reply.status)
        return text, payload.get("usage")

    def chat(self, request: ChatRequest) -> ChatResponse:
        """
        POST one chat-completions request.

        Raises:
            TransportError: auth (401/403, never retried), http (other statuses or
                retries exhausted), timeout, network, malformed_response
        """
        if not self.api_key:
            raise TransportError("auth", "no API key configured (set BCR_API_KEY)")

        body = request.to_body()
        started = time.monotonic()
        last_error: Optional[TransportError] = None
        for attempt in range(self.max_retries + 1):
            try:
                reply = self.transport.post(self.endpoint, self._headers(), body, self.timeout)
            except requests.Timeout as e:
                last_error = TransportError("timeout", str(e))
            except requests.RequestException as e:
                last_error = TransportError("network", str(e))
            else:
                if reply.status in (401, 403):
                    raise TransportError("auth", "endpoint rejected the credentials", reply.status)
                if reply.status == 200:
                    text, usage = self._parse(reply)
                    return ChatResponse(text, usage, time.monotonic() - started, attempt)
                if reply.status not in RETRYABLE_STATUS:
                    raise TransportError("http", reply.text[:200], reply.status)
                last_error = TransportError("http", reply.text[:200], reply.status)

            if attempt < self.max_retries:
                delay = self.backoff_delay(attempt)
                logger.warning(f"⚠️ Chat request failed ({last_error}), retry {attempt + 1}/{self.max_retries} "
                               f"in {delay:.2f}s")
                self.sleep(delay)

        logger.error(f"❌ Chat request failed after {self.max_retries} retries: {last_error}")
        raise last_error
