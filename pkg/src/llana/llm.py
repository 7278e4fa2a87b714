"""Chat-completion access: an HTTP client and a seeded offline mock.

Both backends share the on-disk response cache. The HTTP client retries
429/5xx and transport failures with jittered exponential backoff and keeps
request starts under a per-minute budget.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import httpx

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-3.5-turbo"
DEFAULT_API_KEY_ENV = "LLANA_API_KEY"
BASE_URL_ENV = "LLANA_BASE_URL"
DEFAULT_CACHE_DIR = ".llana_cache"

Responder = Callable[[Sequence[tuple[str, str]], int, int], str]


class LlmError(RuntimeError):
    pass


class LlmTransportError(LlmError):
    """Retries exhausted or a non-retryable HTTP status."""


class LlmProtocolError(LlmError):
    """The service answered with JSON we cannot interpret."""


class LlmConfigurationError(LlmError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    model_name: str = DEFAULT_MODEL
    temperature: float = 1.0
    n_samples: int = 1
    max_tokens: int = 512

    def __post_init__(self) -> None:
        msgs = tuple((str(r), str(c)) for r, c in self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs:
            raise ValueError("a chat request needs at least one message")
        if any(r not in ("system", "user", "assistant") for r, _ in msgs):
            raise ValueError("roles must be system, user or assistant")
        if msgs[-1][0] != "user":
            raise ValueError("the last message must come from the user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.n_samples < 1 or self.max_tokens < 1:
            raise ValueError("n_samples and max_tokens must be >= 1")

    @classmethod
    def from_prompt(cls, prompt: str, **kwargs) -> ChatRequest:
        return cls((("user", prompt),), **kwargs)

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
            "n": self.n_samples,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class ChatResponse:
    completions: tuple[str, ...]
    usage: tuple[int, int] = (0, 0)
    cached: bool = False


def cache_key(request: ChatRequest) -> str:
    """SHA-256 over a canonical JSON rendering of the request."""
    doc = json.dumps(request.to_dict(), sort_keys=True, ensure_ascii=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per request key; writes go through temp file + rename."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, request: ChatRequest) -> tuple[str, ...] | None:
        p = self.path(cache_key(request))
        try:
            with open(p, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError):
            logger.warning("ignoring unreadable cache entry %s", p)
            return None
        completions = tuple(doc.get("completions", ()))
        return completions if len(completions) == request.n_samples else None

    def put(self, request: ChatRequest, completions: Sequence[str]) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        key = cache_key(request)
        doc = {"request": request.to_dict(), "completions": list(completions), "timestamp": time.time()}
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{key}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=1)
            os.replace(tmp, self.path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class TokenBucket:
    """Thread-safe limiter on request starts per minute."""

    def __init__(self, per_minute: float, clock=time.monotonic, sleep=time.sleep):
        if per_minute <= 0:
            raise ValueError("rate limit must be positive")
        self.rate = per_minute / 60.0
        self.capacity = max(1.0, per_minute / 60.0)
        self.tokens = self.capacity
        self.clock = clock
        self.sleep = sleep
        self.stamp = clock()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleep(wait)


class Backend:
    """Common cache handling; subclasses implement :meth:`_fetch`."""

    kind = "abstract"

    def __init__(self, cache_dir: str | Path | None = None, jobs: int = 1):
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self.jobs = max(1, int(jobs))

    def complete(self, request: ChatRequest) -> ChatResponse:
        if self.cache is not None:
            hit = self.cache.get(request)
            if hit is not None:
                return ChatResponse(hit, (0, 0), cached=True)
        completions, usage = self._fetch(request)
        if len(completions) != request.n_samples:
            raise LlmProtocolError(f"expected {request.n_samples} completions, got {len(completions)}")
        if self.cache is not None:
            self.cache.put(request, completions)
        return ChatResponse(tuple(completions), usage, cached=False)

    def _fetch(self, request: ChatRequest) -> tuple[list[str], tuple[int, int]]:
        raise NotImplementedError


class MockBackend(Backend):
    """Offline backend answering with ``responder(messages, sample_index, mock_seed)``."""

    kind = "mock"

    def __init__(self, responder: Responder, mock_seed: int = 0, cache_dir=None, jobs: int = 1):
        super().__init__(cache_dir, jobs)
        if responder is None:
            raise LlmConfigurationError("mock backend needs a responder")
        self.responder = responder
        self.mock_seed = int(mock_seed)
        self.calls = 0

    def _fetch(self, request):
        self.calls += 1
        out = [str(self.responder(request.messages, i, self.mock_seed)) for i in range(request.n_samples)]
        return out, (0, 0)


class HttpBackend(Backend):
    """Client for a chat-completions compatible endpoint.

    Args:
        base_url: Endpoint root; ``/chat/completions`` is appended unless the
            URL already ends with it. Falls back to ``$LLANA_BASE_URL``.
        api_key_env: Name of the environment variable holding the key.
        rate_limit: Request starts per minute.
        max_retries: Retries after the first attempt for retryable failures.
        transport: Optional httpx transport (tests inject a mock transport).
        sleep: Sleep function used for backoff and rate limiting.
    """

    kind = "http"

    def __init__(
        self,
        base_url: str | None = None,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        cache_dir: str | Path | None = DEFAULT_CACHE_DIR,
        rate_limit: float = 60.0,
        max_retries: int = 5,
        timeout: float = 60.0,
        jobs: int = 1,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        jitter_seed: int | None = None,
    ):
        super().__init__(cache_dir, jobs)
        base_url = base_url or os.environ.get(BASE_URL_ENV)
        if not base_url:
            raise LlmConfigurationError(f"http backend needs base_url or ${BASE_URL_ENV}")
        base_url = base_url.rstrip("/")
        self.url = base_url if base_url.endswith("/chat/completions") else base_url + "/chat/completions"
        self.api_key_env = api_key_env
        self.max_retries = int(max_retries)
        self.sleep = sleep
        self.bucket = TokenBucket(rate_limit, sleep=sleep)
        self._rand = random.Random(jitter_seed)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _api_key(self) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise LlmConfigurationError(f"environment variable {self.api_key_env} is not set")
        return key

    def backoff(self, attempt: int) -> float:
        return 1.0 * 2.0**attempt * (1.0 + self._rand.uniform(-0.2, 0.2))

    def _post(self, body: dict, key: str) -> dict:
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(self.backoff(attempt - 1))
            self.bucket.acquire()
            try:
                resp = self._client.post(self.url, json=body, headers={"Authorization": f"Bearer {key}"})
            except httpx.TransportError as exc:
                last = f"transport failure: {exc}"
                logger.warning("LLM request failed (%s), attempt %d", last, attempt + 1)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                logger.warning("LLM request failed (%s), attempt %d", last, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise LlmTransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise LlmProtocolError(f"response is not JSON: {exc}") from exc
        raise LlmTransportError(f"giving up after {self.max_retries + 1} attempts ({last})")

    def _fetch(self, request):
        key = self._api_key()
        completions: list[str] = []
        usage = [0, 0]
        rounds = 0
        while len(completions) < request.n_samples:
            if rounds > self.max_retries:
                raise LlmTransportError(
                    f"service returned {len(completions)} of {request.n_samples} completions"
                )
            body = request.to_dict()
            body["n"] = request.n_samples - len(completions)
            doc = self._post(body, key)
            try:
                for choice in doc["choices"]:
                    content = choice["message"]["content"]
                    if not isinstance(content, str):
                        raise TypeError("content is not a string")
                    completions.append(content)
                u = doc.get("usage") or {}
                usage[0] += int(u.get("prompt_tokens", 0))
                usage[1] += int(u.get("completion_tokens", 0))
            except (KeyError, TypeError, ValueError) as exc:
                raise LlmProtocolError(f"malformed chat-completions response: {exc}") from exc
            rounds += 1
        return completions[: request.n_samples], (usage[0], usage[1])

    def close(self) -> None:
        self._client.close()


def complete(backend: Backend, request: ChatRequest) -> ChatResponse:
    return backend.complete(request)


def complete_many(backend: Backend, requests: Sequence[ChatRequest]) -> list[ChatResponse]:
    """Run requests, concurrently when ``backend.jobs > 1``; results keep input order."""
    if backend.jobs <= 1 or len(requests) <= 1:
        return [backend.complete(r) for r in requests]
    with ThreadPoolExecutor(max_workers=backend.jobs) as pool:
        return list(pool.map(backend.complete, requests))
