"""Chat-completion clients: an OpenAI-compatible HTTP provider, a scripted mock, and log replay.

Every provider exposes ``complete(request) -> CompletionResult``.  Transient
failures are retried with exponential backoff; after the retry cap a
:class:`TransportError` carries the number of attempts made.  ``run_batch``
fans requests out over a bounded thread pool and never aborts on a single
failed request.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import httpx

from .errors import AuthError, ConfigError, TransportError

log = logging.getLogger(__name__)

OK = "ok"
TRANSPORT_ERROR = "transport_error"
REFUSED_EMPTY = "provider_refused_empty"

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 2048
DEFAULT_MAX_RETRIES = 3


@dataclass(frozen=True)
class CompletionRequest:
    system: str
    user: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    model_name: str = "mock"
    request_id: str = ""

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    @property
    def prompt_hash(self) -> str:
        return content_hash({"system": self.system, "user": self.user})


@dataclass(frozen=True)
class CompletionResult:
    request_id: str
    raw_text: str
    status: str
    attempts: int = 1
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == OK


def content_hash(obj) -> str:
    """Short SHA-256 of the canonical JSON encoding of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


class _Transient(Exception):
    """Retryable failure raised inside a provider's ``_send``."""


class TokenBucket:
    """Thread-safe token bucket allowing ``requests_per_minute`` on average."""

    def __init__(self, requests_per_minute: float, burst: int | None = None,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        if requests_per_minute <= 0:
            raise ConfigError("requests_per_minute must be positive")
        self.rate = requests_per_minute / 60.0
        self.capacity = float(burst if burst is not None else max(1, int(requests_per_minute // 60) or 1))
        self.tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            self._sleep(wait)


class RetryingProvider:
    """Shared retry loop.  Subclasses implement ``_send`` and raise ``_Transient`` for retryable faults."""

    def __init__(self, max_retries: int = DEFAULT_MAX_RETRIES, backoff: float = 1.0, max_backoff: float = 30.0,
                 sleep: Callable[[float], None] = time.sleep, rate_limiter: TokenBucket | None = None):
        if max_retries < 0:
            raise ConfigError("max_retries must be non-negative")
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self._sleep = sleep
        self.rate_limiter = rate_limiter

    def _send(self, request: CompletionRequest) -> str:
        raise NotImplementedError

    def complete(self, request: CompletionRequest) -> CompletionResult:
        attempts = 0
        while True:
            attempts += 1
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            try:
                text = self._send(request)
            except _Transient as exc:
                if attempts > self.max_retries:
                    raise TransportError(f"{request.request_id}: {exc}", attempts) from exc
                delay = min(self.max_backoff, self.backoff * 2 ** (attempts - 1))
                log.debug("retrying %s in %.2fs after %s", request.request_id, delay, exc)
                self._sleep(delay)
                continue
            status = OK if text else REFUSED_EMPTY
            return CompletionResult(request.request_id, text or "", status, attempts)


class MockProvider(RetryingProvider):
    """Deterministic offline provider.

    ``script`` maps request ids to replies, or is a callable
    ``request -> reply``.  ``faults`` maps request ids to the number of
    transient failures injected before the call succeeds (``None`` fails
    forever).
    """

    def __init__(self, script: Mapping[str, str] | Callable[[CompletionRequest], str],
                 faults: Mapping[str, int | None] | None = None, default: str | None = None, **kwargs):
        kwargs.setdefault("sleep", lambda _s: None)
        super().__init__(**kwargs)
        self.script = script
        self.faults = dict(faults or {})
        self.default = default
        self.calls: dict[str, int] = {}
        self._lock = threading.Lock()

    def _send(self, request):
        with self._lock:
            n = self.calls[request.request_id] = self.calls.get(request.request_id, 0) + 1
        if request.request_id in self.faults:
            budget = self.faults[request.request_id]
            if budget is None or n <= budget:
                raise _Transient("injected fault")
        if callable(self.script):
            return self.script(request)
        if request.request_id in self.script:
            return self.script[request.request_id]
        if self.default is not None:
            return self.default
        raise ConfigError(f"mock script has no reply for {request.request_id!r}")


class OpenAIChatProvider(RetryingProvider):
    """OpenAI-compatible ``POST {base_url}/chat/completions`` client."""

    def __init__(self, base_url: str, api_key_env: str = "OPENAI_API_KEY", timeout: float = 120.0,
                 requests_per_minute: float | None = None, client: httpx.Client | None = None, **kwargs):
        if not base_url:
            raise ConfigError("base_url is required for a remote provider")
        if requests_per_minute is not None:
            kwargs.setdefault("rate_limiter", TokenBucket(requests_per_minute))
        super().__init__(**kwargs)
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self._client = client or httpx.Client(timeout=timeout)

    def _headers(self) -> dict:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthError(f"environment variable {self.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def _send(self, request):
        payload = {
            "model": request.model_name,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions", json=payload, headers=self._headers())
        except httpx.TransportError as exc:
            raise _Transient(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise _Transient(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ConfigError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"].get("content")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise _Transient(f"unreadable response body: {exc}") from exc
        return content or ""


class ReplayProvider:
    """Serves stored results; never touches the network."""

    def __init__(self, results: Mapping[str, CompletionResult]):
        self.results = dict(results)

    def complete(self, request):
        try:
            return self.results[request.request_id]
        except KeyError:
            raise TransportError(f"{request.request_id}: not in replay log", 0) from None


def run_batch(provider, requests: Sequence[CompletionRequest], max_in_flight: int = 4) -> list[CompletionResult]:
    """Complete ``requests`` with at most ``max_in_flight`` outstanding; results keep input order.

    A request that exhausts its retries becomes a ``transport_error`` entry.
    """
    if max_in_flight < 1:
        raise ConfigError("max_in_flight must be at least 1")
    ids = [r.request_id for r in requests]
    if len(set(ids)) != len(ids):
        raise ValueError("request ids must be unique within a batch")
    if not requests:
        return []

    def one(req):
        try:
            return provider.complete(req)
        except TransportError as exc:
            return CompletionResult(req.request_id, "", TRANSPORT_ERROR, exc.attempts, str(exc))

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(one, requests))


class RunLog:
    """Append-only JSONL log of completions, tagged with the hash of the producing config."""

    def __init__(self, path, config_hash: str):
        self.path = Path(path)
        self.config_hash = config_hash

    def append(self, requests: Iterable[CompletionRequest], results: Iterable[CompletionResult]) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            for req, res in zip(requests, results):
                entry = {"config_hash": self.config_hash, "model_name": req.model_name,
                         "prompt_hash": req.prompt_hash, **asdict(res)}
                fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")

    def load(self) -> dict[str, CompletionResult]:
        """Latest entry per request id.  Entries from another config are refused."""
        out: dict[str, CompletionResult] = {}
        if not self.path.exists():
            return out
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                e = json.loads(line)
                if e["config_hash"] != self.config_hash:
                    raise ConfigError(f"{self.path} holds results for config {e['config_hash']}, "
                                      f"expected {self.config_hash}")
                out[e["request_id"]] = CompletionResult(e["request_id"], e["raw_text"], e["status"],
                                                        e["attempts"], e.get("error"))
        return out


def run_logged(provider, requests: Sequence[CompletionRequest], run_log: RunLog,
               max_in_flight: int = 4) -> list[CompletionResult]:
    """Like :func:`run_batch` but reuses ``ok`` results already in ``run_log`` and appends new ones."""
    done = {k: v for k, v in run_log.load().items() if v.status != TRANSPORT_ERROR}
    todo = [r for r in requests if r.request_id not in done]
    fresh = run_batch(provider, todo, max_in_flight)
    if todo:
        run_log.append(todo, fresh)
    done.update({r.request_id: r for r in fresh})
    return [done[r.request_id] for r in requests]
