"""Chat-completions gateway with an append-only disk cache.

Every prompt/response pair is cached in a JSON-lines file keyed by
SHA-256(model_tag, prompt), so repeated runs are free and offline runs
replay the cache exactly. Requests go to any OpenAI-compatible endpoint;
a `transport` callable can replace HTTP entirely (tests, local models).
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import requests

from ..errors import GatewayError, OfflineCacheMissError

API_KEY_ENV = "CODER_LLM_API_KEY"
DEFAULT_TEMPERATURE = 0.7
DEFAULT_MAX_RETRIES = 3
DEFAULT_CONCURRENCY = 4


@dataclass
class LlmExchange:
    prompt: str
    model_tag: str
    response: str
    retrieved_from_cache: bool
    timestamp: float


def cache_key(model_tag: str, prompt: str) -> str:
    return hashlib.sha256(f"{model_tag}\x00{prompt}".encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL store of exchanges; safe for one writer process."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._entries[rec["key"]] = rec

    def get(self, key: str) -> dict | None:
        return self._entries.get(key)

    def put(self, key: str, model_tag: str, prompt: str, response: str) -> None:
        rec = {
            "key": key,
            "model_tag": model_tag,
            "prompt": prompt,
            "response": response,
            "timestamp": time.time(),
        }
        line = json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n"
        with self._lock:
            self._entries[key] = rec
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line)


class TokenBucket:
    """Simple thread-safe rate limiter; None rate means unlimited."""

    def __init__(self, rate_per_s: float | None, capacity: float | None = None):
        self.rate = rate_per_s
        self.capacity = capacity if capacity is not None else (rate_per_s or 1.0)
        self._tokens = self.capacity
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate is None:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


def http_transport(endpoint: str, api_key: str | None, timeout: float) -> Callable[[str, str, float], str]:
    """Transport that posts to an OpenAI-compatible chat-completions URL."""

    def send(model_tag: str, prompt: str, temperature: float) -> str:
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        resp = requests.post(
            endpoint,
            json={
                "model": model_tag,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": temperature,
            },
            headers=headers,
            timeout=timeout,
        )
        resp.raise_for_status()
        body = resp.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed chat-completions response: {body!r}") from exc

    return send


class LlmGateway:
    """Cached access to an external language model.

    Cache hits never touch the network. In offline mode a miss raises
    OfflineCacheMissError instead of sending anything. Misses retry up to
    `max_retries` times with exponential backoff; concurrent batches are
    bounded by `concurrency` and optionally rate-limited.
    """

    def __init__(self, model_tag: str, endpoint: str | None = None,
                 cache_path: str | Path | None = None, api_key: str | None = None,
                 temperature: float = DEFAULT_TEMPERATURE, offline: bool = False,
                 max_retries: int = DEFAULT_MAX_RETRIES,
                 concurrency: int = DEFAULT_CONCURRENCY,
                 rate_per_s: float | None = None,
                 transport: Callable[[str, str, float], str] | None = None,
                 timeout: float = 60.0, backoff_base: float = 0.5):
        self.model_tag = model_tag
        self.temperature = temperature
        self.offline = offline
        self.max_retries = max_retries
        self.concurrency = max(1, concurrency)
        self.backoff_base = backoff_base
        self.cache = ResponseCache(cache_path) if cache_path else None
        self._bucket = TokenBucket(rate_per_s)
        if transport is not None:
            self._transport = transport
        elif endpoint is not None:
            key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
            self._transport = http_transport(endpoint, key, timeout)
        else:
            self._transport = None

    def complete(self, prompt: str) -> LlmExchange:
        if not prompt:
            raise ValueError("empty prompt")
        key = cache_key(self.model_tag, prompt)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return LlmExchange(prompt, self.model_tag, hit["response"],
                                   retrieved_from_cache=True, timestamp=hit["timestamp"])
        if self.offline:
            raise OfflineCacheMissError(
                f"offline mode: prompt not in cache (key {key[:12]}...)"
            )
        if self._transport is None:
            raise GatewayError("no endpoint or transport configured")

        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                self._bucket.acquire()
                response = self._transport(self.model_tag, prompt, self.temperature)
                if not response:
                    raise GatewayError("model returned an empty response")
                if self.cache is not None:
                    self.cache.put(key, self.model_tag, prompt, response)
                return LlmExchange(prompt, self.model_tag, response,
                                   retrieved_from_cache=False, timestamp=time.time())
            except OfflineCacheMissError:
                raise
            except Exception as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff_base * (2 ** attempt))
        raise GatewayError(
            f"gateway failed after {self.max_retries} attempts: {last_error}"
        ) from last_error

    def complete_many(self, prompts: Sequence[str]) -> list[LlmExchange]:
        """Complete a batch concurrently, preserving input order."""
        if not prompts:
            return []
        with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
            return list(pool.map(self.complete, prompts))
