"""HTTP chat backend for any server speaking the /chat/completions shape."""

from __future__ import annotations

import threading
import time

import httpx
import numpy as np

from feedmask.errors import TransportError
from feedmask.gateway.messages import ChatRequest

RETRY_ATTEMPTS = 3
RETRY_BACKOFF = (0.0, 0.5, 2.0)


class RateLimiter:
    """Minimum spacing between request starts, shared across threads."""

    def __init__(self, interval: float = 0.0, sleep=time.sleep, monotonic=time.monotonic):
        self.interval = interval
        self._sleep = sleep
        self._monotonic = monotonic
        self._lock = threading.Lock()
        self._next_at = 0.0

    def wait(self) -> None:
        if self.interval <= 0:
            return
        with self._lock:
            now = self._monotonic()
            delay = self._next_at - now
            self._next_at = max(now, self._next_at) + self.interval
        if delay > 0:
            self._sleep(delay)


class HttpBackend:
    def __init__(
        self,
        base_url: str,
        model: str,
        token: str | None = None,
        timeout: float = 120.0,
        limiter: RateLimiter | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.backend_id = f"http:{model}"
        self._limiter = limiter or RateLimiter()
        self._sleep = sleep
        headers = {}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            base_url=self.base_url, headers=headers, timeout=timeout, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def complete(self, request: ChatRequest) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.text} for m in request.messages],
            "temperature": request.temperature,
            "seed": request.seed,
        }
        last_error: Exception | None = None
        for attempt in range(RETRY_ATTEMPTS):
            self._limiter.wait()
            try:
                response = self._client.post("/chat/completions", json=payload)
                if response.status_code >= 500 or response.status_code == 429:
                    raise httpx.HTTPStatusError(
                        f"server returned {response.status_code}",
                        request=response.request,
                        response=response,
                    )
                if response.status_code >= 400:
                    # Client errors are not retried: the request itself is bad.
                    raise TransportError(
                        f"chat endpoint rejected request: {response.status_code} {response.text[:200]}"
                    )
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except TransportError:
                raise
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < RETRY_ATTEMPTS:
                    self._sleep(RETRY_BACKOFF[attempt + 1])
        raise TransportError(
            f"chat request failed after {RETRY_ATTEMPTS} attempts: {last_error}"
        ) from last_error


class HttpEmbedder:
    """Embedding endpoint client; normalizes whatever the server returns."""

    def __init__(
        self,
        base_url: str,
        model: str,
        token: str | None = None,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._sleep = sleep
        headers = {}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            base_url=self.base_url, headers=headers, timeout=timeout, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def embed(self, text: str) -> np.ndarray:
        payload = {"model": self.model, "input": text}
        last_error: Exception | None = None
        for attempt in range(RETRY_ATTEMPTS):
            try:
                response = self._client.post("/embeddings", json=payload)
                response.raise_for_status()
                body = response.json()
                vector = np.asarray(body["data"][0]["embedding"], dtype=np.float64)
                norm = np.linalg.norm(vector)
                if norm == 0:
                    raise ValueError("embedding endpoint returned a zero vector")
                return vector / norm
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < RETRY_ATTEMPTS:
                    self._sleep(RETRY_BACKOFF[attempt + 1])
        raise TransportError(
            f"embedding request failed after {RETRY_ATTEMPTS} attempts: {last_error}"
        ) from last_error
