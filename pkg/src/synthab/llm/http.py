"""Chat-completion HTTP backend.

Request body (POST ``{base_url}/chat/completions``)::

    {"model": ..., "temperature": ..., "seed": ...,
     "messages": [{"role": "system", "content": ...}, {"role": "user", "content": ...}],
     "response_format": {"type": "json_schema",
                         "json_schema": {"name": "response", "schema": {...}, "strict": true}}}

The answer is read from ``choices[0].message.content``. The bearer token
comes from ``SIMGYM_API_KEY`` unless passed explicitly.
"""

from __future__ import annotations

import os
import threading

import httpx

from ..errors import RateLimited, TransportError
from .base import BackendRequest

API_KEY_ENV = "SIMGYM_API_KEY"


class HttpBackend:
    def __init__(
        self,
        base_url: str,
        model: str = "default",
        api_key: str | None = None,
        max_inflight: int = 8,
        timeout_s: float = 60.0,
        client: httpx.Client | None = None,
    ):
        if max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout_s = timeout_s
        self._slots = threading.BoundedSemaphore(max_inflight)
        self._client = client or httpx.Client(timeout=timeout_s)

    @classmethod
    def from_config(cls, cfg: dict) -> "HttpBackend":
        return cls(
            base_url=cfg["base_url"],
            model=cfg.get("model", "default"),
            max_inflight=cfg.get("max_inflight", 8),
            timeout_s=cfg.get("timeout_s", 60.0),
        )

    def _body(self, request: BackendRequest) -> dict:
        body = {
            "model": self.model,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {"name": "response", "schema": request.schema, "strict": True},
            },
        }
        if request.seed is not None:
            body["seed"] = request.seed
        return body

    def complete(self, request: BackendRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        with self._slots:
            try:
                resp = self._client.post(
                    f"{self.base_url}/chat/completions",
                    json=self._body(request),
                    headers=headers,
                    timeout=self.timeout_s,
                )
            except httpx.HTTPError as exc:
                raise TransportError(f"request failed: {exc}") from exc
        if resp.status_code == 429:
            retry_after = resp.headers.get("Retry-After")
            try:
                delay = float(retry_after) if retry_after is not None else None
            except ValueError:
                delay = None
            raise RateLimited("rate limited (HTTP 429)", retry_after=delay)
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected response shape: {exc}") from exc

    def close(self) -> None:
        self._client.close()
