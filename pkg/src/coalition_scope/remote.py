"""Minimal JSON-over-HTTP client shared by the remote intent and mention backends."""

from __future__ import annotations

import threading

import requests


class ProtocolError(RuntimeError):
    """Non-2xx status, transport failure, or a malformed response body."""


_SLOTS: dict[tuple[str, int], threading.BoundedSemaphore] = {}
_SLOTS_LOCK = threading.Lock()


def _slot(endpoint: str, limit: int) -> threading.BoundedSemaphore:
    with _SLOTS_LOCK:
        sem = _SLOTS.get((endpoint, limit))
        if sem is None:
            sem = _SLOTS[endpoint, limit] = threading.BoundedSemaphore(limit)
        return sem


def post_json(endpoint: str, path: str, payload: dict, timeout: float = 10.0,
              retries: int = 1, max_in_flight: int = 4) -> dict:
    """POST ``payload`` and return the decoded JSON object.

    At most ``max_in_flight`` requests per endpoint run concurrently; a failed
    attempt is retried ``retries`` times before raising :class:`ProtocolError`.
    """
    url = endpoint.rstrip("/") + path
    last: Exception | None = None
    with _slot(endpoint, max_in_flight):
        for _ in range(retries + 1):
            try:
                resp = requests.post(url, json=payload, timeout=timeout)
            except requests.RequestException as exc:
                last = exc
                continue
            if not 200 <= resp.status_code < 300:
                last = ProtocolError(f"{url} returned HTTP {resp.status_code}")
                continue
            try:
                body = resp.json()
            except ValueError:
                last = ProtocolError(f"{url} returned invalid JSON")
                continue
            if not isinstance(body, dict):
                last = ProtocolError(f"{url} returned a non-object body")
                continue
            return body
    raise ProtocolError(str(last))
