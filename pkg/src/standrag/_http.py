"""Shared HTTP plumbing for the remote embedder/reranker/LLM clients."""

from __future__ import annotations

import logging
import time

import httpx

from .errors import InputError, TransportError

logger = logging.getLogger(__name__)

RETRY_ATTEMPTS = 3
RETRY_BACKOFF_S = 0.25


def post_json(
    client: httpx.Client,
    url: str,
    payload: dict,
    *,
    headers: dict[str, str] | None = None,
    attempts: int = RETRY_ATTEMPTS,
    backoff_s: float = RETRY_BACKOFF_S,
) -> dict:
    """POST JSON with bounded retries (exponential backoff on 5xx/transport).

    4xx responses are the caller's fault and are not retried.

    Raises:
        InputError: on HTTP 4xx.
        TransportError: on transport failure or 5xx after all attempts.
    """
    last_error: Exception | None = None
    for attempt in range(attempts):
        if attempt:
            time.sleep(backoff_s * (2 ** (attempt - 1)))
        try:
            response = client.post(url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            last_error = exc
            logger.warning("POST %s failed (attempt %d/%d): %s", url, attempt + 1, attempts, exc)
            continue
        if 400 <= response.status_code < 500:
            raise InputError(f"POST {url} rejected: {response.status_code} {response.text[:200]}")
        if response.status_code >= 500:
            last_error = TransportError(f"POST {url}: {response.status_code}")
            logger.warning(
                "POST %s returned %d (attempt %d/%d)", url, response.status_code, attempt + 1, attempts
            )
            continue
        try:
            return response.json()
        except ValueError as exc:
            raise TransportError(f"POST {url}: response is not JSON: {exc}") from exc
    raise TransportError(f"POST {url} failed after {attempts} attempts: {last_error}")
