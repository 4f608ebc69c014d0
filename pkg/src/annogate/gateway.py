"""Wire client for text-generation and embedding endpoints.

Speaks HTTP + JSON modeled on widely deployed completion APIs:

* ``POST {base}/v1/completions``  body ``{model, prompt, max_tokens,
  temperature, logprobs}``; the response carries generated text and, when
  ``logprobs`` was requested, per-position top-n log-probabilities.
* ``POST {base}/v1/embeddings``   body ``{model, input: [texts]}``.
* ``POST {base}/v1/rerank``       body ``{model, query, documents}``.

Log-probabilities are converted to linear probabilities here, at the
boundary; nothing downstream ever sees log space. Transient transport
failures (connection errors, timeouts, HTTP 5xx) are retried with
exponential backoff; other HTTP errors are surfaced immediately.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import requests

from .errors import (
    EndpointRefused,
    MalformedResponse,
    MissingLogprobs,
    TransportError,
)

GENERATE_TEXT = "generate_text"
NEXT_TOKEN_DISTRIBUTION = "next_token_distribution"


@dataclass(frozen=True)
class ModelEndpoint:
    base_url: str
    model: str
    timeout: float = 30.0
    max_retries: int = 2
    auth_token: Optional[str] = None

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


@dataclass
class CompletionRequest:
    prompt: str
    mode: str = GENERATE_TEXT
    max_new_tokens: int = 512
    top_alternatives: int = 20
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in (GENERATE_TEXT, NEXT_TOKEN_DISTRIBUTION):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == NEXT_TOKEN_DISTRIBUTION:
            self.max_new_tokens = 1


@dataclass(frozen=True)
class TokenDistribution:
    """Top alternatives for the first generated position, probability-sorted."""

    entries: tuple[tuple[str, float], ...]

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)

    @property
    def argmax(self) -> str:
        return self.entries[0][0]


class GatewayClient:
    """HTTP client; one instance may serve many concurrent callers."""

    def __init__(
        self,
        session: Optional[requests.Session] = None,
        backoff_base: float = 0.2,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._session = session or requests.Session()
        self._backoff_base = backoff_base
        self._sleep = sleep

    # -- transport ---------------------------------------------------------

    def _post(self, endpoint: ModelEndpoint, path: str, payload: dict) -> dict:
        url = endpoint.base_url.rstrip("/") + path
        headers = {}
        if endpoint.auth_token:
            headers["Authorization"] = f"Bearer {endpoint.auth_token}"
        last_error: Optional[Exception] = None
        for attempt in range(endpoint.max_retries + 1):
            if attempt:
                self._sleep(self._backoff_base * 2 ** (attempt - 1))
            try:
                response = self._session.post(
                    url, json=payload, timeout=endpoint.timeout, headers=headers
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = TransportError(
                    f"{url}: HTTP {response.status_code}"
                )
                continue
            if response.status_code >= 400:
                raise EndpointRefused(f"{url}: HTTP {response.status_code}")
            try:
                return response.json()
            except ValueError as exc:
                raise MalformedResponse(f"{url}: non-JSON response") from exc
        raise TransportError(
            f"{url}: failed after {endpoint.max_retries + 1} attempts"
        ) from last_error

    # -- completion modes ----------------------------------------------------

    def complete_text(self, endpoint: ModelEndpoint, request: CompletionRequest) -> str:
        if request.mode != GENERATE_TEXT:
            raise ValueError("complete_text requires generate_text mode")
        body = self._post(
            endpoint,
            "/v1/completions",
            {
                "model": endpoint.model,
                "prompt": request.prompt,
                "max_tokens": request.max_new_tokens,
                "temperature": request.temperature,
                "logprobs": None,
            },
        )
        try:
            return body["choices"][0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"missing choices[0].text: {body!r}") from exc

    def next_token_distribution(
        self, endpoint: ModelEndpoint, request: CompletionRequest
    ) -> TokenDistribution:
        if request.mode != NEXT_TOKEN_DISTRIBUTION:
            raise ValueError(
                "next_token_distribution requires next_token_distribution mode"
            )
        body = self._post(
            endpoint,
            "/v1/completions",
            {
                "model": endpoint.model,
                "prompt": request.prompt,
                "max_tokens": 1,
                "temperature": request.temperature,
                "logprobs": request.top_alternatives,
            },
        )
        try:
            choice = body["choices"][0]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"missing choices[0]: {body!r}") from exc
        logprobs = choice.get("logprobs")
        if not logprobs or not logprobs.get("top_logprobs"):
            raise MissingLogprobs(
                f"{endpoint.base_url}: endpoint returned no token probabilities"
            )
        top = logprobs["top_logprobs"][0]
        entries = []
        total = 0.0
        for token, logprob in top.items():
            prob = math.exp(logprob)
            if math.isnan(prob) or prob > 1.0 + 1e-6:
                raise MalformedResponse(
                    f"log-probability {logprob!r} for token {token!r} "
                    f"exponentiates outside (0, 1]"
                )
            if prob == 0.0:
                continue
            entries.append((token, prob))
            total += prob
        if total > 1.0 + 1e-6:
            raise MalformedResponse(
                f"top-token probabilities sum to {total}, above 1"
            )
        entries.sort(key=lambda e: (-e[1], e[0]))
        return TokenDistribution(entries=tuple(entries))

    # -- auxiliary routes ----------------------------------------------------

    def embed_texts(
        self, endpoint: ModelEndpoint, texts: Sequence[str]
    ) -> list[list[float]]:
        body = self._post(
            endpoint,
            "/v1/embeddings",
            {"model": endpoint.model, "input": list(texts)},
        )
        try:
            data = sorted(body["data"], key=lambda d: d["index"])
            return [list(map(float, d["embedding"])) for d in data]
        except (KeyError, TypeError) as exc:
            raise MalformedResponse(f"malformed embeddings response: {body!r}") from exc

    def rerank_scores(
        self, endpoint: ModelEndpoint, query: str, documents: Sequence[str]
    ) -> list[float]:
        body = self._post(
            endpoint,
            "/v1/rerank",
            {"model": endpoint.model, "query": query, "documents": list(documents)},
        )
        try:
            scores = [float(s) for s in body["scores"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"malformed rerank response: {body!r}") from exc
        if len(scores) != len(documents):
            raise MalformedResponse(
                f"got {len(scores)} scores for {len(documents)} documents"
            )
        return scores
