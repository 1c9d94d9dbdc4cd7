"""Embedding, NLI, and retrieval providers.

Two families implement the same protocols: HTTP clients speaking a small
JSON contract against configurable endpoints, and deterministic in-process
doubles for offline runs and reproducible tests.  Endpoint base URLs come
from explicit configuration or the SMART_EMBED_URL / SMART_NLI_URL /
SMART_RETRIEVE_URL environment variables.
"""

from __future__ import annotations

import hashlib
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np
import requests

from .errors import (
    InvalidHyperparameter,
    InvalidProbability,
    ProtocolViolation,
    ProviderUnavailable,
)
from .relmat import Embedding

log = logging.getLogger(__name__)

ENV_EMBED_URL = "SMART_EMBED_URL"
ENV_NLI_URL = "SMART_NLI_URL"
ENV_RETRIEVE_URL = "SMART_RETRIEVE_URL"

# NLI class masses must sum to 1 within this slack.
_NLI_SUM_TOL = 1e-3

DEFAULT_NLI_BATCH_SIZE = 32


@dataclass(frozen=True)
class ProviderEndpoint:
    """Connection settings for one HTTP provider."""

    base_url: str
    timeout_ms: float = 10_000.0
    max_in_flight: int = 8
    retry_count: int = 2
    retry_backoff_ms: float = 100.0
    token: str | None = None

    def __post_init__(self) -> None:
        if not self.base_url or not self.base_url.startswith(("http://", "https://")):
            raise InvalidHyperparameter(f"base_url must be an http(s) URL, got {self.base_url!r}")
        if not (self.timeout_ms > 0.0):
            raise InvalidHyperparameter(f"timeout_ms must be positive, got {self.timeout_ms!r}")
        if not (isinstance(self.max_in_flight, int) and self.max_in_flight >= 1):
            raise InvalidHyperparameter(f"max_in_flight must be a positive integer, got {self.max_in_flight!r}")
        if not (isinstance(self.retry_count, int) and self.retry_count >= 0):
            raise InvalidHyperparameter(f"retry_count must be a non-negative integer, got {self.retry_count!r}")
        if not (self.retry_backoff_ms >= 0.0):
            raise InvalidHyperparameter(f"retry_backoff_ms must be non-negative, got {self.retry_backoff_ms!r}")


@dataclass(frozen=True)
class NliJudgment:
    """Class distribution returned by one directional NLI call."""

    entailment: float
    neutral: float
    contradiction: float

    def __post_init__(self) -> None:
        for label, p in (
            ("entailment", self.entailment),
            ("neutral", self.neutral),
            ("contradiction", self.contradiction),
        ):
            if not (isinstance(p, (int, float)) and 0.0 <= p <= 1.0):
                raise InvalidProbability(f"{label}={p!r} is outside [0, 1]")
        total = self.entailment + self.neutral + self.contradiction
        if abs(total - 1.0) > _NLI_SUM_TOL:
            raise InvalidProbability(f"NLI masses sum to {total!r}, expected 1 within {_NLI_SUM_TOL}")


@dataclass(frozen=True)
class RetrievedDocument:
    """One retrieval hit."""

    doc_id: str
    text: str
    score: float


class EmbeddingProvider(Protocol):
    def embed_batch(self, texts: Sequence[str]) -> list[Embedding]: ...


class NliProvider(Protocol):
    def nli_directional(self, premise: str, hypothesis: str) -> NliJudgment: ...


class RetrievalProvider(Protocol):
    def retrieve(self, query: str, top_n: int) -> list[RetrievedDocument]: ...


def _validate_texts(texts: Sequence[str], what: str) -> list[str]:
    items = list(texts)
    if not items:
        raise InvalidHyperparameter(f"{what} batch must be non-empty")
    for i, t in enumerate(items):
        if not isinstance(t, str) or not t.strip():
            raise InvalidHyperparameter(f"{what}[{i}] must be a non-blank string")
    return items


class _HttpBase:
    """Shared POST-with-retries plumbing for the HTTP clients."""

    def __init__(self, endpoint: ProviderEndpoint, session: requests.Session | None = None) -> None:
        self.endpoint = endpoint
        self._session = session or requests.Session()
        self._gate = threading.BoundedSemaphore(endpoint.max_in_flight)

    def _post_json(self, path: str, payload: dict) -> dict:
        url = self.endpoint.base_url.rstrip("/") + path
        headers = {}
        if self.endpoint.token:
            headers["Authorization"] = f"Bearer {self.endpoint.token}"
        timeout = self.endpoint.timeout_ms / 1000.0
        attempts = self.endpoint.retry_count + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt > 0:
                delay = self.endpoint.retry_backoff_ms / 1000.0 * (2 ** (attempt - 1))
                log.debug("retrying %s after %.3fs (attempt %d/%d)", url, delay, attempt + 1, attempts)
                time.sleep(delay)
            try:
                with self._gate:
                    response = self._session.post(url, json=payload, headers=headers, timeout=timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = ProviderUnavailable(f"{url} answered {response.status_code}")
                continue
            if response.status_code != 200:
                raise ProtocolViolation(f"{url} answered unexpected status {response.status_code}")
            try:
                body = response.json()
            except ValueError as exc:
                raise ProtocolViolation(f"{url} returned a non-JSON body") from exc
            if not isinstance(body, dict):
                raise ProtocolViolation(f"{url} returned a non-object JSON body")
            return body
        raise ProviderUnavailable(f"{url} unreachable after {attempts} attempts: {last_error}")


class HttpEmbeddingClient(_HttpBase):
    """POST /embed {"texts": [...]} -> {"vectors": [[...], ...]}.

    Returned vectors are L2-normalized on receipt so cosine similarity
    downstream reduces to a dot product regardless of provider scaling.
    """

    def embed_batch(self, texts: Sequence[str]) -> list[Embedding]:
        items = _validate_texts(texts, "embed")
        body = self._post_json("/embed", {"texts": items})
        vectors = body.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(items):
            raise ProtocolViolation(
                f"/embed returned {0 if not isinstance(vectors, list) else len(vectors)} "
                f"vectors for {len(items)} texts"
            )
        embeddings = []
        dim: int | None = None
        for i, vec in enumerate(vectors):
            if not isinstance(vec, list) or not vec:
                raise ProtocolViolation(f"/embed vector {i} is not a non-empty list")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ProtocolViolation(f"/embed vector {i} has dim {len(vec)}, expected {dim}")
            try:
                emb = Embedding(np.asarray(vec, dtype=np.float64)).normalized()
            except Exception as exc:
                raise ProtocolViolation(f"/embed vector {i} is unusable: {exc}") from exc
            embeddings.append(emb)
        return embeddings


class HttpNliClient(_HttpBase):
    """POST /nli {"premise": ..., "hypothesis": ...} -> class masses."""

    def nli_directional(self, premise: str, hypothesis: str) -> NliJudgment:
        _validate_texts([premise], "premise")
        _validate_texts([hypothesis], "hypothesis")
        body = self._post_json("/nli", {"premise": premise, "hypothesis": hypothesis})
        try:
            judgment = NliJudgment(
                entailment=float(body["entailment"]),
                neutral=float(body["neutral"]),
                contradiction=float(body["contradiction"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"/nli returned a malformed judgment: {body!r}") from exc
        except InvalidProbability as exc:
            raise ProtocolViolation(str(exc)) from exc
        return judgment

    def nli_pairs(
        self,
        pairs: Sequence[tuple[str, str]],
        batch_size: int = DEFAULT_NLI_BATCH_SIZE,
    ) -> list[NliJudgment]:
        """Judge many ordered pairs, preserving order.

        Pairs go out in batches of batch_size; within a batch, requests run
        on a small thread pool and the endpoint's max_in_flight semaphore
        still caps concurrent requests.
        """
        if not (isinstance(batch_size, int) and batch_size >= 1):
            raise InvalidHyperparameter(f"batch_size must be a positive integer, got {batch_size!r}")
        pairs = list(pairs)
        if not pairs:
            return []
        results: list[NliJudgment | None] = [None] * len(pairs)
        workers = min(self.endpoint.max_in_flight, batch_size)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for start in range(0, len(pairs), batch_size):
                chunk = pairs[start : start + batch_size]
                futures = [pool.submit(self.nli_directional, p, h) for p, h in chunk]
                for offset, future in enumerate(futures):
                    results[start + offset] = future.result()
        return [r for r in results if r is not None]


class HttpRetrievalClient(_HttpBase):
    """POST /retrieve {"query": ..., "top_n": ...} -> {"hits": [...]}.

    Hits are re-sorted by descending score with a stable order for equal
    scores, then truncated to top_n, so callers see a canonical ranking
    even from providers with sloppy ordering.
    """

    def retrieve(self, query: str, top_n: int) -> list[RetrievedDocument]:
        _validate_texts([query], "query")
        if not (isinstance(top_n, int) and top_n >= 1):
            raise InvalidHyperparameter(f"top_n must be a positive integer, got {top_n!r}")
        body = self._post_json("/retrieve", {"query": query, "top_n": top_n})
        hits = body.get("hits")
        if not isinstance(hits, list):
            raise ProtocolViolation("/retrieve returned no hits list")
        docs = []
        for i, hit in enumerate(hits):
            try:
                docs.append(
                    RetrievedDocument(
                        doc_id=str(hit["id"]),
                        text=str(hit["text"]),
                        score=float(hit["score"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolViolation(f"/retrieve hit {i} is malformed: {hit!r}") from exc
        docs.sort(key=lambda d: -d.score)
        return docs[:top_n]


class HashEmbeddingProvider:
    """Deterministic offline embedder.

    Hashes character 2- and 3-grams of each text into a fixed-dimension
    signed bag, then L2-normalizes.  Output depends only on (seed, dim,
    text), never on process state, so repeated runs are bitwise identical.
    """

    def __init__(self, seed: int = 0, dim: int = 32) -> None:
        if not (isinstance(dim, int) and dim >= 2):
            raise InvalidHyperparameter(f"dim must be an integer >= 2, got {dim!r}")
        self.seed = int(seed)
        self.dim = dim
        self.calls = 0
        self.texts_embedded = 0

    def _embed_one(self, text: str) -> Embedding:
        padded = f"\x02{text}\x03"
        vec = np.zeros(self.dim, dtype=np.float64)
        for size in (2, 3):
            for start in range(max(len(padded) - size + 1, 0)):
                gram = padded[start : start + size]
                digest = hashlib.blake2b(
                    f"{self.seed}|{size}|{gram}".encode("utf-8"), digest_size=8
                ).digest()
                value = int.from_bytes(digest, "little")
                slot = value % self.dim
                sign = 1.0 if (value >> 62) & 1 else -1.0
                vec[slot] += sign
        if not np.any(vec):
            vec[0] = 1.0
        return Embedding(vec).normalized()

    def embed_batch(self, texts: Sequence[str]) -> list[Embedding]:
        items = _validate_texts(texts, "embed")
        self.calls += 1
        self.texts_embedded += len(items)
        return [self._embed_one(t) for t in items]


class FixtureNliProvider:
    """Offline NLI double backed by an explicit (premise, hypothesis) table.

    Pairs absent from the table fall back to default_contradiction; a text
    paired with itself always judges as non-contradictory.  ``calls``
    counts directional judgments, which is the budget the pipeline must
    respect.
    """

    def __init__(
        self,
        table: Mapping[tuple[str, str], float] | None = None,
        default_contradiction: float = 0.0,
    ) -> None:
        if not (0.0 <= default_contradiction <= 1.0):
            raise InvalidProbability(f"default_contradiction={default_contradiction!r} is outside [0, 1]")
        self.table = dict(table or {})
        for key, value in self.table.items():
            if not (0.0 <= value <= 1.0):
                raise InvalidProbability(f"table[{key!r}]={value!r} is outside [0, 1]")
        self.default_contradiction = default_contradiction
        self.calls = 0

    def nli_directional(self, premise: str, hypothesis: str) -> NliJudgment:
        self.calls += 1
        if premise == hypothesis:
            c = 0.0
        else:
            c = self.table.get((premise, hypothesis), self.default_contradiction)
        return NliJudgment(entailment=0.0, neutral=1.0 - c, contradiction=c)


class StaticRetrievalProvider:
    """Offline retriever over a fixed corpus, ranked by stored score."""

    def __init__(self, documents: Sequence[RetrievedDocument]) -> None:
        self.documents = list(documents)
        self.calls = 0

    def retrieve(self, query: str, top_n: int) -> list[RetrievedDocument]:
        if not (isinstance(top_n, int) and top_n >= 1):
            raise InvalidHyperparameter(f"top_n must be a positive integer, got {top_n!r}")
        self.calls += 1
        ranked = sorted(self.documents, key=lambda d: -d.score)
        return ranked[:top_n]


@dataclass
class ProviderBundle:
    """The set of providers one pipeline run draws on."""

    embedder: EmbeddingProvider
    nli: NliProvider
    retriever: RetrievalProvider | None = None
    extras: dict = field(default_factory=dict)
