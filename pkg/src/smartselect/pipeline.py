"""End-to-end orchestration: query + documents in, selected contexts out.

Stage order is fixed: retrieve (optional) -> segment -> dedup -> embed ->
relevance -> pre-rank to top m -> pairwise directional NLI over the
pre-ranked pool only -> symmetrize -> similarity/conflict/relevance
matrices -> weighted kernel -> greedy selection.  Given deterministic
providers the whole run is deterministic, including across batch
parallelism levels.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib.resources import files as _package_files
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyPool,
    InvalidHyperparameter,
    InvalidTask,
    ProtocolViolation,
    ProviderUnavailable,
    SmartSelectError,
)
from .kernel import kernel_from_relations
from .providers import ProviderBundle
from .relmat import Embedding, RelationMatrices, build_similarity_matrix, query_relevance, symmetrize_conflict
from .selector import SelectionConfig, greedy_select

log = logging.getLogger(__name__)

# Documents fetched per query when a task asks for retrieval without
# giving its own top_n.
DEFAULT_TOP_N = 50

# Sentences shorter than this many characters (after trimming) are noise
# from the splitter, not contexts.
MIN_SENTENCE_CHARS = 3

_TERMINALS = ".!?"
_TRAILERS = "\"')]}’”"
_OPENERS = "\"'([{‘“"

_DEFAULT_ABBREVIATIONS: frozenset[str] | None = None


def load_default_abbreviations() -> frozenset[str]:
    """Lowercased abbreviation tokens bundled with the package."""
    global _DEFAULT_ABBREVIATIONS
    if _DEFAULT_ABBREVIATIONS is None:
        raw = (_package_files("smartselect") / "data" / "abbreviations.txt").read_text("utf-8")
        entries = set()
        for line in raw.splitlines():
            token = line.strip().lower()
            if token and not token.startswith("#"):
                entries.add(token)
        _DEFAULT_ABBREVIATIONS = frozenset(entries)
    return _DEFAULT_ABBREVIATIONS


def _token_before(text: str, dot: int) -> str:
    start = dot
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    return text[start:dot].lstrip(_OPENERS).lower()


def split_sentences(text: str, abbreviations: frozenset[str] | None = None) -> list[str]:
    """Rule-based sentence splitting.

    A boundary is a run of terminal punctuation (optionally followed by
    closing quotes or brackets) followed by whitespace and an uppercase
    letter, digit, or opening quote.  A period does not end a sentence
    when the token before it is a known abbreviation or a single letter
    (an initial).  Pieces shorter than MIN_SENTENCE_CHARS after trimming
    are dropped.
    """
    if abbreviations is None:
        abbreviations = load_default_abbreviations()
    pieces: list[str] = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        ch = text[i]
        if ch not in _TERMINALS:
            i += 1
            continue
        j = i + 1
        while j < n and text[j] in _TERMINALS + _TRAILERS:
            j += 1
        if j >= n or not text[j].isspace():
            i += 1
            continue
        k = j
        while k < n and text[k].isspace():
            k += 1
        if k >= n:
            i += 1
            continue
        starter = text[k]
        if not (starter.isupper() or starter.isdigit() or starter in _OPENERS):
            i = j
            continue
        if ch == ".":
            token = _token_before(text, i)
            if token in abbreviations or (len(token) == 1 and token.isalpha()):
                i = j
                continue
        pieces.append(text[start:j])
        start = k
        i = k
    pieces.append(text[start:])
    out = []
    for piece in pieces:
        trimmed = piece.strip()
        if len(trimmed) >= MIN_SENTENCE_CHARS:
            out.append(trimmed)
    return out


@dataclass
class ContextSentence:
    """One candidate sentence flowing through the pipeline.

    embedding and relevance start unset and are filled by the embed and
    scoring stages.
    """

    sent_id: str
    doc_id: str
    ordinal: int
    text: str
    embedding: Embedding | None = None
    relevance: float | None = None


def segment_sentences(doc_id: str, text: str) -> list[ContextSentence]:
    """Split one document into ordered ContextSentence records.

    Blank input yields an empty list.  Ordinals count in document order
    starting at zero; sent_id is "<doc_id>:<ordinal>".
    """
    sentences = split_sentences(text) if text and text.strip() else []
    return [
        ContextSentence(sent_id=f"{doc_id}:{ordinal}", doc_id=doc_id, ordinal=ordinal, text=s)
        for ordinal, s in enumerate(sentences)
    ]


def dedup_sentences(sentences: Sequence[ContextSentence]) -> list[ContextSentence]:
    """Drop exact duplicates (lowercased, whitespace-collapsed), keeping the
    first occurrence.  Overlapping retrieved documents routinely repeat
    sentences, and repeated rows make every kernel submatrix singular.
    """
    seen: set[str] = set()
    out = []
    for s in sentences:
        key = " ".join(s.text.lower().split())
        if key in seen:
            continue
        seen.add(key)
        out.append(s)
    return out


def pre_rank(sentences: Sequence[ContextSentence], query: Embedding | None, m: int) -> list[ContextSentence]:
    """Top-m sentences by query relevance, descending.

    Ties keep the earlier position in the incoming list.  Sentences with
    relevance already set are not rescored; others require embeddings and
    a query embedding.
    """
    if not (isinstance(m, int) and m >= 1):
        raise InvalidHyperparameter(f"m must be a positive integer, got {m!r}")
    items = list(sentences)
    missing = [s for s in items if s.relevance is None]
    if missing:
        if query is None:
            raise ValueError("query embedding required to score unranked sentences")
        if any(s.embedding is None for s in missing):
            raise ValueError("sentences must be embedded before pre-ranking")
        scores = query_relevance(query, [s.embedding for s in missing])
        for s, score in zip(missing, scores):
            s.relevance = float(score)
    order = sorted(range(len(items)), key=lambda i: (-items[i].relevance, i))
    return [items[i] for i in order[:m]]


@dataclass(frozen=True)
class QueryTask:
    """One unit of work: a query plus its candidate documents.

    Exactly one source of documents is allowed: an inline list or a
    retrieval directive (retrieve_top_n).
    """

    query_id: str
    query_text: str
    documents: tuple[tuple[str, str], ...] | None = None
    retrieve_top_n: int | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.query_id, str) or not self.query_id:
            raise InvalidTask("must be a non-empty string", field="query_id")
        if not isinstance(self.query_text, str) or not self.query_text.strip():
            raise InvalidTask("must be a non-empty string", field="query")
        if (self.documents is None) == (self.retrieve_top_n is None):
            raise InvalidTask("exactly one of documents or retrieve must be given", field="documents")
        if self.documents is not None:
            docs = tuple((str(d), str(t)) for d, t in self.documents)
            ids = [d for d, _ in docs]
            if len(set(ids)) != len(ids):
                raise InvalidTask("doc ids must be unique", field="documents")
            if any(not d for d in ids):
                raise InvalidTask("doc ids must be non-empty", field="documents.id")
            object.__setattr__(self, "documents", docs)
        if self.retrieve_top_n is not None and not (
            isinstance(self.retrieve_top_n, int) and self.retrieve_top_n >= 1
        ):
            raise InvalidTask("top_n must be a positive integer", field="retrieve.top_n")

    @classmethod
    def from_json_dict(cls, record: object) -> "QueryTask":
        """Build a task from one parsed JSONL record, with field-path errors."""
        if not isinstance(record, dict):
            raise InvalidTask("task record must be a JSON object")
        query_id = record.get("query_id")
        if not isinstance(query_id, str) or not query_id:
            raise InvalidTask("must be a non-empty string", field="query_id")
        query = record.get("query")
        if not isinstance(query, str) or not query.strip():
            raise InvalidTask("must be a non-empty string", field="query")
        documents = record.get("documents")
        retrieve = record.get("retrieve")
        if (documents is None) == (retrieve is None):
            raise InvalidTask("exactly one of documents or retrieve must be given", field="documents")
        doc_pairs: tuple[tuple[str, str], ...] | None = None
        top_n: int | None = None
        if documents is not None:
            if not isinstance(documents, list) or not documents:
                raise InvalidTask("must be a non-empty list", field="documents")
            pairs = []
            for i, doc in enumerate(documents):
                if not isinstance(doc, dict):
                    raise InvalidTask("must be an object", field=f"documents[{i}]")
                doc_id = doc.get("id")
                text = doc.get("text")
                if not isinstance(doc_id, str) or not doc_id:
                    raise InvalidTask("must be a non-empty string", field=f"documents[{i}].id")
                if not isinstance(text, str):
                    raise InvalidTask("must be a string", field=f"documents[{i}].text")
                pairs.append((doc_id, text))
            doc_pairs = tuple(pairs)
        else:
            if not isinstance(retrieve, dict):
                raise InvalidTask("must be an object", field="retrieve")
            top_n_raw = retrieve.get("top_n", DEFAULT_TOP_N)
            if not isinstance(top_n_raw, int) or isinstance(top_n_raw, bool) or top_n_raw < 1:
                raise InvalidTask("top_n must be a positive integer", field="retrieve.top_n")
            top_n = top_n_raw
        return cls(query_id=query_id, query_text=query, documents=doc_pairs, retrieve_top_n=top_n)


@dataclass
class PipelineOutput:
    """Selected contexts plus the numbers needed to audit the run."""

    query_id: str
    selected: list[ContextSentence]
    gains: list[float]
    pool_indices: list[int]
    objective: float
    stopped_early: bool
    reason: str | None
    matrices_ref: str | None
    diagnostics: dict
    timings: dict[str, float] = field(default_factory=dict)

    def to_json_dict(self, include_timings: bool = False) -> dict:
        """JSON-ready dict.  Timings are wall-clock noise, excluded by
        default so serialized outputs stay byte-reproducible."""
        out = {
            "query_id": self.query_id,
            "selected": [
                {
                    "sent_id": s.sent_id,
                    "doc_id": s.doc_id,
                    "ordinal": s.ordinal,
                    "text": s.text,
                    "relevance": float(s.relevance) if s.relevance is not None else None,
                    "pool_index": int(idx),
                    "gain": float(gain),
                }
                for s, idx, gain in zip(self.selected, self.pool_indices, self.gains)
            ],
            "objective": float(self.objective),
            "stopped_early": self.stopped_early,
            "reason": self.reason,
            "matrices_ref": self.matrices_ref,
            "diagnostics": self.diagnostics,
        }
        if include_timings:
            out["timings"] = dict(self.timings)
        return out


@dataclass
class TaskFailure:
    """Structured per-task error record for batch isolation."""

    query_id: str
    error_code: str
    message: str

    def to_json_dict(self, include_timings: bool = False) -> dict:
        return {"query_id": self.query_id, "error": self.error_code, "message": self.message}


def save_matrices(base_path: str | Path, relations: RelationMatrices) -> Path:
    """Persist relation matrices for offline inspection.

    Writes <base>.json ({"n": ..., "fields": [...]}) plus one row-major
    little-endian float64 blob per field, so loading round-trips every
    double exactly.  Returns the header path.
    """
    base = Path(base_path)
    base.parent.mkdir(parents=True, exist_ok=True)
    fields = ["k_sim", "conflict", "relevance"]
    for name in fields:
        arr = np.ascontiguousarray(getattr(relations, name), dtype="<f8")
        Path(f"{base}.{name}.bin").write_bytes(arr.tobytes(order="C"))
    header_path = Path(f"{base}.json")
    header_path.write_text(json.dumps({"n": relations.n, "fields": fields}) + "\n", encoding="utf-8")
    return header_path


def load_matrices(base_or_header: str | Path) -> RelationMatrices:
    """Load a persisted matrix dump written by save_matrices."""
    path = Path(base_or_header)
    header_path = path if path.suffix == ".json" else Path(f"{path}.json")
    header = json.loads(header_path.read_text(encoding="utf-8"))
    n = int(header["n"])
    base = str(header_path)[: -len(".json")]
    arrays = {}
    for name in header["fields"]:
        blob = Path(f"{base}.{name}.bin").read_bytes()
        flat = np.frombuffer(blob, dtype="<f8")
        expected = n if name == "relevance" else n * n
        if flat.size != expected:
            raise DimensionMismatch(f"{name} blob holds {flat.size} doubles, expected {expected}")
        arrays[name] = flat.copy() if name == "relevance" else flat.reshape(n, n).copy()
    return RelationMatrices(**arrays)


def _directional_conflict_matrix(pool: Sequence[ContextSentence], bundle: ProviderBundle) -> tuple[np.ndarray, int]:
    """All ordered-pair contradiction probabilities over the pool.

    Issues exactly p*(p-1) directional judgments in row-major pair order;
    the diagonal stays zero without a call.
    """
    p = len(pool)
    matrix = np.zeros((p, p), dtype=np.float64)
    pairs = [(i, j) for i in range(p) for j in range(p) if i != j]
    texts = [(pool[i].text, pool[j].text) for i, j in pairs]
    nli_pairs = getattr(bundle.nli, "nli_pairs", None)
    if callable(nli_pairs):
        judgments = nli_pairs(texts)
    else:
        judgments = [bundle.nli.nli_directional(premise, hypothesis) for premise, hypothesis in texts]
    for (i, j), judgment in zip(pairs, judgments):
        matrix[i, j] = judgment.contradiction
    return matrix, len(pairs)


def run_task(
    task: QueryTask,
    config: SelectionConfig | None = None,
    bundle: ProviderBundle | None = None,
    *,
    persist_dir: str | Path | None = None,
    order_by_relevance: bool = False,
    skip_conflict: bool = False,
) -> PipelineOutput:
    """Execute the full selection pipeline for one task.

    skip_conflict suppresses the NLI pass and uses an all-zero conflict
    matrix; with gamma = 0 this reproduces the conflict-free ablation
    while saving the O(p^2) judgment cost.  Raises EmptyPool when no
    usable sentence survives segmentation and dedup, and provider errors
    propagate as-is; run_batch converts them into TaskFailure records.
    """
    if config is None:
        config = SelectionConfig()
    if bundle is None:
        raise InvalidHyperparameter("a ProviderBundle is required")
    timings: dict[str, float] = {}
    started = time.perf_counter()

    def _mark(stage: str, t0: float) -> float:
        t1 = time.perf_counter()
        timings[stage] = t1 - t0
        return t1

    t = started
    if task.retrieve_top_n is not None:
        if bundle.retriever is None:
            raise ProviderUnavailable("task asks for retrieval but no retrieval provider is configured")
        hits = bundle.retriever.retrieve(task.query_text, task.retrieve_top_n)
        documents = [(h.doc_id, h.text) for h in hits]
        ids = [d for d, _ in documents]
        if len(set(ids)) != len(ids):
            raise ProtocolViolation("retrieval returned duplicate doc ids")
    else:
        assert task.documents is not None
        documents = list(task.documents)
    t = _mark("retrieve", t)

    sentences: list[ContextSentence] = []
    for doc_id, text in documents:
        sentences.extend(segment_sentences(doc_id, text))
    n_sentences = len(sentences)
    t = _mark("segment", t)

    deduped = dedup_sentences(sentences)
    if not deduped:
        raise EmptyPool(f"task {task.query_id!r} produced no usable sentences")
    t = _mark("dedup", t)

    query_emb = bundle.embedder.embed_batch([task.query_text])[0]
    context_embs = bundle.embedder.embed_batch([s.text for s in deduped])
    for s, emb in zip(deduped, context_embs):
        s.embedding = emb
    t = _mark("embed", t)

    scores = query_relevance(query_emb, context_embs)
    for s, score in zip(deduped, scores):
        s.relevance = float(score)
    t = _mark("relevance", t)

    pool = pre_rank(deduped, query_emb, config.m)
    t = _mark("pre_rank", t)

    if skip_conflict:
        directional = np.zeros((len(pool), len(pool)), dtype=np.float64)
        nli_calls = 0
    else:
        directional, nli_calls = _directional_conflict_matrix(pool, bundle)
    t = _mark("nli", t)

    relations = RelationMatrices(
        k_sim=build_similarity_matrix([s.embedding for s in pool]),
        conflict=symmetrize_conflict(directional),
        relevance=np.array([s.relevance for s in pool], dtype=np.float64),
    )
    kernel = kernel_from_relations(relations, config.gamma)
    t = _mark("matrices", t)

    result = greedy_select(kernel, config)
    t = _mark("select", t)

    matrices_ref: str | None = None
    if persist_dir is not None:
        base = Path(persist_dir) / task.query_id
        matrices_ref = str(save_matrices(base, relations))
        t = _mark("persist", t)

    picks = list(zip(result.selected, result.gains))
    if order_by_relevance:
        # Pool order is descending relevance, so pool index order is
        # relevance order.
        picks.sort(key=lambda pair: pair[0])
    timings["total"] = time.perf_counter() - started

    diagnostics = {
        "n_documents": len(documents),
        "n_sentences": n_sentences,
        "n_deduped": len(deduped),
        "pool_size": len(pool),
        "nli_calls": nli_calls,
        "beta": float(config.beta),
        "gamma": float(config.gamma),
        "k": int(config.k),
        "m": int(config.m),
        "jitter": float(kernel.jitter),
    }
    log.info(
        "task %s: pool %d/%d, picked %d, objective %.6f",
        task.query_id, len(pool), len(deduped), len(picks), result.objective,
    )
    return PipelineOutput(
        query_id=task.query_id,
        selected=[pool[i] for i, _ in picks],
        gains=[g for _, g in picks],
        pool_indices=[i for i, _ in picks],
        objective=result.objective,
        stopped_early=result.stopped_early,
        reason=result.reason,
        matrices_ref=matrices_ref,
        diagnostics=diagnostics,
        timings=timings,
    )


def run_batch(
    tasks: Iterable[QueryTask],
    config: SelectionConfig | None = None,
    bundle: ProviderBundle | None = None,
    parallelism: int = 1,
    **run_kwargs: object,
) -> list[PipelineOutput | TaskFailure]:
    """Run many tasks with per-task isolation.

    Outputs come back in input order at every parallelism level; a failed
    task contributes a TaskFailure record instead of aborting the batch.
    """
    if not (isinstance(parallelism, int) and parallelism >= 1):
        raise InvalidHyperparameter(f"parallelism must be a positive integer, got {parallelism!r}")
    items = list(tasks)

    def one(task: QueryTask) -> PipelineOutput | TaskFailure:
        try:
            return run_task(task, config, bundle, **run_kwargs)
        except SmartSelectError as exc:
            log.warning("task %s failed: %s", task.query_id, exc)
            return TaskFailure(query_id=task.query_id, error_code=exc.code, message=str(exc))

    if parallelism == 1 or len(items) <= 1:
        results = [one(t) for t in items]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, items))
    summary = aggregate_timings(results)
    if summary:
        log.info("batch of %d done; stage seconds: %s", len(items), summary)
    return results


def aggregate_timings(results: Sequence[PipelineOutput | TaskFailure]) -> dict[str, float]:
    """Total seconds per stage across the successful outputs."""
    totals: dict[str, float] = {}
    for r in results:
        if isinstance(r, PipelineOutput):
            for stage, seconds in r.timings.items():
                totals[stage] = totals.get(stage, 0.0) + seconds
    return totals


def to_jsonl_line(record: PipelineOutput | TaskFailure, include_timings: bool = False) -> str:
    """Canonical one-line JSON serialization, newline included.

    Compact separators and ensure_ascii=False are part of the output
    contract: identical runs must produce byte-identical lines.
    """
    payload = record.to_json_dict(include_timings=include_timings)
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":")) + "\n"
