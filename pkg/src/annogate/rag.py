"""Document chunking, BM25 and embedding retrieval, and reranking.

The vector store is a flat exact index: search scores every stored vector by
scalar product against the query, so results are guaranteed identical to a
brute-force scan. Embeddings are unit-normalized at ingestion, which makes
the scalar product realize cosine similarity.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .classifier import tokenize
from .errors import DimensionMismatch, EmptyIndex, MalformedResponse, ScorerError
from .gateway import GatewayClient, ModelEndpoint

INDEX_FORMAT_VERSION = 1

#: Batch scorer contract: (query, chunk texts) -> one relevance score per text.
Scorer = Callable[[str, Sequence[str]], Sequence[float]]


@dataclass(frozen=True)
class DocumentChunk:
    id: str
    doc_id: str
    text: str
    position: int


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked (chunk id, score) pairs; scores non-increasing."""

    entries: tuple[tuple[str, float], ...]
    stage: str = "retrieval"

    @property
    def chunk_ids(self) -> tuple[str, ...]:
        return tuple(cid for cid, _ in self.entries)


def _split_attached(text: str, pattern: str) -> list[str]:
    """Split by a captured separator, attaching it to the preceding piece."""
    parts = re.split(pattern, text)
    pieces: list[str] = []
    for i, part in enumerate(parts):
        if part == "":
            continue
        if i % 2 == 1 and pieces:
            pieces[-1] += part
        else:
            pieces.append(part)
    return pieces


def chunk_document(
    doc_id: str, text: str, max_length: int = 500
) -> list[DocumentChunk]:
    """Split a document into chunks of at most ``max_length`` characters.

    Paragraph boundaries are preferred, then sentence boundaries, then a hard
    cut. Separators stay attached to the preceding chunk, so concatenating the
    chunk texts in order reproduces the document exactly.
    """
    if max_length <= 0:
        raise ValueError("max_length must be positive")
    pieces: list[str] = []
    for paragraph in _split_attached(text, r"(\n{2,})"):
        if len(paragraph) <= max_length:
            pieces.append(paragraph)
            continue
        for sentence in _split_attached(paragraph, r"((?<=[.!?])\s+)"):
            if len(sentence) <= max_length:
                pieces.append(sentence)
                continue
            for start in range(0, len(sentence), max_length):
                pieces.append(sentence[start : start + max_length])
    return [
        DocumentChunk(id=f"{doc_id}#{i}", doc_id=doc_id, text=piece, position=i)
        for i, piece in enumerate(pieces)
    ]


# --- BM25 -------------------------------------------------------------------


class BM25Index:
    """Okapi BM25 over chunk token counts."""

    def __init__(
        self,
        chunk_ids: Sequence[str],
        term_counts: Sequence[dict[str, int]],
        k1: float = 1.5,
        b: float = 0.75,
    ):
        self.chunk_ids = list(chunk_ids)
        self.term_counts = [dict(tc) for tc in term_counts]
        self.k1 = k1
        self.b = b
        self.lengths = [sum(tc.values()) for tc in self.term_counts]
        self.avg_length = (
            sum(self.lengths) / len(self.lengths) if self.lengths else 0.0
        )
        self.doc_freq: dict[str, int] = {}
        for tc in self.term_counts:
            for term in tc:
                self.doc_freq[term] = self.doc_freq.get(term, 0) + 1

    @classmethod
    def build(
        cls, chunks: Sequence[DocumentChunk], k1: float = 1.5, b: float = 0.75
    ) -> "BM25Index":
        counts = []
        for chunk in chunks:
            tc: dict[str, int] = {}
            for token in tokenize(chunk.text):
                tc[token] = tc.get(token, 0) + 1
            counts.append(tc)
        return cls([c.id for c in chunks], counts, k1=k1, b=b)

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        n = len(self.chunk_ids)
        return float(np.log(1.0 + (n - df + 0.5) / (df + 0.5)))

    def score(self, query_terms: Sequence[str], position: int) -> float:
        tc = self.term_counts[position]
        length = self.lengths[position]
        norm = 1.0 - self.b + self.b * (length / self.avg_length if self.avg_length else 0.0)
        total = 0.0
        for term in query_terms:
            tf = tc.get(term, 0)
            if tf == 0:
                continue
            total += self.idf(term) * (tf * (self.k1 + 1.0)) / (tf + self.k1 * norm)
        return total

    def search(self, query: str, n: int) -> RetrievalResult:
        if not self.chunk_ids:
            raise EmptyIndex("BM25 index has no chunks")
        query_terms = sorted(set(tokenize(query)))
        scored = [
            (self.chunk_ids[i], self.score(query_terms, i))
            for i in range(len(self.chunk_ids))
        ]
        scored = [(cid, s) for cid, s in scored if s > 0.0]
        scored.sort(key=lambda e: (-e[1], e[0]))
        return RetrievalResult(entries=tuple(scored[:n]), stage="retrieval")

    def save(self, path: Union[str, Path]) -> None:
        payload = {
            "version": INDEX_FORMAT_VERSION,
            "kind": "bm25",
            "k1": self.k1,
            "b": self.b,
            "chunk_ids": self.chunk_ids,
            "term_counts": self.term_counts,
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "BM25Index":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("version") != INDEX_FORMAT_VERSION or payload.get("kind") != "bm25":
            raise ValueError(f"{path}: not a BM25 index file")
        return cls(
            payload["chunk_ids"],
            payload["term_counts"],
            k1=payload["k1"],
            b=payload["b"],
        )


# --- flat inner-product index -------------------------------------------------


class FlatIPIndex:
    """Exact nearest-neighbor store scoring every vector by scalar product."""

    def __init__(self, chunk_ids: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise DimensionMismatch("vectors must be a 2-D array")
        if len(chunk_ids) != vectors.shape[0]:
            raise DimensionMismatch("one vector per chunk id required")
        self.chunk_ids = list(chunk_ids)
        self.vectors = vectors

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def search(self, query: np.ndarray, n: int) -> RetrievalResult:
        if not self.chunk_ids:
            raise EmptyIndex("flat index has no vectors")
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.dim,):
            raise DimensionMismatch(
                f"query dimension {query.shape} != index dimension ({self.dim},)"
            )
        scores = self.vectors @ query
        order = np.argsort(-scores, kind="stable")[:n]
        return RetrievalResult(
            entries=tuple((self.chunk_ids[i], float(scores[i])) for i in order),
            stage="retrieval",
        )

    def save(self, path: Union[str, Path]) -> None:
        np.savez(
            path,
            version=np.array([INDEX_FORMAT_VERSION]),
            vectors=self.vectors,
            chunk_ids=np.array([json.dumps(self.chunk_ids)]),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "FlatIPIndex":
        with np.load(path, allow_pickle=False) as data:
            if int(data["version"][0]) != INDEX_FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported index version")
            return cls(json.loads(str(data["chunk_ids"][0])), data["vectors"])


def embed(
    client: GatewayClient, endpoint: ModelEndpoint, texts: Sequence[str]
) -> np.ndarray:
    """Fetch embeddings and unit-normalize them (inner product == cosine)."""
    raw = client.embed_texts(endpoint, texts)
    dims = {len(v) for v in raw}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed embedding dimensions: {sorted(dims)}")
    vectors = np.asarray(raw, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise MalformedResponse("endpoint returned a zero embedding")
    return vectors / norms


# --- reranking -----------------------------------------------------------------


def lexical_overlap_scorer(query: str, texts: Sequence[str]) -> list[float]:
    """Built-in fallback scorer: shared unique tokens with the query."""
    query_tokens = set(tokenize(query))
    return [float(len(query_tokens & set(tokenize(text)))) for text in texts]


def remote_scorer(client: GatewayClient, endpoint: ModelEndpoint) -> Scorer:
    """Scorer backed by a remote scoring endpoint."""

    def score(query: str, texts: Sequence[str]) -> Sequence[float]:
        return client.rerank_scores(endpoint, query, texts)

    return score


def rerank(
    candidates: RetrievalResult,
    query: str,
    scorer: Scorer,
    chunks_by_id: dict[str, DocumentChunk],
) -> RetrievalResult:
    """Reorder candidates by scorer relevance; ties keep retrieval order."""
    if not candidates.entries:
        raise EmptyIndex("nothing to rerank")
    texts = [chunks_by_id[cid].text for cid, _ in candidates.entries]
    try:
        scores = list(scorer(query, texts))
    except Exception as exc:
        if isinstance(exc, ScorerError):
            raise
        raise ScorerError(str(exc)) from exc
    if len(scores) != len(texts):
        raise ScorerError(
            f"scorer returned {len(scores)} scores for {len(texts)} candidates"
        )
    order = sorted(
        range(len(texts)), key=lambda i: (-float(scores[i]), i)
    )
    return RetrievalResult(
        entries=tuple(
            (candidates.entries[i][0], float(scores[i])) for i in order
        ),
        stage="rerank",
    )


# --- end-to-end retrieval --------------------------------------------------------


@dataclass
class RagConfig:
    retriever: str = "bm25"  # "bm25" | "embedding"
    n_retrieve: int = 25
    n_final: int = 5
    use_reranker: bool = False
    min_score: Optional[float] = None
    query_mode: str = "client_text"  # "client_text" | "per_intent"


@dataclass
class CorpusIndexes:
    chunks: dict[str, DocumentChunk]
    bm25: BM25Index
    flat: Optional[FlatIPIndex] = None
    embed_endpoint: Optional[ModelEndpoint] = None
    rerank_endpoint: Optional[ModelEndpoint] = None
    client: GatewayClient = field(default_factory=GatewayClient)


def load_corpus(path: Union[str, Path]) -> list[tuple[str, str]]:
    """Corpus file: JSON Lines of {doc_id, text}."""
    docs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        docs.append((str(entry["doc_id"]), entry["text"]))
    return docs


def build_indexes(
    docs: Sequence[tuple[str, str]],
    max_chunk_length: int = 500,
    client: Optional[GatewayClient] = None,
    embed_endpoint: Optional[ModelEndpoint] = None,
    rerank_endpoint: Optional[ModelEndpoint] = None,
) -> CorpusIndexes:
    chunks: list[DocumentChunk] = []
    for doc_id, text in docs:
        chunks.extend(chunk_document(doc_id, text, max_length=max_chunk_length))
    client = client or GatewayClient()
    flat = None
    if embed_endpoint is not None:
        vectors = embed(client, embed_endpoint, [c.text for c in chunks])
        flat = FlatIPIndex([c.id for c in chunks], vectors)
    return CorpusIndexes(
        chunks={c.id: c for c in chunks},
        bm25=BM25Index.build(chunks),
        flat=flat,
        embed_endpoint=embed_endpoint,
        rerank_endpoint=rerank_endpoint,
        client=client,
    )


def _retrieve_once(
    indexes: CorpusIndexes, query: str, config: RagConfig
) -> RetrievalResult:
    if config.retriever == "embedding":
        if indexes.flat is None or indexes.embed_endpoint is None:
            raise EmptyIndex("embedding retrieval requires a built vector index")
        query_vec = embed(indexes.client, indexes.embed_endpoint, [query])[0]
        result = indexes.flat.search(query_vec, config.n_retrieve)
    elif config.retriever == "bm25":
        result = indexes.bm25.search(query, config.n_retrieve)
    else:
        raise ValueError(f"unknown retriever {config.retriever!r}")
    if config.min_score is not None:
        result = RetrievalResult(
            entries=tuple(
                (cid, s) for cid, s in result.entries if s >= config.min_score
            ),
            stage=result.stage,
        )
    return result


def retrieve_for_prompt(
    indexes: CorpusIndexes,
    query_text: str,
    config: RagConfig,
    intent_texts: Optional[Sequence[str]] = None,
) -> list[DocumentChunk]:
    """Retrieve, optionally rerank, and return the final top chunks.

    The query is the client text by default. ``per_intent`` mode (one search
    per candidate intent description) exists to replicate its known negative
    effect on total accuracy and is off unless configured.
    """
    queries = [query_text]
    if config.query_mode == "per_intent":
        if not intent_texts:
            raise ValueError("per_intent query mode requires intent texts")
        queries = list(intent_texts)

    selected: list[DocumentChunk] = []
    seen: set[str] = set()
    for query in queries:
        result = _retrieve_once(indexes, query, config)
        if not result.entries:
            continue
        if config.use_reranker:
            scorer: Scorer
            if indexes.rerank_endpoint is not None:
                scorer = remote_scorer(indexes.client, indexes.rerank_endpoint)
            else:
                scorer = lexical_overlap_scorer
            result = rerank(result, query, scorer, indexes.chunks)
        for cid, _ in result.entries[: config.n_final]:
            if cid not in seen:
                seen.add(cid)
                selected.append(indexes.chunks[cid])
    if config.query_mode == "client_text":
        return selected[: config.n_final]
    return selected
