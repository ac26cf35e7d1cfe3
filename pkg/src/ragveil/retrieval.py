"""In-memory corpus and exhaustive top-k retrieval.

Corpora here are a few hundred snippets, so retrieval is an exact
exhaustive cosine scan; no index, no approximation. Ties break on
ascending document id so rankings are reproducible across runs and
machines.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .embedding import cosine
from .errors import DuplicateId, EmptyCorpus, NotFound, RagveilError
from .textio import read_jsonl, read_text_exact
from .zones import PLAIN_TEXT, language_for_extension

LABELS = ("safe", "vulnerable", "adversarial", "unlabeled")


@dataclass(frozen=True)
class Document:
    """One retrieval snippet. pair_id links a safe/vulnerable pair."""

    id: str
    text: str
    language: str = PLAIN_TEXT
    label: str = "unlabeled"
    pair_id: str | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise RagveilError(f"document {self.id!r}: unknown label {self.label!r}")


@dataclass(frozen=True)
class RetrievalResult:
    """Descending-similarity ranking truncated to depth k."""

    ranked: tuple[tuple[str, float], ...]
    k: int

    def ids(self) -> tuple[str, ...]:
        return tuple(doc_id for doc_id, _ in self.ranked)

    def __contains__(self, doc_id: str) -> bool:
        return any(d == doc_id for d, _ in self.ranked)


class Corpus:
    """Immutable document set with lazily materialized embeddings.

    Embeddings are computed once per embedder identity and reused;
    poisoned variants share the parent's vectors so budget sweeps do not
    re-embed the clean corpus for every row.
    """

    def __init__(self, documents: Sequence[Document]):
        docs = tuple(documents)
        dupes = [d for d, n in Counter(doc.id for doc in docs).items() if n > 1]
        if dupes:
            raise DuplicateId(f"duplicate document ids: {sorted(dupes)}")
        self._check_pairs(docs)
        self.documents = docs
        self._by_id = {doc.id: i for i, doc in enumerate(docs)}
        self._vectors: list[np.ndarray | None] = [None] * len(docs)
        self._embedder_identity: str | None = None

    @staticmethod
    def _check_pairs(docs: Sequence[Document]) -> None:
        groups: dict[str, list[Document]] = {}
        for doc in docs:
            if doc.pair_id is not None:
                groups.setdefault(doc.pair_id, []).append(doc)
        for pid, members in groups.items():
            labels = sorted(d.label for d in members)
            if len(members) != 2 or labels != ["safe", "vulnerable"]:
                raise RagveilError(
                    f"pair {pid!r} must link exactly one safe and one "
                    f"vulnerable document, got {labels}"
                )

    def __len__(self) -> int:
        return len(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document:
        try:
            return self.documents[self._by_id[doc_id]]
        except KeyError:
            raise NotFound(f"document {doc_id!r} not in corpus") from None

    def subset(self, labels: Iterable[str]) -> "Corpus":
        wanted = set(labels)
        child = Corpus([d for d in self.documents if d.label in wanted])
        for i, doc in enumerate(child.documents):
            child._vectors[i] = self._vectors[self._by_id[doc.id]]
        child._embedder_identity = self._embedder_identity
        return child

    def with_document(self, doc: Document) -> "Corpus":
        if doc.id in self._by_id:
            raise DuplicateId(f"document {doc.id!r} already in corpus")
        child = Corpus([*self.documents, doc])
        child._vectors[: len(self.documents)] = self._vectors
        child._embedder_identity = self._embedder_identity
        return child

    def materialize(self, embedder) -> np.ndarray:
        """Fill in missing embeddings; recompute everything if the embedder
        changed. Single-writer phase: not safe to call concurrently."""
        if self._embedder_identity != embedder.identity:
            self._vectors = [None] * len(self.documents)
            self._embedder_identity = embedder.identity
        missing = [i for i, v in enumerate(self._vectors) if v is None]
        if missing:
            batch = embedder.embed_batch([self.documents[i].text for i in missing])
            for i, vec in zip(missing, batch):
                self._vectors[i] = vec
        return np.stack(self._vectors)  # type: ignore[arg-type]


def poison(corpus: Corpus, target: Document) -> Corpus:
    """The clean corpus plus exactly one adversarial document; the original
    corpus object is untouched."""
    return corpus.with_document(target)


def full_ranking(
    query: str,
    corpus: Corpus,
    embedder,
    similarity: Callable[[np.ndarray, np.ndarray], float] | None = None,
) -> list[tuple[str, float]]:
    """All documents ordered by descending similarity, ties by ascending id."""
    if len(corpus) == 0:
        raise EmptyCorpus("cannot retrieve from an empty corpus")
    qv = embedder.embed(query)
    matrix = corpus.materialize(embedder)
    sim = similarity or cosine
    scores = [sim(qv, matrix[i]) for i in range(len(corpus))]
    pairs = [(doc.id, s) for doc, s in zip(corpus.documents, scores)]
    pairs.sort(key=lambda p: (-p[1], p[0]))
    return pairs


def retrieve_k(
    query: str,
    corpus: Corpus,
    k: int,
    embedder,
    similarity: Callable[[np.ndarray, np.ndarray], float] | None = None,
) -> RetrievalResult:
    if k < 1:
        raise RagveilError(f"k must be >= 1, got {k}")
    ranking = full_ranking(query, corpus, embedder, similarity)
    return RetrievalResult(ranked=tuple(ranking[:k]), k=k)


def rank_of(
    query: str,
    corpus: Corpus,
    doc_id: str,
    embedder,
    similarity: Callable[[np.ndarray, np.ndarray], float] | None = None,
) -> int:
    """1-based position of doc_id in the full ranking."""
    corpus.get(doc_id)
    ranking = full_ranking(query, corpus, embedder, similarity)
    for i, (rid, _) in enumerate(ranking, start=1):
        if rid == doc_id:
            return i
    raise NotFound(f"document {doc_id!r} vanished from ranking")  # unreachable


def load_corpus_jsonl(path: str | Path) -> Corpus:
    """Line-delimited JSON records {id, text, language, label, pair_id?}.

    Records carrying a record_type field (e.g. the provenance meta line
    the CLI writes) are not documents and are skipped.
    """
    docs = []
    for rec in read_jsonl(path):
        if "record_type" in rec:
            continue
        docs.append(
            Document(
                id=str(rec["id"]),
                text=str(rec["text"]),
                language=str(rec.get("language", PLAIN_TEXT)),
                label=str(rec.get("label", "unlabeled")),
                pair_id=rec.get("pair_id"),
            )
        )
    return Corpus(docs)


def load_corpus_dir(path: str | Path, labels_file: str = "labels.json") -> Corpus:
    """Directory ingestion: file name is the id, extension picks the
    language tag, an optional sidecar labels file adds label/pair_id."""
    root = Path(path)
    labels: dict[str, dict] = {}
    sidecar = root / labels_file
    if sidecar.exists():
        labels = json.loads(read_text_exact(sidecar))
    docs = []
    for file in sorted(root.iterdir()):
        if not file.is_file() or file.name == labels_file:
            continue
        meta = labels.get(file.name, {})
        docs.append(
            Document(
                id=file.name,
                text=read_text_exact(file),
                language=language_for_extension(file.suffix),
                label=meta.get("label", "unlabeled"),
                pair_id=meta.get("pair_id"),
            )
        )
    return Corpus(docs)


def save_corpus_jsonl(corpus: Corpus, path: str | Path) -> None:
    from .textio import write_jsonl

    write_jsonl(
        path,
        (
            {
                "id": d.id,
                "text": d.text,
                "language": d.language,
                "label": d.label,
                **({"pair_id": d.pair_id} if d.pair_id else {}),
            }
            for d in corpus.documents
        ),
    )
