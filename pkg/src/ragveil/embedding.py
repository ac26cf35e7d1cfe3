"""Embedding backends and the similarity function.

Two embedders share one interface: a deterministic reference embedder
(hashed byte-trigram counts, L2-normalized) for tests and desk-scale
experiments, and an HTTP client speaking the batch wire protocol for real
models. Text is always passed byte-faithfully: no Unicode normalization,
no stripping, anywhere on this path — the whole attack rests on the
embedder seeing the invisible characters.
"""

from __future__ import annotations

import itertools
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from .catalog import InvisibleCatalog
from .errors import DimError, EmptyInput, RagveilError, RemoteError, ZeroVector

DEFAULT_DIM = 512
DEFAULT_NGRAM = 3
DEFAULT_HASH_SEED = 0x9E3779B97F4A7C15

_U64 = np.uint64


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """Pinned 64-bit mixing function; wraparound arithmetic on uint64."""
    z = (x + _U64(0x9E3779B97F4A7C15)).astype(_U64)
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """cos(u, v) = u.v / (|u||v|), clamped into [-1, 1] against rounding."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimError(f"dim mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for a zero vector")
    return float(min(1.0, max(-1.0, float(np.dot(u, v)) / (nu * nv))))


class HashedTrigramEmbedder:
    """Deterministic reference embedder: hashed byte-trigram counts.

    The raw UTF-8 byte sequence is sliced into overlapping trigrams, each
    trigram is mixed through splitmix64 with a fixed seed and bucketed into
    ``dim`` counts, and the count vector is L2-normalized. Texts shorter
    than one trigram hash their whole byte sequence as a single gram so
    every non-empty input has a nonzero vector.

    Same bytes give the same vector; inserting any character adds trigram
    mass, which is exactly the sensitivity the attack needs.
    """

    kind = "reference"

    def __init__(self, dim: int = DEFAULT_DIM, ngram: int = DEFAULT_NGRAM,
                 hash_seed: int = DEFAULT_HASH_SEED):
        if dim < 1 or ngram < 1:
            raise RagveilError("dim and ngram must be positive")
        self.dim = dim
        self.ngram = ngram
        self.hash_seed = hash_seed
        self.sensitivity_checked: bool | None = None

    @property
    def identity(self) -> str:
        return f"hashed-trigram(dim={self.dim},n={self.ngram},seed={self.hash_seed:#x})"

    def _grams(self, data: bytes) -> np.ndarray:
        b = np.frombuffer(data, dtype=np.uint8).astype(_U64)
        n = self.ngram
        if len(b) < n:
            return np.array([int.from_bytes(data, "big")], dtype=_U64)
        words = np.zeros(len(b) - n + 1, dtype=_U64)
        for k in range(n):
            words = (words << _U64(8)) | b[k : len(b) - n + 1 + k]
        return words

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyInput("cannot embed empty text")
        words = self._grams(text.encode("utf-8"))
        buckets = (_splitmix64(words ^ _U64(self.hash_seed)) % _U64(self.dim)).astype(np.int64)
        counts = np.bincount(buckets, minlength=self.dim).astype(np.float64)
        return counts / np.linalg.norm(counts)

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.embed(t) for t in texts])


class RemoteEmbedder:
    """Client for the batch embedding wire protocol.

    POST /embed with {"texts": [...]} returns {"vectors": [[...]], "dim"};
    POST /echo returns the texts verbatim, which is how we verify the
    transport is code-point-faithful. Batches fan out over a small thread
    pool; an optional memo caches vectors keyed on the exact code-point
    sequence (never on any normalized form).
    """

    kind = "remote"

    def __init__(self, endpoint: str, batch_size: int = 64, parallelism: int = 4,
                 retries: int = 2, timeout: float = 60.0, memoize: bool = False):
        self.endpoint = endpoint.rstrip("/")
        self.batch_size = batch_size
        self.parallelism = parallelism
        self.retries = retries
        self.timeout = timeout
        self.dim: int | None = None
        self.sensitivity_checked: bool | None = None
        self._memo: dict[str, np.ndarray] | None = {} if memoize else None
        self._memo_lock = threading.Lock()
        self._session = requests.Session()

    @property
    def identity(self) -> str:
        return f"remote({self.endpoint})"

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.endpoint}{path}"
        body = json.dumps(payload, ensure_ascii=True).encode("ascii")
        last_exc: Exception | None = None
        for attempt in range(1, self.retries + 2):
            try:
                resp = self._session.post(
                    url, data=body, timeout=self.timeout,
                    headers={"Content-Type": "application/json; charset=utf-8"},
                )
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code >= 500:
                last_exc = RemoteError(
                    f"{url} returned {resp.status_code}", attempts=attempt,
                    status=resp.status_code,
                )
                continue
            if resp.status_code != 200:
                raise RemoteError(
                    f"{url} returned {resp.status_code}: {resp.text[:200]}",
                    attempts=attempt, status=resp.status_code,
                )
            return resp.json()
        raise RemoteError(
            f"{url} failed after {self.retries + 1} attempts: {last_exc}",
            attempts=self.retries + 1,
        )

    def _embed_chunk(self, texts: Sequence[str]) -> np.ndarray:
        data = self._post("/embed", {"texts": list(texts)})
        vectors = np.asarray(data["vectors"], dtype=np.float64)
        dim = int(data["dim"])
        if vectors.ndim != 2 or vectors.shape != (len(texts), dim):
            raise RemoteError(
                f"malformed response: shape {vectors.shape}, dim {dim} "
                f"for {len(texts)} texts"
            )
        if self.dim is None:
            self.dim = dim
        elif self.dim != dim:
            raise DimError(f"server dim changed from {self.dim} to {dim}")
        if not np.all(np.isfinite(vectors)):
            raise RemoteError("server returned non-finite vector values")
        return vectors

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyInput("cannot embed empty text")
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        if any(not t for t in texts):
            raise EmptyInput("cannot embed empty text")
        texts = list(texts)
        if self._memo is not None:
            with self._memo_lock:
                missing = [t for t in dict.fromkeys(texts) if t not in self._memo]
        else:
            missing = list(dict.fromkeys(texts))
        if missing:
            chunks = [
                missing[i : i + self.batch_size]
                for i in range(0, len(missing), self.batch_size)
            ]
            if len(chunks) > 1 and self.parallelism > 1:
                with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                    results = list(pool.map(self._embed_chunk, chunks))
            else:
                results = [self._embed_chunk(c) for c in chunks]
            fresh = dict(zip(missing, itertools.chain.from_iterable(results)))
            if self._memo is not None:
                with self._memo_lock:
                    self._memo.update(fresh)
                    table = self._memo
            else:
                table = fresh
        else:
            table = self._memo if self._memo is not None else {}
        return np.stack([table[t] for t in texts])

    def echo_roundtrip(self, texts: Sequence[str]) -> bool:
        """True iff the server echoes every code point back unchanged."""
        data = self._post("/echo", {"texts": list(texts)})
        return list(data.get("texts", [])) == list(texts)


@dataclass(frozen=True)
class SensitivityReport:
    sensitive: bool
    mean_shift: float
    per_sample: tuple[float, ...]


def sensitivity_probe(
    embedder,
    samples: Sequence[str],
    catalog: InvisibleCatalog,
    epsilon: float = 1e-6,
) -> SensitivityReport:
    """Does the embedder actually react to invisible insertions?

    Each sample is compared against itself with one catalog character
    inserted mid-string; the embedder is sensitive when the mean cosine
    distance exceeds epsilon. Attacks against an insensitive embedder are
    refused unless forced, so this is the cheapest possible go/no-go.
    """
    if not samples:
        raise EmptyInput("sensitivity probe needs at least one sample")
    if len(catalog) == 0:
        raise RagveilError("sensitivity probe needs a non-empty catalog")
    shifts = []
    for i, sample in enumerate(samples):
        if not sample:
            raise EmptyInput(f"probe sample {i} is empty")
        ch = catalog.char(i % len(catalog))
        mid = len(sample) // 2
        perturbed = sample[:mid] + ch + sample[mid:]
        base = embedder.embed(sample)
        moved = embedder.embed(perturbed)
        shifts.append(1.0 - cosine(base, moved))
    mean_shift = math.fsum(shifts) / len(shifts)
    sensitive = mean_shift > epsilon
    embedder.sensitivity_checked = sensitive
    return SensitivityReport(
        sensitive=sensitive, mean_shift=mean_shift, per_sample=tuple(shifts)
    )
