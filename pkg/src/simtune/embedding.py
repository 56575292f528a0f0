"""Frozen text embeddings from a pluggable provider.

A provider maps a list of texts to index-aligned vectors. Two providers ship:
a remote HTTP client (OpenAI-style wire format) and a deterministic local
fallback based on signed hashed character trigrams. All vectors are
L2-normalized at ingest so cosine is a plain dot product downstream; no
module below this one knows which provider produced a vector.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .artifacts import FORMAT_VERSION, read_jsonl, write_jsonl
from .errors import DataError, ProviderError, ProviderIntegrityError

DEFAULT_FALLBACK_DIM = 256
MIN_FALLBACK_DIM = 16
ENV_URL = "EMBED_API_URL"
ENV_KEY = "EMBED_API_KEY"


def normalize(v: np.ndarray) -> np.ndarray:
    """Unit-norm copy of v; zero vectors are rejected by callers, not here."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        return v.copy()
    return v / n


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of unit vectors, clamped to [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"cosine dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def cache_key(provider_tag: str, text: str) -> str:
    joined = provider_tag + "\x00" + text
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


class FallbackEmbedder:
    """Deterministic offline embedder: signed hashed character trigrams.

    The lowercased text's overlapping 3-grams are hashed (blake2b, 8 bytes);
    the bucket is hash mod dim and the sign comes from the hash's top bit.
    Counts are accumulated and L2-normalized. Texts with no trigrams (or a
    cancelled-out sum) map to the first basis vector.
    """

    def __init__(self, dim: int = DEFAULT_FALLBACK_DIM):
        if dim < MIN_FALLBACK_DIM:
            raise DataError(f"fallback embedder needs dim >= {MIN_FALLBACK_DIM}, got {dim}")
        self.dim = dim
        self.tag = f"fallback-trigram-{dim}"

    def _vector(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.float64)
        low = text.lower()
        for i in range(len(low) - 2):
            h = int.from_bytes(
                hashlib.blake2b(low[i : i + 3].encode("utf-8"), digest_size=8).digest(),
                "big",
            )
            sign = 1.0 if h & (1 << 63) else -1.0
            v[h % self.dim] += sign
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            v[0] = 1.0
            return v
        return v / norm

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise DataError("embed requires at least one text")
        return np.stack([self._vector(t) for t in texts])


def fallback_embed(text: str, dim: int = DEFAULT_FALLBACK_DIM) -> np.ndarray:
    """One-off fallback embedding; same vector as FallbackEmbedder(dim)."""
    return FallbackEmbedder(dim)._vector(text)


class RemoteEmbedder:
    """HTTP embedding client.

    Wire format: POST {"model": tag, "input": [texts]} returning
    {"data": [{"index": i, "embedding": [...]}, ...]}. Transient transport
    failures, HTTP 5xx, and rate limits are retried with bounded exponential
    backoff; a Retry-After header on 429/503 overrides the computed delay.
    """

    def __init__(
        self,
        url: str,
        model: str,
        api_key: str = "",
        batch_size: int = 64,
        timeout: float = 30.0,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        backoff_cap: float = 8.0,
        session=None,
        sleep=time.sleep,
    ):
        if not url:
            raise ProviderError(f"no provider URL configured (set {ENV_URL} or pass url)")
        if batch_size < 1:
            raise DataError("batch_size must be >= 1")
        self.url = url
        self.model = model
        self.api_key = api_key
        self.batch_size = batch_size
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.tag = f"remote:{model}"
        self._sleep = sleep
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    @classmethod
    def from_env(cls, model: str, **kwargs) -> "RemoteEmbedder":
        return cls(
            url=os.environ.get(ENV_URL, ""),
            model=model,
            api_key=os.environ.get(ENV_KEY, ""),
            **kwargs,
        )

    def _delay(self, attempt: int, response) -> float:
        if response is not None and response.status_code in (429, 503):
            retry_after = response.headers.get("Retry-After")
            if retry_after is not None:
                try:
                    return min(float(retry_after), self.backoff_cap)
                except ValueError:
                    pass
        return min(self.backoff_base * (2.0**attempt), self.backoff_cap)

    def _post(self, batch: list[str]) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"model": self.model, "input": batch}
        last_error = "no attempt made"
        for attempt in range(self.max_attempts):
            response = None
            try:
                response = self._session.post(
                    self.url, json=body, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport failure: {exc}"
            else:
                if response.status_code == 200:
                    try:
                        return response.json()
                    except ValueError as exc:
                        raise ProviderIntegrityError(
                            f"provider returned unparseable body: {exc}"
                        ) from exc
                if response.status_code in (429, 503) or response.status_code >= 500:
                    last_error = f"HTTP {response.status_code}"
                else:
                    raise ProviderError(
                        f"provider rejected request: HTTP {response.status_code}"
                    )
            if attempt + 1 < self.max_attempts:
                self._sleep(self._delay(attempt, response))
        raise ProviderError(f"provider unavailable after {self.max_attempts} attempts ({last_error})")

    def _parse(self, payload: dict, batch: list[str]) -> list[np.ndarray]:
        data = payload.get("data")
        if not isinstance(data, list) or len(data) != len(batch):
            got = len(data) if isinstance(data, list) else "missing"
            raise ProviderIntegrityError(
                f"provider returned {got} vectors for {len(batch)} inputs"
            )
        rows: list = [None] * len(batch)
        for item in data:
            idx = item.get("index")
            vec = item.get("embedding")
            if not isinstance(idx, int) or not 0 <= idx < len(batch) or rows[idx] is not None:
                raise ProviderIntegrityError(f"provider returned bad or duplicate index {idx!r}")
            rows[idx] = np.asarray(vec, dtype=np.float64)
        dims = {row.shape for row in rows}
        if len(dims) != 1 or rows[0].ndim != 1:
            raise ProviderIntegrityError(f"provider returned mixed vector shapes: {dims}")
        return rows

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise DataError("embed requires at least one text")
        rows: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            batch = texts[start : start + self.batch_size]
            parsed = self._parse(self._post(batch), batch)
            for row in parsed:
                norm = float(np.linalg.norm(row))
                if norm == 0.0:
                    raise ProviderIntegrityError("provider returned a zero vector")
                rows.append(row / norm)
        dims = {row.shape[0] for row in rows}
        if len(dims) != 1:
            raise ProviderIntegrityError(f"provider returned mixed dimensions: {sorted(dims)}")
        return np.stack(rows)


class EmbeddingStore:
    """Append-only on-disk cache keyed by digest(provider_tag + text).

    Lookups are exact. Concurrent readers are safe; writes are serialized
    through a lock and appended a full line at a time.
    """

    def __init__(self, path):
        self.path = path
        self._entries: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._load()

    def _load(self) -> None:
        if not os.path.exists(self.path):
            return
        import json

        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    vec = np.asarray(rec["vector"], dtype=np.float64)
                    if vec.shape[0] != rec["dim"]:
                        raise KeyError("dim")
                    self._entries[rec["key"]] = vec
                except (ValueError, KeyError, TypeError) as exc:
                    raise DataError(f"{self.path}:{line_no}: bad cache record ({exc})") from exc

    def get(self, provider_tag: str, text: str) -> np.ndarray | None:
        return self._entries.get(cache_key(provider_tag, text))

    def put(self, provider_tag: str, text: str, vector: np.ndarray) -> None:
        import json

        key = cache_key(provider_tag, text)
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = np.asarray(vector, dtype=np.float64)
            rec = {
                "key": key,
                "provider_tag": provider_tag,
                "dim": int(vector.shape[0]),
                "vector": [float(x) for x in vector],
            }
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


def embed_batch(texts: list[str], provider, store: EmbeddingStore | None = None) -> np.ndarray:
    """Embed texts through the provider, serving repeats from the store.

    Returns an index-aligned (n, d) array of unit vectors. The provider is
    called once per distinct uncached text; results are written through.
    """
    if not texts:
        raise DataError("embed_batch requires at least one text")
    vectors: list = [None] * len(texts)
    missing: dict[str, list[int]] = {}
    for i, text in enumerate(texts):
        cached = store.get(provider.tag, text) if store is not None else None
        if cached is not None:
            vectors[i] = cached
        else:
            missing.setdefault(text, []).append(i)
    if missing:
        order = list(missing)
        fresh = provider.embed(order)
        for text, row in zip(order, fresh):
            if store is not None:
                store.put(provider.tag, text, row)
            for i in missing[text]:
                vectors[i] = row
    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise DataError(f"mixed embedding dimensions in one batch: {sorted(dims)}")
    out = np.stack(vectors)
    norms = np.linalg.norm(out, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-6):
        raise DataError("embedding store returned non-unit vectors")
    return out


@dataclass
class EmbeddingBank:
    """Per-id unit embeddings for one corpus, row-aligned with ids."""

    ids: tuple[str, ...]
    vectors: np.ndarray  # (n, d) float64, unit rows
    provider_tag: str
    corpus_digest: str = ""
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {exemplar_id: i for i, exemplar_id in enumerate(self.ids)}
        if self.vectors.shape[0] != len(self.ids):
            raise DataError("embedding bank rows do not align with ids")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def vector(self, exemplar_id: str) -> np.ndarray:
        try:
            return self.vectors[self._index[exemplar_id]]
        except KeyError:
            raise DataError(f"no embedding for id {exemplar_id!r}") from None

    def has(self, exemplar_id: str) -> bool:
        return exemplar_id in self._index

    def subset(self, ids) -> "EmbeddingBank":
        ids = tuple(ids)
        rows = np.stack([self.vector(i) for i in ids]) if ids else np.zeros((0, self.dim))
        return EmbeddingBank(ids, rows, self.provider_tag, self.corpus_digest)

    def save(self, path) -> None:
        header = {
            "kind": "embedding-bank",
            "format_version": FORMAT_VERSION,
            "provider_tag": self.provider_tag,
            "corpus_digest": self.corpus_digest,
            "dim": self.dim,
            "n": len(self.ids),
            "ids": list(self.ids),
        }
        rows = [[float(x) for x in row] for row in self.vectors]
        write_jsonl(path, header, rows)

    @classmethod
    def load(cls, path) -> "EmbeddingBank":
        header, rows = read_jsonl(path, expect_kind="embedding-bank")
        if len(rows) != header["n"]:
            raise DataError(f"{path}: expected {header['n']} rows, found {len(rows)}")
        vectors = np.asarray(rows, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] != header["dim"]:
            raise DataError(f"{path}: vector rows do not match declared dim {header['dim']}")
        return cls(
            ids=tuple(header["ids"]),
            vectors=vectors,
            provider_tag=header["provider_tag"],
            corpus_digest=header.get("corpus_digest", ""),
        )


def embed_corpus(corpus, provider, store: EmbeddingStore | None = None) -> EmbeddingBank:
    """Embedding bank over a corpus view's utterances."""
    exemplars = list(corpus)
    if not exemplars:
        raise DataError("cannot embed an empty corpus view")
    vectors = embed_batch([ex.utterance for ex in exemplars], provider, store)
    return EmbeddingBank(
        ids=tuple(ex.id for ex in exemplars),
        vectors=vectors,
        provider_tag=provider.tag,
        corpus_digest=getattr(corpus, "digest", ""),
    )
