"""Exemplar retrieval over transformed embeddings.

An index holds the bank's transformed, re-normalized vectors together with
the digest of the transform that produced them; selection refuses an index
whose digest does not match the supplied model. Scoring is an exact
brute-force scan: banks are small and determinism matters more than speed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .artifacts import FORMAT_VERSION, atomic_write_text, read_jsonl, write_jsonl
from .embedding import embed_batch
from .errors import DataError, MismatchError, TemplateError
from .transform import DEGENERATE_NORM, IDENTITY_DIGEST, forward_batch

DEFAULT_K = 8

EXAMPLE_PLACEHOLDERS = ("{{utterance}}", "{{code}}")
TARGET_PLACEHOLDER = "{{target}}"

DEFAULT_TEMPLATE = {
    "example_block": "Request: {{utterance}}\nCode: {{code}}",
    "delimiter": "\n\n",
    "target_block": "Request: {{target}}\nCode:",
}


@dataclass(frozen=True)
class PromptTemplate:
    """Few-shot prompt layout: example blocks joined by a delimiter, then
    the target block."""

    example_block: str
    delimiter: str
    target_block: str

    def __post_init__(self):
        for placeholder in EXAMPLE_PLACEHOLDERS:
            if placeholder not in self.example_block:
                raise TemplateError(f"example_block is missing {placeholder}")
        if TARGET_PLACEHOLDER not in self.target_block:
            raise TemplateError(f"target_block is missing {TARGET_PLACEHOLDER}")
        if not self.delimiter:
            raise TemplateError("delimiter must be non-empty")

    @classmethod
    def default(cls) -> "PromptTemplate":
        return cls(**DEFAULT_TEMPLATE)

    @classmethod
    def load(cls, path) -> "PromptTemplate":
        with open(path, encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except ValueError as exc:
                raise TemplateError(f"{path}: not a valid template file ({exc})") from exc
        if not isinstance(payload, dict):
            raise TemplateError(f"{path}: template file must hold one object")
        try:
            return cls(
                example_block=payload["example_block"],
                delimiter=payload["delimiter"],
                target_block=payload["target_block"],
            )
        except KeyError as exc:
            raise TemplateError(f"{path}: template file is missing field {exc.args[0]!r}") from None

    def save(self, path) -> None:
        payload = {
            "example_block": self.example_block,
            "delimiter": self.delimiter,
            "target_block": self.target_block,
        }
        atomic_write_text(path, json.dumps(payload, ensure_ascii=False, indent=2) + "\n")


@dataclass
class RetrievalIndex:
    """Transformed, unit-normalized bank vectors bound to a model digest."""

    ids: tuple[str, ...]
    vectors: np.ndarray  # (n, output_dim) float64, unit rows
    model_digest: str
    provider_tag: str
    corpus_digest: str = ""
    excluded_ids: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def save(self, path) -> None:
        header = {
            "kind": "retrieval-index",
            "format_version": FORMAT_VERSION,
            "ids": list(self.ids),
            "dim": self.dim,
            "model_digest": self.model_digest,
            "provider_tag": self.provider_tag,
            "corpus_digest": self.corpus_digest,
            "excluded_ids": list(self.excluded_ids),
            "n": len(self.ids),
        }
        rows = [[float(x) for x in row] for row in self.vectors]
        write_jsonl(path, header, rows)

    @classmethod
    def load(cls, path) -> "RetrievalIndex":
        header, rows = read_jsonl(path, expect_kind="retrieval-index")
        if len(rows) != header["n"]:
            raise DataError(f"{path}: expected {header['n']} rows, found {len(rows)}")
        vectors = np.asarray(rows, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] != header["dim"]:
            raise DataError(f"{path}: rows do not match declared dim {header['dim']}")
        return cls(
            ids=tuple(header["ids"]),
            vectors=vectors,
            model_digest=header["model_digest"],
            provider_tag=header["provider_tag"],
            corpus_digest=header.get("corpus_digest", ""),
            excluded_ids=tuple(header.get("excluded_ids", [])),
        )


@dataclass
class SelectionResult:
    target: str
    items: list  # [(id, score)], scores non-increasing
    model_digest: str
    provider_tag: str
    k_requested: int

    @property
    def ids(self) -> list[str]:
        return [item_id for item_id, _ in self.items]

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "items": [{"id": item_id, "score": score} for item_id, score in self.items],
            "model_digest": self.model_digest,
            "provider_tag": self.provider_tag,
            "k_requested": self.k_requested,
        }


def build_index(bank_view, bank, params=None) -> RetrievalIndex:
    """Transform every bank embedding (identity when params is None),
    re-normalize, and store row-aligned with ids. Exemplars whose transformed
    vector is degenerate are excluded and reported via excluded_ids."""
    exemplars = list(bank_view)
    if not exemplars:
        raise DataError("cannot build an index over an empty corpus view")
    ids = [ex.id for ex in exemplars]
    rows = np.stack([bank.vector(i) for i in ids])
    if params is not None:
        rows = forward_batch(params, rows)
    norms = np.linalg.norm(rows, axis=1)
    keep = norms >= DEGENERATE_NORM
    if not np.any(keep):
        raise DataError("all transformed vectors are degenerate; index would be empty")
    excluded = tuple(i for i, ok in zip(ids, keep) if not ok)
    kept_ids = tuple(i for i, ok in zip(ids, keep) if ok)
    vectors = rows[keep] / norms[keep][:, None]
    return RetrievalIndex(
        ids=kept_ids,
        vectors=vectors,
        model_digest=params.digest() if params is not None else IDENTITY_DIGEST,
        provider_tag=bank.provider_tag,
        corpus_digest=getattr(bank_view, "digest", ""),
        excluded_ids=excluded,
    )


def transform_query(vector: np.ndarray, params=None) -> np.ndarray:
    """Unit-normalized transformed query vector."""
    row = np.asarray(vector, dtype=np.float64)
    if params is not None:
        row = forward_batch(params, row[None, :])[0]
    norm = float(np.linalg.norm(row))
    if norm < DEGENERATE_NORM:
        raise DataError("query vector is degenerate after transformation")
    return row / norm


def select_examples(index: RetrievalIndex, target: str, provider, params=None,
                    k: int = DEFAULT_K, store=None) -> SelectionResult:
    """Top-k bank exemplars for a target utterance by transformed cosine.

    Exact scan over the index; ties broken by bank position. Refuses an
    index built with a different transform or embedding provider.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise DataError("cannot select from an empty index")
    expected = params.digest() if params is not None else IDENTITY_DIGEST
    if expected != index.model_digest:
        raise MismatchError(
            f"model digest {expected} does not match index digest {index.model_digest}; "
            "rebuild the index with this model"
        )
    if provider.tag != index.provider_tag:
        raise MismatchError(
            f"provider {provider.tag!r} does not match index provider {index.provider_tag!r}"
        )
    query = transform_query(embed_batch([target], provider, store)[0], params)
    scores = index.vectors @ query
    order = np.lexsort((np.arange(len(scores)), -scores))
    top = order[: min(k, len(order))]
    items = [(index.ids[int(i)], float(scores[int(i)])) for i in top]
    return SelectionResult(
        target=target,
        items=items,
        model_digest=index.model_digest,
        provider_tag=index.provider_tag,
        k_requested=k,
    )


def assemble_prompt(result: SelectionResult, corpus, target: str,
                    template: PromptTemplate | None = None) -> str:
    """Render selected examples in ascending score order (most similar
    example adjacent to the target slot), then the target block."""
    if template is None:
        template = PromptTemplate.default()
    blocks = []
    for item_id, _score in reversed(result.items):
        ex = corpus.by_id(item_id)
        block = template.example_block.replace("{{utterance}}", ex.utterance)
        block = block.replace("{{code}}", ex.code)
        blocks.append(block)
    blocks.append(template.target_block.replace(TARGET_PLACEHOLDER, target))
    return template.delimiter.join(blocks)
