"""Exemplar banks: loading, validation, split views, content digests.

A corpus file is line-delimited JSON, one record per line:

    {"id": "...", "utterance": "...", "code": "...", "split": "train"|"test"}

Unknown extra fields are ignored. Iteration order is file order; every
position-based tie-break downstream is therefore reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .artifacts import atomic_write_text, canonical_json, sha256_text
from .errors import CorpusError, DataError

SPLITS = ("train", "test")

_REQUIRED_FIELDS = ("id", "utterance", "code", "split")


@dataclass(frozen=True)
class Exemplar:
    """One (utterance, code) pair; the unit of retrieval."""

    id: str
    utterance: str
    code: str
    split: str


def _canonical_record(ex: Exemplar) -> str:
    return canonical_json(
        {"id": ex.id, "utterance": ex.utterance, "code": ex.code, "split": ex.split}
    )


def content_digest(exemplars: list[Exemplar]) -> str:
    """Digest over canonicalized records; identifies corpus content."""
    return sha256_text("\n".join(_canonical_record(ex) for ex in exemplars))


@dataclass
class Corpus:
    """Immutable, ordered bank of exemplars.

    A split view produced by select_split keeps the parent's digest so that
    derived artifacts always reference the source file's content.
    """

    exemplars: list[Exemplar]
    source: str = "<memory>"
    digest: str = ""
    split_filter: str | None = None
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.digest:
            self.digest = content_digest(self.exemplars)
        self._index = {ex.id: i for i, ex in enumerate(self.exemplars)}

    def __len__(self) -> int:
        return len(self.exemplars)

    def __iter__(self):
        return iter(self.exemplars)

    def __getitem__(self, i: int) -> Exemplar:
        return self.exemplars[i]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(ex.id for ex in self.exemplars)

    def by_id(self, exemplar_id: str) -> Exemplar:
        try:
            return self.exemplars[self._index[exemplar_id]]
        except KeyError:
            raise DataError(f"id {exemplar_id!r} does not resolve in this corpus") from None

    def select_split(self, split: str) -> "Corpus":
        """View containing exactly the exemplars with the given split, in order."""
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}; expected one of {SPLITS}")
        return Corpus(
            exemplars=[ex for ex in self.exemplars if ex.split == split],
            source=self.source,
            digest=self.digest,
            split_filter=split,
        )

    @property
    def split_label(self) -> str:
        return self.split_filter or "all"


def _validate_record(record: dict, line_no: int, path: str) -> Exemplar:
    if not isinstance(record, dict):
        raise CorpusError(f"{path}:{line_no}: record is not an object")
    for name in _REQUIRED_FIELDS:
        if name not in record:
            raise CorpusError(f"{path}:{line_no}: missing field {name!r}")
        if not isinstance(record[name], str):
            raise CorpusError(f"{path}:{line_no}: field {name!r} must be a string")
    if not record["id"]:
        raise CorpusError(f"{path}:{line_no}: empty id")
    if not record["utterance"].strip():
        raise CorpusError(f"{path}:{line_no}: utterance is empty after trimming")
    if not record["code"].strip():
        raise CorpusError(f"{path}:{line_no}: code is empty after trimming")
    if record["split"] not in SPLITS:
        raise CorpusError(
            f"{path}:{line_no}: unknown split {record['split']!r}; expected one of {SPLITS}"
        )
    return Exemplar(
        id=record["id"],
        utterance=record["utterance"],
        code=record["code"],
        split=record["split"],
    )


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a line-delimited corpus file.

    Rejects malformed records (with line numbers), duplicate ids, and unknown
    split labels. Unknown extra fields are ignored.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    exemplars: list[Exemplar] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            ex = _validate_record(record, line_no, str(path))
            if ex.id in seen:
                raise CorpusError(
                    f"{path}:{line_no}: duplicate id {ex.id!r} (first seen on line {seen[ex.id]})"
                )
            seen[ex.id] = line_no
            exemplars.append(ex)
    return Corpus(exemplars=exemplars, source=str(path))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus file that load_corpus round-trips identically."""
    lines = [
        json.dumps(
            {"id": ex.id, "utterance": ex.utterance, "code": ex.code, "split": ex.split},
            ensure_ascii=False,
        )
        for ex in corpus
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")
