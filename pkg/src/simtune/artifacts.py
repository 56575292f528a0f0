"""Pipeline artifact plumbing: digests, atomic writes, JSONL files, manifest.

Every derived artifact carries the digests of the inputs that produced it, so
stale derivations are detectable before they poison a downstream stage.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable

from .errors import DataError

FORMAT_VERSION = 1


def canonical_json(obj: Any) -> str:
    """Stable JSON encoding used for content digests."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory; partial writes never land."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_record(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False)


def write_jsonl(path: str | Path, header: dict | None, rows: Iterable[Any]) -> None:
    lines = []
    if header is not None:
        lines.append(dump_record(header))
    for row in rows:
        lines.append(dump_record(row) if isinstance(row, dict) else json.dumps(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_jsonl(path: str | Path, expect_kind: str | None = None) -> tuple[dict, list]:
    """Read a header-led JSONL artifact; returns (header, rows)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"artifact not found: {path}")
    with open(path, encoding="utf-8") as f:
        lines = [ln for ln in (line.rstrip("\n") for line in f) if ln.strip()]
    if not lines:
        raise DataError(f"empty artifact: {path}")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: bad header line: {exc}") from exc
    if expect_kind is not None and header.get("kind") != expect_kind:
        raise DataError(
            f"{path}: expected a {expect_kind!r} artifact, found {header.get('kind')!r}"
        )
    rows = []
    for n, line in enumerate(lines[1:], start=2):
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{n}: bad record: {exc}") from exc
    return header, rows


def append_manifest(outdir: str | Path, entry: dict) -> None:
    """Append one run record to the output directory's manifest log."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "manifest.jsonl", "a", encoding="utf-8") as f:
        f.write(dump_record(entry) + "\n")
