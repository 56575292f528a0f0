"""Code-side similarity between snippets.

Three metrics, all returning values in [0, 1]:

  * edit      -- normalized Levenshtein similarity over raw characters
  * sketch    -- normalized Levenshtein similarity after masking string and
                 number literals (and configured identifier classes)
  * template  -- token-level similarity over command templates with operand
                 tokens masked (shell-style input)

Masking is idempotent: sketching an already-sketched snippet is a no-op.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass

import numpy as np

from .errors import DataError, MaskingError

METRICS = ("edit", "sketch", "template")

ARG_TOKEN = "<ARG>"
_SEGMENT_SEPARATORS = ("|", ";")

_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?")


@dataclass(frozen=True)
class MaskClass:
    """One identifier class to mask: a name, an anchored regex, a token."""

    name: str
    pattern: str
    token: str


@dataclass(frozen=True)
class MaskingConfig:
    """Lexer rules for sketching code.

    Replacement tokens must be pairwise distinct and must not themselves
    contain maskable text, so masking is idempotent.
    """

    string_delimiters: tuple[str, ...] = ('"', "'")
    escape_style: str = "backslash"  # "backslash" | "double"
    string_token: str = "<STR>"
    number_token: str = "<NUM>"
    identifier_classes: tuple[MaskClass, ...] = ()
    on_unterminated: str = "mask_to_eol"  # "mask_to_eol" | "error"

    def validate(self) -> None:
        tokens = [self.string_token, self.number_token] + [
            c.token for c in self.identifier_classes
        ]
        if len(set(tokens)) != len(tokens):
            raise DataError(f"masking config has duplicate replacement tokens: {tokens}")
        if self.escape_style not in ("backslash", "double"):
            raise DataError(f"unknown escape style {self.escape_style!r}")
        if self.on_unterminated not in ("mask_to_eol", "error"):
            raise DataError(f"unknown unterminated-string policy {self.on_unterminated!r}")
        for d in self.string_delimiters:
            if len(d) != 1:
                raise DataError(f"string delimiter must be a single character, got {d!r}")


MASKING_PRESETS: dict[str, MaskingConfig] = {
    # Strings and numbers only.
    "generic": MaskingConfig(),
    # Double-quoted strings with "" escaping, numbers, bracketed column
    # references, and #"..." quoted identifiers.
    "m": MaskingConfig(
        string_delimiters=('"',),
        escape_style="double",
        identifier_classes=(
            MaskClass("quoted-identifier", r'#"(?:[^"]|"")*"', "<ID>"),
            MaskClass("column-reference", r"\[[^\[\]]*\]", "<COL>"),
        ),
    ),
    # Shell commands are compared with the template metric; sketching them
    # (if requested) masks strings and numbers only.
    "bash": MaskingConfig(),
}


def masking_preset(name: str) -> MaskingConfig:
    try:
        return MASKING_PRESETS[name]
    except KeyError:
        raise DataError(
            f"unknown masking preset {name!r}; available: {sorted(MASKING_PRESETS)}"
        ) from None


@functools.lru_cache(maxsize=32)
def _compiled_classes(cfg: MaskingConfig) -> tuple[tuple[re.Pattern, str], ...]:
    return tuple((re.compile(c.pattern), c.token) for c in cfg.identifier_classes)


def _scan_string(code: str, start: int, quote: str, escape_style: str) -> int | None:
    """Index just past the closing quote, or None if unterminated."""
    j = start + 1
    n = len(code)
    while j < n:
        ch = code[j]
        if escape_style == "backslash" and ch == "\\":
            j += 2
            continue
        if ch == quote:
            if escape_style == "double" and j + 1 < n and code[j + 1] == quote:
                j += 2
                continue
            return j + 1
        j += 1
    return None


def sketch(code: str, cfg: MaskingConfig | None = None) -> str:
    """Mask string literals, number literals, and configured identifiers.

    All other characters are preserved. Unterminated string literals follow
    cfg.on_unterminated: mask to end of line and continue (default), or raise
    MaskingError with the offending offset.
    """
    if cfg is None:
        cfg = MASKING_PRESETS["generic"]
    cfg.validate()
    classes = _compiled_classes(cfg)
    out: list[str] = []
    i = 0
    n = len(code)
    while i < n:
        matched = False
        for rx, token in classes:
            m = rx.match(code, i)
            if m and m.end() > i:
                out.append(token)
                i = m.end()
                matched = True
                break
        if matched:
            continue
        ch = code[i]
        if ch in cfg.string_delimiters:
            end = _scan_string(code, i, ch, cfg.escape_style)
            if end is None:
                if cfg.on_unterminated == "error":
                    raise MaskingError(f"unterminated string literal at offset {i}", offset=i)
                eol = code.find("\n", i)
                out.append(cfg.string_token)
                i = n if eol == -1 else eol
            else:
                out.append(cfg.string_token)
                i = end
        elif ch.isdigit() and (i == 0 or not (code[i - 1].isalnum() or code[i - 1] == "_")):
            m = _NUMBER_RE.match(code, i)
            out.append(cfg.number_token)
            i = m.end()
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def levenshtein(a, b) -> int:
    """Unit-cost edit distance over two sequences (strings or token lists)."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    if lb > la:
        a, b = b, a
        la, lb = lb, la
    prev = list(range(lb + 1))
    cur = [0] * (lb + 1)
    for i in range(1, la + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, lb + 1):
            sub = prev[j - 1] + (ai != b[j - 1])
            dele = prev[j] + 1
            ins = cur[j - 1] + 1
            cur[j] = sub if sub <= dele and sub <= ins else (dele if dele <= ins else ins)
        prev, cur = cur, prev
    return prev[lb]


def normalized_edit_similarity(a, b) -> float:
    """1 - L(a, b) / max(|a|, |b|); 1.0 when both sequences are empty."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def sketch_match(c1: str, c2: str, cfg: MaskingConfig | None = None) -> float:
    """Normalized edit similarity of the two snippets' sketches."""
    return normalized_edit_similarity(sketch(c1, cfg), sketch(c2, cfg))


def template_tokens(cmd: str) -> list[str]:
    """Whitespace tokens with operand values masked.

    Command heads (first token of each pipe/semicolon segment), the
    separators themselves, and flag tokens beginning with '-' stay literal;
    every other token becomes ARG_TOKEN.
    """
    out: list[str] = []
    head = True
    for tok in cmd.split():
        if tok in _SEGMENT_SEPARATORS:
            out.append(tok)
            head = True
        elif head:
            out.append(tok)
            head = False
        elif tok.startswith("-"):
            out.append(tok)
        else:
            out.append(ARG_TOKEN)
    return out


def template_match(c1: str, c2: str) -> float:
    """Token-level normalized edit similarity over command templates."""
    return normalized_edit_similarity(template_tokens(c1), template_tokens(c2))


@dataclass
class SimilarityMatrix:
    """Dense symmetric code-similarity matrix over one corpus view."""

    ids: tuple[str, ...]
    values: np.ndarray  # (n, n) float64, unit diagonal
    metric: str
    corpus_digest: str = ""
    preset: str = ""

    def __post_init__(self):
        self._index = {exemplar_id: i for i, exemplar_id in enumerate(self.ids)}

    def pair(self, id_a: str, id_b: str) -> float:
        try:
            return float(self.values[self._index[id_a], self._index[id_b]])
        except KeyError as exc:
            raise DataError(f"id {exc.args[0]!r} not covered by this similarity matrix") from None

    def save(self, path) -> None:
        """Header record, then one JSON array per row: the strict upper
        triangle (entries j > i); the diagonal is implicitly 1.0."""
        from .artifacts import FORMAT_VERSION, write_jsonl

        header = {
            "kind": "similarity-matrix",
            "format_version": FORMAT_VERSION,
            "metric": self.metric,
            "preset": self.preset,
            "corpus_digest": self.corpus_digest,
            "n": len(self.ids),
            "ids": list(self.ids),
        }
        rows = [[float(v) for v in self.values[i, i + 1 :]] for i in range(len(self.ids))]
        write_jsonl(path, header, rows)

    @classmethod
    def load(cls, path) -> "SimilarityMatrix":
        from .artifacts import read_jsonl

        header, rows = read_jsonl(path, expect_kind="similarity-matrix")
        n = header["n"]
        if len(rows) != n:
            raise DataError(f"{path}: expected {n} rows, found {len(rows)}")
        values = np.ones((n, n), dtype=np.float64)
        for i, row in enumerate(rows):
            if len(row) != n - i - 1:
                raise DataError(f"{path}: row {i} has wrong length")
            values[i, i + 1 :] = row
            values[i + 1 :, i] = row
        return cls(
            ids=tuple(header["ids"]),
            values=values,
            metric=header["metric"],
            corpus_digest=header.get("corpus_digest", ""),
            preset=header.get("preset", ""),
        )


def _metric_keys(exemplars, metric: str, cfg: MaskingConfig | None):
    """Per-exemplar comparison keys for the chosen metric."""
    if metric == "edit":
        return [ex.code for ex in exemplars]
    if metric == "sketch":
        keys = []
        for ex in exemplars:
            try:
                keys.append(sketch(ex.code, cfg))
            except MaskingError as exc:
                raise DataError(f"masking failed for exemplar {ex.id!r}: {exc}") from exc
        return keys
    if metric == "template":
        return [tuple(template_tokens(ex.code)) for ex in exemplars]
    raise DataError(f"unknown metric {metric!r}; expected one of {METRICS}")


def similarity_matrix(
    view, metric: str, cfg: MaskingConfig | None = None, preset: str = ""
) -> SimilarityMatrix:
    """Full symmetric similarity matrix over a corpus view.

    Identical comparison keys are grouped so each distinct pair is computed
    once; the result is identical to direct pairwise calls.
    """
    exemplars = list(view)
    if not exemplars:
        raise DataError("similarity_matrix requires a non-empty corpus view")
    keys = _metric_keys(exemplars, metric, cfg)
    uniq: dict = {}
    inverse = np.empty(len(keys), dtype=np.intp)
    for i, key in enumerate(keys):
        inverse[i] = uniq.setdefault(key, len(uniq))
    uniq_keys = list(uniq)
    k = len(uniq_keys)
    uvals = np.ones((k, k), dtype=np.float64)
    for a in range(k):
        for b in range(a + 1, k):
            s = normalized_edit_similarity(uniq_keys[a], uniq_keys[b])
            uvals[a, b] = uvals[b, a] = s
    values = uvals[np.ix_(inverse, inverse)]
    np.fill_diagonal(values, 1.0)
    return SimilarityMatrix(
        ids=tuple(ex.id for ex in exemplars),
        values=values,
        metric=metric,
        corpus_digest=getattr(view, "digest", ""),
        preset=preset,
    )


class PairMetric:
    """Memoizing code-pair similarity callable for one metric and config.

    Callable on raw code texts; caches per-snippet comparison keys and
    per-pair similarities, so benchmark builders and oracle scorers that
    revisit the same pairs pay for each distance once.
    """

    def __init__(self, metric: str, cfg: MaskingConfig | None = None, preset: str = ""):
        if metric not in METRICS:
            raise DataError(f"unknown metric {metric!r}; expected one of {METRICS}")
        self.metric = metric
        self.cfg = cfg
        self.preset = preset
        self._keys: dict[str, object] = {}
        self._memo: dict[tuple, float] = {}

    def key(self, code: str):
        k = self._keys.get(code)
        if k is None:
            if self.metric == "edit":
                k = code
            elif self.metric == "sketch":
                k = sketch(code, self.cfg)
            else:
                k = tuple(template_tokens(code))
            self._keys[code] = k
        return k

    def __call__(self, code_a: str, code_b: str) -> float:
        ka, kb = self.key(code_a), self.key(code_b)
        if kb < ka:
            ka, kb = kb, ka
        memo_key = (ka, kb)
        s = self._memo.get(memo_key)
        if s is None:
            s = normalized_edit_similarity(ka, kb)
            self._memo[memo_key] = s
        return s
