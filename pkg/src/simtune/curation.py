"""Training-pair curation and ranking-benchmark construction.

Boundary curation picks, per anchor, the exemplars whose code is most
similar (positives) and, after a skip gap, the exemplars whose raw utterance
embedding looks most similar despite dissimilar code (negatives): the pairs a
transformation must unlearn. Benchmarks reuse the same machinery to draw
(reference, positive, negative) ranking triplets.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

import numpy as np

from .artifacts import FORMAT_VERSION, read_jsonl, write_jsonl
from .errors import DataError, PoolError

BENCHMARK_MODES = ("random", "boundary")
REDRAW_ATTEMPTS = 100
DEFAULT_PER_REF = 4


@dataclass(frozen=True)
class CurationParams:
    """top_k: positives (and negatives) kept per anchor; skip: gap between
    the positive block and the negative candidate pool."""

    top_k: int = 4
    skip: int = 4

    def __post_init__(self):
        if self.top_k < 1:
            raise DataError(f"top_k must be >= 1, got {self.top_k}")
        if self.skip < 0:
            raise DataError(f"skip must be >= 0, got {self.skip}")


@dataclass(frozen=True)
class TrainingTriplet:
    anchor_id: str
    other_id: str
    target: float  # code similarity of the pair
    kind: str  # "positive" | "negative" | "random"


@dataclass(frozen=True)
class RankingTriplet:
    ref_id: str
    pos_id: str
    neg_id: str
    s_pos: float
    s_neg: float
    mode: str


def child_seed(seed: int, ref_id: str) -> int:
    """Per-reference generator seed, stable across thread counts."""
    digest = hashlib.sha256(f"{seed}:{ref_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _pool_positions(exemplars, anchor_pos: int | None, anchor) -> np.ndarray:
    """Candidate positions: everything except the anchor itself and exact
    (utterance, code) duplicates of it."""
    keep = []
    for j, ex in enumerate(exemplars):
        if anchor_pos is not None and j == anchor_pos:
            continue
        if ex.utterance == anchor.utterance and ex.code == anchor.code:
            continue
        keep.append(j)
    return np.asarray(keep, dtype=np.intp)


def _rank(values: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Positions sorted by value descending, position ascending on ties."""
    order = np.lexsort((positions, -values))
    return positions[order]


def _boundary_sets(code_sims, cosines, positions, params):
    """(positive positions, negative positions) for one anchor.

    Positives are the top_k by code similarity; after skipping the next
    `skip` entries, the remainder is re-ranked by raw embedding cosine and
    the top_k of that become negatives.
    """
    ranked = _rank(code_sims, positions)
    positives = ranked[: params.top_k]
    remainder = ranked[params.top_k + params.skip :]
    if len(remainder) == 0:
        return positives, remainder
    index_of = {int(p): i for i, p in enumerate(positions)}
    rem_idx = np.asarray([index_of[int(p)] for p in remainder], dtype=np.intp)
    negatives = _rank(cosines[rem_idx], remainder)[: params.top_k]
    return positives, negatives


def _aligned_matrix(sim, ids) -> np.ndarray:
    index = {exemplar_id: p for p, exemplar_id in enumerate(sim.ids)}
    try:
        rows = [index[exemplar_id] for exemplar_id in ids]
    except KeyError as exc:
        raise DataError(f"id {exc.args[0]!r} missing from similarity matrix") from None
    return sim.values[np.ix_(rows, rows)]


def curate_training_triplets(view, sim, bank, params: CurationParams) -> list[TrainingTriplet]:
    """Boundary training set: per anchor, top_k positives by code similarity
    and top_k embedding-nearest negatives from beyond the skip gap. Output
    is exactly 2 * top_k * n triplets, in anchor order."""
    exemplars = list(view)
    n = len(exemplars)
    need = 2 * params.top_k + params.skip + 1
    if n < need:
        raise PoolError(f"curation needs at least {need} exemplars, corpus view has {n}")
    ids = [ex.id for ex in exemplars]
    code_sims = _aligned_matrix(sim, ids)
    vectors = np.stack([bank.vector(ex.id) for ex in exemplars])
    raw_cos = vectors @ vectors.T
    out: list[TrainingTriplet] = []
    for i, anchor in enumerate(exemplars):
        pool = _pool_positions(exemplars, i, anchor)
        if len(pool) < 2 * params.top_k + params.skip:
            raise PoolError(
                f"anchor {anchor.id!r} has only {len(pool)} candidates after duplicate "
                f"exclusion; needs {2 * params.top_k + params.skip}"
            )
        positives, negatives = _boundary_sets(code_sims[i, pool], raw_cos[i, pool], pool, params)
        for j in positives:
            out.append(TrainingTriplet(anchor.id, ids[j], float(code_sims[i, j]), "positive"))
        for j in negatives:
            out.append(TrainingTriplet(anchor.id, ids[j], float(code_sims[i, j]), "negative"))
    return out


def dedupe_triplets(triplets: list[TrainingTriplet]) -> list[TrainingTriplet]:
    """Collapse unordered (anchor, other) duplicates, keeping a positive over
    a negative when both arise. Optional: the default pipeline keeps the full
    2 * top_k * n set so sizes stay comparable across curation strategies."""
    chosen: dict[tuple, TrainingTriplet] = {}
    order: list[tuple] = []
    rank = {"positive": 0, "negative": 1, "random": 2}
    for t in triplets:
        key = (t.anchor_id, t.other_id) if t.anchor_id <= t.other_id else (t.other_id, t.anchor_id)
        prev = chosen.get(key)
        if prev is None:
            chosen[key] = t
            order.append(key)
        elif rank.get(t.kind, 3) < rank.get(prev.kind, 3):
            chosen[key] = t
    return [chosen[key] for key in order]


def random_training_triplets(
    view, sim, params: CurationParams, seed: int, multiplier: int = 1
) -> list[TrainingTriplet]:
    """Uniformly random distinct pairs, size-matched to boundary curation
    (2 * top_k * n * multiplier)."""
    exemplars = list(view)
    n = len(exemplars)
    if n < 2:
        raise PoolError("random curation needs at least 2 exemplars")
    ids = [ex.id for ex in exemplars]
    code_sims = _aligned_matrix(sim, ids)
    rng = random.Random(seed)
    count = 2 * params.top_k * n * multiplier
    out = []
    for _ in range(count):
        i = rng.randrange(n)
        j = rng.randrange(n - 1)
        if j >= i:
            j += 1
        out.append(TrainingTriplet(ids[i], ids[j], float(code_sims[i, j]), "random"))
    return out


def positive_only_training_triplets(
    view, sim, params: CurationParams, seed: int
) -> list[TrainingTriplet]:
    """Top_k code-similar positives per anchor plus uniformly random
    negatives (no boundary selection), size-matched to boundary curation."""
    exemplars = list(view)
    n = len(exemplars)
    need = params.top_k + 1
    if n < need:
        raise PoolError(f"positive-only curation needs at least {need} exemplars, got {n}")
    ids = [ex.id for ex in exemplars]
    code_sims = _aligned_matrix(sim, ids)
    out = []
    for i, anchor in enumerate(exemplars):
        pool = _pool_positions(exemplars, i, anchor)
        if len(pool) < params.top_k:
            raise PoolError(f"anchor {anchor.id!r} has fewer than top_k candidates")
        ranked = _rank(code_sims[i, pool], pool)
        positives = set(int(p) for p in ranked[: params.top_k])
        for j in sorted(positives):
            out.append(TrainingTriplet(anchor.id, ids[j], float(code_sims[i, j]), "positive"))
        rest = [int(p) for p in pool if int(p) not in positives]
        rng = random.Random(child_seed(seed, anchor.id))
        for _ in range(params.top_k):
            j = rest[rng.randrange(len(rest))] if rest else int(ranked[0])
            out.append(TrainingTriplet(anchor.id, ids[j], float(code_sims[i, j]), "negative"))
    return out


def save_triplets(path, triplets, corpus_digest: str, provider_tag: str, params: CurationParams,
                  metric: str = "", preset: str = "", strategy: str = "boundary") -> None:
    header = {
        "kind": "training-triplets",
        "format_version": FORMAT_VERSION,
        "corpus_digest": corpus_digest,
        "provider_tag": provider_tag,
        "top_k": params.top_k,
        "skip": params.skip,
        "metric": metric,
        "preset": preset,
        "strategy": strategy,
        "n": len(triplets),
    }
    rows = [
        {"anchor_id": t.anchor_id, "other_id": t.other_id, "target": t.target, "kind": t.kind}
        for t in triplets
    ]
    write_jsonl(path, header, rows)


def load_triplets(path):
    """(header, triplets) from a triplet file."""
    header, rows = read_jsonl(path, expect_kind="training-triplets")
    triplets = []
    for line_no, row in enumerate(rows, start=2):
        try:
            triplets.append(
                TrainingTriplet(row["anchor_id"], row["other_id"], float(row["target"]), row["kind"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{line_no}: bad triplet record ({exc})") from exc
    return header, triplets


@dataclass
class RankingBenchmark:
    """Pairwise ranking benchmark plus the metadata needed to reproduce it."""

    triplets: list[RankingTriplet]
    seed: int
    mode: str
    per_ref: int
    params: CurationParams
    refs_digest: str = ""
    cands_digest: str = ""
    ref_split: str = ""
    cand_split: str = ""
    skipped_refs: int = 0
    metric: str = ""
    preset: str = ""

    def __len__(self) -> int:
        return len(self.triplets)

    def save(self, path) -> None:
        header = {
            "kind": "ranking-benchmark",
            "format_version": FORMAT_VERSION,
            "seed": self.seed,
            "mode": self.mode,
            "per_ref": self.per_ref,
            "top_k": self.params.top_k,
            "skip": self.params.skip,
            "refs_digest": self.refs_digest,
            "cands_digest": self.cands_digest,
            "ref_split": self.ref_split,
            "cand_split": self.cand_split,
            "skipped_refs": self.skipped_refs,
            "metric": self.metric,
            "preset": self.preset,
            "n": len(self.triplets),
        }
        rows = [
            {
                "ref_id": t.ref_id,
                "pos_id": t.pos_id,
                "neg_id": t.neg_id,
                "s_pos": t.s_pos,
                "s_neg": t.s_neg,
                "mode": t.mode,
            }
            for t in self.triplets
        ]
        write_jsonl(path, header, rows)

    @classmethod
    def load(cls, path) -> "RankingBenchmark":
        header, rows = read_jsonl(path, expect_kind="ranking-benchmark")
        triplets = []
        for line_no, row in enumerate(rows, start=2):
            try:
                triplets.append(
                    RankingTriplet(
                        row["ref_id"], row["pos_id"], row["neg_id"],
                        float(row["s_pos"]), float(row["s_neg"]), row["mode"],
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{line_no}: bad benchmark record ({exc})") from exc
        return cls(
            triplets=triplets,
            seed=header["seed"],
            mode=header["mode"],
            per_ref=header["per_ref"],
            params=CurationParams(top_k=header["top_k"], skip=header["skip"]),
            refs_digest=header.get("refs_digest", ""),
            cands_digest=header.get("cands_digest", ""),
            ref_split=header.get("ref_split", ""),
            cand_split=header.get("cand_split", ""),
            skipped_refs=header.get("skipped_refs", 0),
            metric=header.get("metric", ""),
            preset=header.get("preset", ""),
        )


def _draw_random_triplet(rng, ref, pool, sim_fn, mode):
    for _ in range(REDRAW_ATTEMPTS):
        a, b = rng.sample(range(len(pool)), 2)
        s_a = sim_fn(ref.code, pool[a].code)
        s_b = sim_fn(ref.code, pool[b].code)
        if s_a == s_b:
            continue
        if s_a > s_b:
            return RankingTriplet(ref.id, pool[a].id, pool[b].id, s_a, s_b, mode)
        return RankingTriplet(ref.id, pool[b].id, pool[a].id, s_b, s_a, mode)
    return None


def _draw_boundary_triplet(rng, ref, pos_set, neg_set, sim_fn, mode):
    for _ in range(REDRAW_ATTEMPTS):
        pos = pos_set[rng.randrange(len(pos_set))]
        neg = neg_set[rng.randrange(len(neg_set))]
        s_pos = sim_fn(ref.code, pos.code)
        s_neg = sim_fn(ref.code, neg.code)
        if s_pos > s_neg:
            return RankingTriplet(ref.id, pos.id, neg.id, s_pos, s_neg, mode)
    return None


def build_ranking_benchmark(
    refs,
    cands,
    sim_fn,
    bank,
    params: CurationParams,
    mode: str,
    seed: int,
    per_ref: int = DEFAULT_PER_REF,
) -> RankingBenchmark:
    """Draw per_ref (ref, pos, neg) triplets per reference.

    random mode: uniform candidate pairs, kept only on a strict code
    similarity split (the larger side becomes pos). boundary mode: pos
    uniform over the reference's top_k candidates by code similarity, neg
    uniform over its boundary-negative set. References that cannot fill
    their quota inside the attempt bound are skipped entirely and counted.
    """
    if mode not in BENCHMARK_MODES:
        raise DataError(f"unknown benchmark mode {mode!r}; expected one of {BENCHMARK_MODES}")
    if per_ref < 1:
        raise DataError(f"per_ref must be >= 1, got {per_ref}")
    cand_list = list(cands)
    if len(cand_list) < 2:
        raise PoolError("benchmark candidate pool needs at least 2 exemplars")
    cand_vectors = np.stack([bank.vector(ex.id) for ex in cand_list])
    triplets: list[RankingTriplet] = []
    skipped = 0
    for ref in refs:
        rng = random.Random(child_seed(seed, ref.id))
        # Exclude the reference itself (when the pools overlap) and its exact
        # (utterance, code) duplicates from its own candidate pool.
        kept = _pool_positions(cand_list, None, ref)
        pool_pos = np.asarray(
            [int(p) for p in kept if cand_list[int(p)].id != ref.id], dtype=np.intp
        )
        pool = [cand_list[int(p)] for p in pool_pos]
        drawn: list[RankingTriplet] = []
        if mode == "random":
            if len(pool) < 2:
                skipped += 1
                continue
            for _ in range(per_ref):
                t = _draw_random_triplet(rng, ref, pool, sim_fn, mode)
                if t is None:
                    break
                drawn.append(t)
        else:
            if len(pool) < params.top_k + params.skip + 1:
                skipped += 1
                continue
            code_sims = np.asarray([sim_fn(ref.code, ex.code) for ex in pool])
            ref_vec = bank.vector(ref.id)
            cosines = cand_vectors[pool_pos] @ ref_vec
            positives, negatives = _boundary_sets(code_sims, cosines, pool_pos, params)
            if len(positives) == 0 or len(negatives) == 0:
                skipped += 1
                continue
            pos_set = [cand_list[int(p)] for p in positives]
            neg_set = [cand_list[int(p)] for p in negatives]
            for _ in range(per_ref):
                t = _draw_boundary_triplet(rng, ref, pos_set, neg_set, sim_fn, mode)
                if t is None:
                    break
                drawn.append(t)
        if len(drawn) == per_ref:
            triplets.extend(drawn)
        else:
            skipped += 1
    return RankingBenchmark(
        triplets=triplets,
        seed=seed,
        mode=mode,
        per_ref=per_ref,
        params=params,
        refs_digest=getattr(refs, "digest", ""),
        cands_digest=getattr(cands, "digest", ""),
        ref_split=getattr(refs, "split_label", ""),
        cand_split=getattr(cands, "split_label", ""),
        skipped_refs=skipped,
        metric=getattr(sim_fn, "metric", ""),
        preset=getattr(sim_fn, "preset", ""),
    )
