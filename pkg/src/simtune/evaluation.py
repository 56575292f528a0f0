"""Pairwise-ranking evaluation: scorers, accuracy reports, the split sweep,
and the curation-strategy ablation.

A scorer maps an (exemplar id, exemplar id) pair to a similarity; accuracy
over a benchmark is the fraction of (ref, pos, neg) triplets where the
scorer ranks pos above neg. Exact ties count as incorrect and are reported
separately, so a constant scorer lands at zero rather than a coin flip.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curation import (
    CurationParams,
    build_ranking_benchmark,
    curate_training_triplets,
    positive_only_training_triplets,
    random_training_triplets,
)
from .errors import DataError, MismatchError
from .transform import DEGENERATE_NORM, TrainConfig, forward_batch, train

SWEEP_COLUMNS = ("test-train", "train-train", "test-test")
ABLATION_STRATEGIES = ("random", "random_x10", "positive_only", "boundary")


class RawEmbeddingScorer:
    """Cosine of the untransformed utterance embeddings."""

    kind = "raw_embedding"

    def __init__(self, bank):
        self.bank = bank
        self.provider_tag = bank.provider_tag

    def score(self, ref_id: str, cand_id: str) -> float:
        return float(np.dot(self.bank.vector(ref_id), self.bank.vector(cand_id)))


class TransformedScorer:
    """Cosine of transformed, re-normalized utterance embeddings."""

    kind = "transformed"

    def __init__(self, bank, params):
        self.bank = bank
        self.params = params
        self.provider_tag = bank.provider_tag
        self._cache: dict[str, np.ndarray] = {}

    def _vector(self, exemplar_id: str) -> np.ndarray:
        vec = self._cache.get(exemplar_id)
        if vec is None:
            row = forward_batch(self.params, self.bank.vector(exemplar_id)[None, :])[0]
            norm = float(np.linalg.norm(row))
            vec = row / norm if norm >= DEGENERATE_NORM else np.zeros_like(row)
            self._cache[exemplar_id] = vec
        return vec

    def score(self, ref_id: str, cand_id: str) -> float:
        return float(np.dot(self._vector(ref_id), self._vector(cand_id)))


class CodeOracleScorer:
    """Scores by code-side similarity directly: the ceiling for any
    utterance-side scorer on benchmarks built from the same metric."""

    kind = "code_oracle"
    provider_tag = "code-oracle"

    def __init__(self, corpus, sim_fn):
        self.corpus = corpus
        self.sim_fn = sim_fn

    def score(self, ref_id: str, cand_id: str) -> float:
        return self.sim_fn(self.corpus.by_id(ref_id).code, self.corpus.by_id(cand_id).code)


@dataclass
class RankReport:
    scorer_kind: str
    provider_tag: str
    accuracy: float
    n_triplets: int
    n_correct: int
    n_ties: int
    mode_breakdown: dict = field(default_factory=dict)
    benchmark_meta: dict = field(default_factory=dict)
    score_pairs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scorer_kind": self.scorer_kind,
            "provider_tag": self.provider_tag,
            "accuracy": self.accuracy,
            "n_triplets": self.n_triplets,
            "n_correct": self.n_correct,
            "n_ties": self.n_ties,
            "mode_breakdown": self.mode_breakdown,
            "benchmark_meta": self.benchmark_meta,
        }


def _benchmark_meta(benchmark) -> dict:
    return {
        "mode": benchmark.mode,
        "seed": benchmark.seed,
        "per_ref": benchmark.per_ref,
        "top_k": benchmark.params.top_k,
        "skip": benchmark.params.skip,
        "refs_digest": benchmark.refs_digest,
        "cands_digest": benchmark.cands_digest,
        "ref_split": benchmark.ref_split,
        "cand_split": benchmark.cand_split,
        "skipped_refs": benchmark.skipped_refs,
        "metric": benchmark.metric,
        "preset": benchmark.preset,
        "n_triplets": len(benchmark),
    }


def rank_accuracy(scorer, benchmark, corpus, collect_scores: bool = False) -> RankReport:
    """Proportion of benchmark triplets where the scorer ranks the positive
    candidate strictly above the negative; ties are incorrect."""
    if benchmark.refs_digest and getattr(corpus, "digest", "") and \
            benchmark.refs_digest != corpus.digest:
        raise MismatchError(
            "benchmark was built from a different corpus "
            f"({benchmark.refs_digest} != {corpus.digest}); rebuild the benchmark"
        )
    correct = 0
    ties = 0
    by_mode: dict[str, list] = {}
    pairs = []
    for t in benchmark.triplets:
        for exemplar_id in (t.ref_id, t.pos_id, t.neg_id):
            corpus.by_id(exemplar_id)
        s_pos = scorer.score(t.ref_id, t.pos_id)
        s_neg = scorer.score(t.ref_id, t.neg_id)
        ok = s_pos > s_neg
        if s_pos == s_neg:
            ties += 1
        if ok:
            correct += 1
        by_mode.setdefault(t.mode, []).append(ok)
        if collect_scores:
            pairs.append(
                {
                    "ref_id": t.ref_id,
                    "pos_id": t.pos_id,
                    "neg_id": t.neg_id,
                    "score_pos": s_pos,
                    "score_neg": s_neg,
                    "correct": ok,
                }
            )
    n = len(benchmark.triplets)
    breakdown = {
        mode: {"n": len(oks), "correct": sum(oks), "accuracy": sum(oks) / len(oks)}
        for mode, oks in sorted(by_mode.items())
    }
    return RankReport(
        scorer_kind=scorer.kind,
        provider_tag=scorer.provider_tag,
        accuracy=correct / n if n else 0.0,
        n_triplets=n,
        n_correct=correct,
        n_ties=ties,
        mode_breakdown=breakdown,
        benchmark_meta=_benchmark_meta(benchmark),
        score_pairs=pairs,
    )


def evaluate_scorers(scorers, benchmark, corpus, collect_scores: bool = False) -> list:
    return [rank_accuracy(s, benchmark, corpus, collect_scores) for s in scorers]


@dataclass
class SweepReport:
    columns: tuple
    rows: list  # [{"scorer_kind", "provider_tag", "accuracies": {col: acc}, ...}]
    benchmarks: dict = field(default_factory=dict)  # col -> RankingBenchmark
    seed: int = 0

    def to_rows(self) -> list[dict]:
        return [
            {
                "scorer_kind": row["scorer_kind"],
                "provider_tag": row["provider_tag"],
                "accuracies": row["accuracies"],
                "n_triplets": row["n_triplets"],
                "n_ties": row["n_ties"],
            }
            for row in self.rows
        ]


def language_variation_sweep(scorers, corpus, bank, sim_fn, params: CurationParams,
                             seed: int, per_ref: int = 4) -> SweepReport:
    """Evaluate every scorer on boundary benchmarks drawn across the three
    reference/candidate split pairings."""
    views = {}
    for split in ("train", "test"):
        view = corpus.select_split(split)
        if len(view) == 0:
            raise DataError(f"language variation sweep needs a {split} split; corpus has none")
        views[split] = view
    pairings = {
        "test-train": (views["test"], views["train"]),
        "train-train": (views["train"], views["train"]),
        "test-test": (views["test"], views["test"]),
    }
    benchmarks = {
        column: build_ranking_benchmark(
            refs, cands, sim_fn, bank, params, "boundary", seed, per_ref
        )
        for column, (refs, cands) in pairings.items()
    }
    rows = []
    for scorer in scorers:
        accuracies = {}
        n_triplets = {}
        n_ties = {}
        for column in SWEEP_COLUMNS:
            report = rank_accuracy(scorer, benchmarks[column], corpus)
            accuracies[column] = report.accuracy
            n_triplets[column] = report.n_triplets
            n_ties[column] = report.n_ties
        rows.append(
            {
                "scorer_kind": scorer.kind,
                "provider_tag": scorer.provider_tag,
                "accuracies": accuracies,
                "n_triplets": n_triplets,
                "n_ties": n_ties,
            }
        )
    return SweepReport(columns=SWEEP_COLUMNS, rows=rows, benchmarks=benchmarks, seed=seed)


@dataclass
class AblationReport:
    rows: list  # [{"strategy", "n_triplets", "accuracy", ...}] in ABLATION_STRATEGIES order
    benchmark: object = None
    benchmark_meta: dict = field(default_factory=dict)
    seed: int = 0

    def accuracy(self, strategy: str) -> float:
        for row in self.rows:
            if row["strategy"] == strategy:
                return row["accuracy"]
        raise DataError(f"no ablation row for strategy {strategy!r}")


def build_ablation_training_sets(train_view, sim, bank, params: CurationParams,
                                 seed: int) -> dict:
    """The four curation strategies, size-matched except for random_x10."""
    return {
        "random": random_training_triplets(train_view, sim, params, seed),
        "random_x10": random_training_triplets(train_view, sim, params, seed, multiplier=10),
        "positive_only": positive_only_training_triplets(train_view, sim, params, seed),
        "boundary": curate_training_triplets(train_view, sim, bank, params),
    }


def sampling_ablation(corpus, sim, bank, train_cfg: TrainConfig,
                      params: CurationParams, seed: int, per_ref: int = 4,
                      sim_fn=None) -> AblationReport:
    """Train one model per curation strategy with identical config and seed,
    then score all of them on one shared boundary benchmark."""
    if sim_fn is None:
        raise DataError("sampling_ablation needs the pair metric used to build benchmarks")
    train_view = corpus.select_split("train")
    test_view = corpus.select_split("test")
    if len(train_view) == 0 or len(test_view) == 0:
        missing = "train" if len(train_view) == 0 else "test"
        raise DataError(f"sampling ablation needs a {missing} split; corpus has none")
    benchmark = build_ranking_benchmark(
        test_view, train_view, sim_fn, bank, params, "boundary", seed, per_ref
    )
    if len(benchmark) == 0:
        raise DataError("ablation benchmark is empty; corpus has no strict code-similarity splits")
    training_sets = build_ablation_training_sets(train_view, sim, bank, params, seed)
    rows = []
    for strategy in ABLATION_STRATEGIES:
        triplets = training_sets[strategy]
        model, report = train(triplets, bank, train_cfg)
        scorer = TransformedScorer(bank, model)
        rank = rank_accuracy(scorer, benchmark, corpus)
        rows.append(
            {
                "strategy": strategy,
                "n_triplets": len(triplets),
                "accuracy": rank.accuracy,
                "n_ties": rank.n_ties,
                "stopped_epoch": report.stopped_epoch,
                "best_epoch": report.best_epoch,
                "probe_accuracy": report.best_probe_accuracy,
            }
        )
    return AblationReport(
        rows=rows,
        benchmark=benchmark,
        benchmark_meta=_benchmark_meta(benchmark),
        seed=seed,
    )


def format_table(headers, rows) -> str:
    """Aligned plain-text table; cells are stringified as given."""
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = []
    for r, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if r == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(widths))).rstrip())
    return "\n".join(lines)
