import dataclasses
import hashlib

import pytest

from simtune.codesim import PairMetric, masking_preset, similarity_matrix
from simtune.curation import CurationParams, RankingBenchmark, build_ranking_benchmark
from simtune.embedding import FallbackEmbedder, embed_corpus
from simtune.errors import DataError, MismatchError
from simtune.evaluation import (
    ABLATION_STRATEGIES,
    SWEEP_COLUMNS,
    CodeOracleScorer,
    RawEmbeddingScorer,
    TransformedScorer,
    build_ablation_training_sets,
    evaluate_scorers,
    format_table,
    language_variation_sweep,
    rank_accuracy,
    sampling_ablation,
)
from simtune.synthetic import synth_corpus
from simtune.transform import TrainConfig, init_params

import numpy as np


class ConstantScorer:
    kind = "constant"
    provider_tag = "constant"

    def score(self, ref_id, cand_id):
        return 0.5


class HashScorer:
    """Deterministic, effectively tie-free pair scorer."""

    kind = "hash"
    provider_tag = "hash"

    def score(self, ref_id, cand_id):
        digest = hashlib.sha256(f"{ref_id}|{cand_id}".encode()).digest()
        return int.from_bytes(digest[:8], "big") / 2**64


class RescaledScorer:
    """Strictly increasing transform of another scorer's output."""

    def __init__(self, base):
        self.base = base
        self.kind = f"rescaled-{base.kind}"
        self.provider_tag = base.provider_tag

    def score(self, ref_id, cand_id):
        return 3.0 * self.base.score(ref_id, cand_id) + 7.0


@pytest.fixture(scope="module")
def setup():
    corpus = synth_corpus(80, 5)
    bank = embed_corpus(corpus, FallbackEmbedder(64))
    sim_fn = PairMetric("sketch", masking_preset("generic"), preset="generic")
    return corpus, bank, sim_fn


@pytest.fixture(scope="module")
def boundary_benchmark(setup):
    corpus, bank, sim_fn = setup
    return build_ranking_benchmark(
        corpus.select_split("test"), corpus.select_split("train"),
        sim_fn, bank, CurationParams(), "boundary", 11, 4,
    )


@pytest.fixture(scope="module")
def random_benchmark(setup):
    corpus, bank, sim_fn = setup
    return build_ranking_benchmark(
        corpus.select_split("test"), corpus.select_split("train"),
        sim_fn, bank, CurationParams(), "random", 11, 4,
    )


class TestRankAccuracy:
    @pytest.mark.parametrize("fixture", ["boundary_benchmark", "random_benchmark"])
    def test_code_oracle_is_perfect(self, setup, fixture, request):
        corpus, _, sim_fn = setup
        benchmark = request.getfixturevalue(fixture)
        report = rank_accuracy(CodeOracleScorer(corpus, sim_fn), benchmark, corpus)
        assert report.accuracy == 1.0
        assert report.n_correct == report.n_triplets == len(benchmark)
        assert report.n_ties == 0

    def test_constant_scorer_scores_zero_not_half(self, setup, boundary_benchmark):
        corpus, _, _ = setup
        report = rank_accuracy(ConstantScorer(), boundary_benchmark, corpus)
        assert report.accuracy == 0.0
        assert report.n_correct == 0
        assert report.n_ties == report.n_triplets

    def test_swapping_pos_and_neg_flips_every_answer(self, setup, boundary_benchmark):
        corpus, _, _ = setup
        scorer = HashScorer()
        forward_report = rank_accuracy(scorer, boundary_benchmark, corpus)
        swapped = dataclasses.replace(
            boundary_benchmark,
            triplets=[
                dataclasses.replace(t, pos_id=t.neg_id, neg_id=t.pos_id,
                                    s_pos=t.s_neg, s_neg=t.s_pos)
                for t in boundary_benchmark.triplets
            ],
        )
        swapped_report = rank_accuracy(scorer, swapped, corpus)
        assert forward_report.n_ties == swapped_report.n_ties == 0
        assert forward_report.n_correct + swapped_report.n_correct == len(boundary_benchmark)

    def test_invariant_under_increasing_rescale(self, setup, boundary_benchmark):
        corpus, bank, _ = setup
        base = RawEmbeddingScorer(bank)
        plain = rank_accuracy(base, boundary_benchmark, corpus)
        rescaled = rank_accuracy(RescaledScorer(base), boundary_benchmark, corpus)
        assert rescaled.accuracy == plain.accuracy
        assert rescaled.n_ties == plain.n_ties

    def test_foreign_corpus_refused(self, setup, boundary_benchmark):
        other = synth_corpus(80, 6)
        with pytest.raises(MismatchError, match="rebuild the benchmark"):
            rank_accuracy(ConstantScorer(), boundary_benchmark, other)

    def test_unresolvable_id_rejected(self, setup, boundary_benchmark):
        corpus, _, _ = setup
        # The test-split view shares the corpus digest but lacks the train
        # candidates the benchmark names.
        with pytest.raises(DataError, match="does not resolve"):
            rank_accuracy(ConstantScorer(), boundary_benchmark, corpus.select_split("test"))

    def test_report_shape(self, setup, boundary_benchmark):
        corpus, bank, _ = setup
        report = rank_accuracy(RawEmbeddingScorer(bank), boundary_benchmark, corpus)
        assert report.scorer_kind == "raw_embedding"
        assert report.provider_tag == bank.provider_tag
        assert report.mode_breakdown.keys() == {"boundary"}
        inner = report.mode_breakdown["boundary"]
        assert inner["n"] == report.n_triplets
        assert inner["correct"] == report.n_correct
        assert inner["accuracy"] == report.accuracy
        meta = report.benchmark_meta
        assert meta["mode"] == "boundary"
        assert meta["refs_digest"] == corpus.digest
        assert meta["n_triplets"] == len(boundary_benchmark)
        payload = report.to_dict()
        assert payload["accuracy"] == report.accuracy
        assert "score_pairs" not in payload

    def test_collect_scores(self, setup, boundary_benchmark):
        corpus, bank, _ = setup
        scorer = RawEmbeddingScorer(bank)
        silent = rank_accuracy(scorer, boundary_benchmark, corpus)
        assert silent.score_pairs == []
        verbose = rank_accuracy(scorer, boundary_benchmark, corpus, collect_scores=True)
        assert len(verbose.score_pairs) == len(boundary_benchmark)
        first = verbose.score_pairs[0]
        t = boundary_benchmark.triplets[0]
        assert first["ref_id"] == t.ref_id
        assert first["correct"] == (first["score_pos"] > first["score_neg"])

    def test_empty_benchmark_scores_zero(self, setup):
        corpus, _, _ = setup
        empty = RankingBenchmark(triplets=[], seed=0, mode="boundary",
                                 per_ref=4, params=CurationParams())
        report = rank_accuracy(ConstantScorer(), empty, corpus)
        assert report.accuracy == 0.0
        assert report.n_triplets == 0

    def test_evaluate_scorers_preserves_order(self, setup, boundary_benchmark):
        corpus, bank, sim_fn = setup
        scorers = [RawEmbeddingScorer(bank), CodeOracleScorer(corpus, sim_fn)]
        reports = evaluate_scorers(scorers, boundary_benchmark, corpus)
        assert [r.scorer_kind for r in reports] == ["raw_embedding", "code_oracle"]


class TestTransformedScorer:
    def test_matches_manual_cosine(self, setup):
        corpus, bank, _ = setup
        params = init_params(64, 8, 6, np.random.default_rng(2))
        scorer = TransformedScorer(bank, params)
        a, b = corpus.exemplars[0].id, corpus.exemplars[1].id
        from simtune.transform import forward

        ya = forward(params, bank.vector(a))
        yb = forward(params, bank.vector(b))
        expected = float(np.dot(ya, yb) / (np.linalg.norm(ya) * np.linalg.norm(yb)))
        assert scorer.score(a, b) == pytest.approx(expected, abs=1e-12)
        assert scorer.kind == "transformed"

    def test_degenerate_vector_scores_zero(self, setup):
        corpus, bank, _ = setup
        params = init_params(64, 8, 6, np.random.default_rng(2))
        params.w2[:] = 0.0
        scorer = TransformedScorer(bank, params)
        a, b = corpus.exemplars[0].id, corpus.exemplars[1].id
        assert scorer.score(a, b) == 0.0


class TestLanguageVariationSweep:
    def test_columns_and_split_wiring(self, setup):
        corpus, bank, sim_fn = setup
        sweep = language_variation_sweep(
            [RawEmbeddingScorer(bank), CodeOracleScorer(corpus, sim_fn)],
            corpus, bank, sim_fn, CurationParams(), seed=9, per_ref=2,
        )
        assert sweep.columns == SWEEP_COLUMNS
        assert set(sweep.benchmarks) == set(SWEEP_COLUMNS)
        for column, benchmark in sweep.benchmarks.items():
            ref_split, cand_split = column.split("-")
            assert benchmark.ref_split == ref_split
            assert benchmark.cand_split == cand_split
            assert benchmark.mode == "boundary"
            assert len(benchmark) > 0
        oracle_row = sweep.rows[1]
        assert oracle_row["scorer_kind"] == "code_oracle"
        assert all(oracle_row["accuracies"][c] == 1.0 for c in SWEEP_COLUMNS)
        raw_row = sweep.rows[0]
        assert set(raw_row["accuracies"]) == set(SWEEP_COLUMNS)
        assert all(0.0 <= raw_row["accuracies"][c] <= 1.0 for c in SWEEP_COLUMNS)
        serialized = sweep.to_rows()
        assert [row["scorer_kind"] for row in serialized] == ["raw_embedding", "code_oracle"]
        assert set(serialized[0]["n_triplets"]) == set(SWEEP_COLUMNS)

    def test_missing_split_rejected(self, setup):
        corpus, bank, sim_fn = setup
        train_only = corpus.select_split("train")
        with pytest.raises(DataError, match="needs a test split"):
            language_variation_sweep([ConstantScorer()], train_only, bank, sim_fn,
                                     CurationParams(), seed=1)


@pytest.fixture(scope="module")
def ablation(setup):
    corpus, bank, sim_fn = setup
    matrix = similarity_matrix(corpus.select_split("train"), "sketch",
                               masking_preset("generic"), preset="generic")
    cfg = TrainConfig(seed=1, hidden_dim=8, output_dim=6, epochs=1)
    return sampling_ablation(corpus, matrix, bank, cfg, CurationParams(top_k=2, skip=2),
                             seed=1, per_ref=2, sim_fn=sim_fn)


class TestSamplingAblation:
    def test_strategy_rows_in_declared_order(self, ablation):
        assert [row["strategy"] for row in ablation.rows] == list(ABLATION_STRATEGIES)
        for row in ablation.rows:
            assert 0.0 <= row["accuracy"] <= 1.0
            assert row["stopped_epoch"] >= 1

    def test_sizes_matched_except_random_x10(self, ablation):
        sizes = {row["strategy"]: row["n_triplets"] for row in ablation.rows}
        assert sizes["random"] == sizes["positive_only"] == sizes["boundary"]
        assert sizes["random_x10"] == 10 * sizes["random"]

    def test_single_shared_benchmark(self, ablation):
        assert ablation.benchmark is not None
        assert ablation.benchmark_meta["n_triplets"] == len(ablation.benchmark)
        assert ablation.benchmark_meta["mode"] == "boundary"

    def test_accuracy_lookup(self, ablation):
        assert ablation.accuracy("boundary") == ablation.rows[-1]["accuracy"]
        with pytest.raises(DataError, match="no ablation row for strategy 'other'"):
            ablation.accuracy("other")

    def test_sim_fn_required(self, setup):
        corpus, bank, _ = setup
        matrix = similarity_matrix(corpus.select_split("train"), "sketch",
                                   masking_preset("generic"), preset="generic")
        with pytest.raises(DataError, match="needs the pair metric"):
            sampling_ablation(corpus, matrix, bank, TrainConfig(), CurationParams(), 1)

    def test_missing_split_rejected(self, setup):
        corpus, bank, sim_fn = setup
        matrix = similarity_matrix(corpus.select_split("train"), "sketch",
                                   masking_preset("generic"), preset="generic")
        with pytest.raises(DataError, match="needs a test split"):
            sampling_ablation(corpus.select_split("train"), matrix, bank,
                              TrainConfig(), CurationParams(), 1, sim_fn=sim_fn)

    def test_training_set_keys(self, setup):
        corpus, bank, _ = setup
        matrix = similarity_matrix(corpus.select_split("train"), "sketch",
                                   masking_preset("generic"), preset="generic")
        sets = build_ablation_training_sets(corpus.select_split("train"), matrix,
                                            bank, CurationParams(top_k=2, skip=2), 3)
        assert set(sets) == set(ABLATION_STRATEGIES)


class TestFormatTable:
    def test_alignment_and_separator(self):
        table = format_table(["strategy", "acc"], [["random", 0.5], ["boundary", 0.975]])
        lines = table.split("\n")
        assert lines[0] == "strategy  acc"
        assert lines[1] == "--------  -----"
        assert lines[2] == "random    0.5"
        assert lines[3] == "boundary  0.975"
        assert all(not line.endswith(" ") for line in lines)
