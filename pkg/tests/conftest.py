"""Shared fixtures. Session-scoped ones carry the synthetic corpus and its
embeddings so the acceptance tests and unit tests do not recompute them."""

from __future__ import annotations

import numpy as np
import pytest

from simtune.codesim import PairMetric, masking_preset, similarity_matrix
from simtune.corpus import Corpus, Exemplar
from simtune.embedding import EmbeddingBank, FallbackEmbedder, embed_corpus
from simtune.synthetic import synth_corpus


# Training shape for the acceptance runs: small enough that four epochs on
# the 200-exemplar synthetic corpus leave the strategies separable instead of
# saturating every curation variant at the ceiling.
ACCEPT_TRAIN_KWARGS = dict(hidden_dim=32, output_dim=24, epochs=4)


def make_exemplar(i: int, utterance: str, code: str, split: str = "train") -> Exemplar:
    return Exemplar(id=f"ex-{i:03d}", utterance=utterance, code=code, split=split)


@pytest.fixture
def small_corpus() -> Corpus:
    """Fourteen hand-written exemplars, two splits, one exact duplicate pair
    (ex-010/ex-011) to exercise duplicate exclusion."""
    rows = [
        ("sum the price column", 'total = t.column("price").sum()', "train"),
        ("sum the weight column", 'total = t.column("weight").sum()', "train"),
        ("sort by price descending", 't.sort_by("price", desc=True)', "train"),
        ("sort by weight descending", 't.sort_by("weight", desc=True)', "train"),
        ("filter price above 10", 't.filter(col("price") > 10)', "train"),
        ("filter weight above 25", 't.filter(col("weight") > 25)', "train"),
        ("count distinct regions", 'n = t.column("region").distinct().count()', "train"),
        ("count distinct owners", 'n = t.column("owner").distinct().count()', "train"),
        ("rename price to cost", 't.rename("price", "cost")', "train"),
        ("rename owner to holder", 't.rename("owner", "holder")', "train"),
        ("drop empty rows quickly", "t.drop_null()", "train"),
        ("drop empty rows quickly", "t.drop_null()", "train"),
        ("sort by region keeping ties", 't.sort_by("region")', "test"),
        ("filter region above threshold 5", 't.filter(col("region") > 5)', "test"),
    ]
    exemplars = [make_exemplar(i, u, c, s) for i, (u, c, s) in enumerate(rows)]
    return Corpus(exemplars=exemplars, source="<fixture>")


@pytest.fixture
def small_bank(small_corpus) -> EmbeddingBank:
    return embed_corpus(small_corpus, FallbackEmbedder(64))


def random_unit_rows(n: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    rows = rng.normal(size=(n, dim))
    return rows / np.linalg.norm(rows, axis=1)[:, None]


@pytest.fixture(scope="session")
def synth200() -> Corpus:
    return synth_corpus(200, 7)


@pytest.fixture(scope="session")
def bank200(synth200) -> EmbeddingBank:
    return embed_corpus(synth200, FallbackEmbedder(256))


@pytest.fixture(scope="session")
def train200(synth200) -> Corpus:
    return synth200.select_split("train")


@pytest.fixture(scope="session")
def sim200(train200):
    return similarity_matrix(train200, "sketch", masking_preset("generic"), preset="generic")


@pytest.fixture(scope="session")
def sketch_metric() -> PairMetric:
    return PairMetric("sketch", masking_preset("generic"), preset="generic")
