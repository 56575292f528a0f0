import random
import string

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simtune.codesim import (
    MASKING_PRESETS,
    MaskClass,
    MaskingConfig,
    PairMetric,
    SimilarityMatrix,
    levenshtein,
    masking_preset,
    normalized_edit_similarity,
    similarity_matrix,
    sketch,
    sketch_match,
    template_match,
    template_tokens,
)
from simtune.errors import DataError, MaskingError

from .oracles import lev_recursive

text_strategy = st.text(alphabet=string.ascii_lowercase + '(),." ', max_size=12)


class TestLevenshtein:
    def test_known_distance(self):
        assert levenshtein("kitten", "sitting") == 3

    def test_empty_cases(self):
        assert levenshtein("", "") == 0
        assert levenshtein("", "abc") == 3
        assert levenshtein("abc", "") == 3

    def test_token_sequences(self):
        assert levenshtein(("ls", "-la", "<ARG>"), ("ls", "-la")) == 1
        assert levenshtein(tuple("abc"), tuple("axc")) == 1

    @given(text_strategy, text_strategy)
    @settings(max_examples=200, deadline=None)
    def test_matches_recursive_oracle(self, a, b):
        assert levenshtein(a, b) == lev_recursive(a, b)

    @given(text_strategy, text_strategy)
    @settings(max_examples=100, deadline=None)
    def test_symmetry(self, a, b):
        assert levenshtein(a, b) == levenshtein(b, a)


class TestNormalizedSimilarity:
    def test_kitten_sitting(self):
        assert normalized_edit_similarity("kitten", "sitting") == 1.0 - 3.0 / 7.0

    def test_both_empty(self):
        assert normalized_edit_similarity("", "") == 1.0

    def test_identical(self):
        assert normalized_edit_similarity("abc", "abc") == 1.0

    @given(text_strategy, text_strategy)
    @settings(max_examples=150, deadline=None)
    def test_range_and_symmetry(self, a, b):
        s = normalized_edit_similarity(a, b)
        assert 0.0 <= s <= 1.0
        assert s == normalized_edit_similarity(b, a)


class TestSketch:
    def test_string_literal_masked(self):
        assert sketch('Split(x, ",")') == "Split(x, <STR>)"

    def test_numbers_masked_including_decimals(self):
        assert sketch("f(12, 12.5)") == "f(<NUM>, <NUM>)"

    def test_digits_inside_identifiers_kept(self):
        assert sketch("legacy5 = v2x") == "legacy5 = v2x"

    def test_number_after_punctuation_masked(self):
        assert sketch("a[3] + b.4") == "a[<NUM>] + b.<NUM>"

    def test_escaped_quote_stays_inside_string(self):
        assert sketch(r'f("a\"b", 1)') == "f(<STR>, <NUM>)"

    def test_double_escape_style(self):
        cfg = MASKING_PRESETS["m"]
        assert sketch('g("he said ""hi""", 2)', cfg) == "g(<STR>, <NUM>)"

    def test_m_preset_identifier_classes(self):
        cfg = MASKING_PRESETS["m"]
        assert sketch('#"Total Sales" + [Amount Due]', cfg) == "<ID> + <COL>"

    def test_unterminated_string_masks_to_end_of_line(self):
        assert sketch('x = "oops\ny = 1') == "x = <STR>\ny = <NUM>"
        assert sketch('x = "oops') == "x = <STR>"

    def test_unterminated_string_error_mode_carries_offset(self):
        cfg = MaskingConfig(on_unterminated="error")
        with pytest.raises(MaskingError) as err:
            sketch('ab = "oops', cfg)
        assert err.value.offset == 5

    def test_duplicate_tokens_rejected(self):
        cfg = MaskingConfig(string_token="<X>", number_token="<X>")
        with pytest.raises(DataError, match="duplicate replacement tokens"):
            sketch("x", cfg)

    def test_multi_char_delimiter_rejected(self):
        cfg = MaskingConfig(string_delimiters=('"""',))
        with pytest.raises(DataError, match="single character"):
            sketch("x", cfg)

    def test_unknown_preset(self):
        with pytest.raises(DataError, match="unknown masking preset"):
            masking_preset("powerquery")

    @pytest.mark.parametrize("preset", sorted(MASKING_PRESETS))
    @pytest.mark.parametrize(
        "code",
        ['t.filter(col("price") > 10)', 'x = #"Weird Name" + [Col] * 2.5', "plain words", ""],
    )
    def test_idempotent(self, preset, code):
        cfg = MASKING_PRESETS[preset]
        once = sketch(code, cfg)
        assert sketch(once, cfg) == once

    def test_mask_invariance_single_payload(self):
        a = 'rows = t.filter(col("price") > 10)'
        b = 'rows = t.filter(col("unit cost, net") > 10)'
        assert sketch_match(a, b) == 1.0

    def test_sketch_match_separates_different_shapes(self):
        a = 't.sort_by("x")'
        b = 't.filter(col("x") > 1)'
        assert sketch_match(a, b) < 1.0


class TestTemplateMatch:
    def test_operands_masked(self):
        assert template_tokens("ls -la /tmp") == ["ls", "-la", "<ARG>"]

    def test_identical_template(self):
        assert template_match("ls -la /tmp", "ls -la /home") == 1.0

    def test_disjoint_commands(self):
        assert template_match("ls -la", "rm -rf") == 0.0

    def test_segment_heads_stay_literal(self):
        tokens = template_tokens("cat log.txt | grep -i error ; wc -l")
        assert tokens == ["cat", "<ARG>", "|", "grep", "-i", "<ARG>", ";", "wc", "-l"]

    def test_flag_values_masked_but_flags_kept(self):
        assert template_match("head -n 20 data.csv", "head -n 500 other.csv") == 1.0
        assert template_match("head -n 20", "tail -n 20") == 1.0 - 1.0 / 3.0


class TestSimilarityMatrix:
    def test_matches_pairwise_metric_and_is_symmetric(self, small_corpus):
        matrix = similarity_matrix(small_corpus, "sketch", masking_preset("generic"),
                                   preset="generic")
        metric = PairMetric("sketch", masking_preset("generic"))
        n = len(small_corpus)
        assert matrix.values.shape == (n, n)
        assert np.array_equal(matrix.values, matrix.values.T)
        assert np.all(np.diag(matrix.values) == 1.0)
        for i in range(n):
            for j in range(n):
                expected = metric(small_corpus[i].code, small_corpus[j].code) if i != j else 1.0
                assert matrix.values[i, j] == expected

    def test_duplicate_codes_grouped_consistently(self, small_corpus):
        matrix = similarity_matrix(small_corpus, "edit")
        dup_a = list(small_corpus.ids).index("ex-010")
        dup_b = list(small_corpus.ids).index("ex-011")
        assert np.array_equal(matrix.values[dup_a], matrix.values[dup_b])
        assert matrix.values[dup_a, dup_b] == 1.0

    def test_pair_lookup(self, small_corpus):
        matrix = similarity_matrix(small_corpus, "edit")
        assert matrix.pair("ex-000", "ex-000") == 1.0
        assert matrix.pair("ex-000", "ex-001") == matrix.pair("ex-001", "ex-000")
        with pytest.raises(DataError, match="not covered"):
            matrix.pair("ex-000", "ghost")

    def test_save_load_round_trip_bitwise(self, tmp_path, small_corpus):
        matrix = similarity_matrix(small_corpus, "sketch", masking_preset("generic"),
                                   preset="generic")
        path = tmp_path / "m.jsonl"
        matrix.save(path)
        loaded = SimilarityMatrix.load(path)
        assert loaded.ids == matrix.ids
        assert loaded.metric == "sketch"
        assert loaded.preset == "generic"
        assert loaded.corpus_digest == matrix.corpus_digest
        assert np.array_equal(loaded.values, matrix.values)

    def test_load_rejects_wrong_kind(self, tmp_path, small_corpus, small_bank):
        path = tmp_path / "bank.jsonl"
        small_bank.save(path)
        with pytest.raises(DataError, match="expected a 'similarity-matrix'"):
            SimilarityMatrix.load(path)

    def test_template_metric_matrix(self, tmp_path):
        from .conftest import make_exemplar

        corpus = [
            make_exemplar(0, "list files", "ls -la /tmp"),
            make_exemplar(1, "list other files", "ls -la /var"),
            make_exemplar(2, "remove", "rm -rf"),
        ]
        matrix = similarity_matrix(corpus, "template")
        assert matrix.values[0, 1] == 1.0
        assert matrix.values[0, 2] == 0.0

    def test_empty_view_rejected(self):
        with pytest.raises(DataError, match="non-empty"):
            similarity_matrix([], "edit")

    def test_unknown_metric_rejected(self, small_corpus):
        with pytest.raises(DataError, match="unknown metric"):
            similarity_matrix(small_corpus, "cosine")


class TestPairMetric:
    def test_matches_direct_computation(self):
        metric = PairMetric("sketch", masking_preset("generic"))
        a = 'x = t.head(5)'
        b = 'x = t.head(250)'
        assert metric(a, b) == sketch_match(a, b)
        assert metric(a, b) == metric(b, a)

    def test_memoization_returns_identical_values(self):
        metric = PairMetric("edit")
        rng = random.Random(3)
        snippets = ["".join(rng.choice("abcxyz(),") for _ in range(12)) for _ in range(8)]
        first = {(a, b): metric(a, b) for a in snippets for b in snippets}
        again = {(a, b): metric(a, b) for a in snippets for b in snippets}
        assert first == again

    def test_unknown_metric(self):
        with pytest.raises(DataError, match="unknown metric"):
            PairMetric("jaccard")

    def test_masking_error_names_exemplar(self):
        from .conftest import make_exemplar

        cfg = MaskingConfig(on_unterminated="error")
        broken = [make_exemplar(0, "fine", 'x = "ok"'), make_exemplar(1, "broken", 'y = "oops')]
        with pytest.raises(DataError, match="masking failed for exemplar 'ex-001'"):
            similarity_matrix(broken, "sketch", cfg)
