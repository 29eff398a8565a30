"""Feature families: bucket geometry, lexical scores, vector assembly.

The bucket placements asserted below are hand-derived: with fraction
splits {0.25, 0.5, 0.75, 1.0} a matched-IDF share of 0.35 falls in band
1, and with distance splits {2, 4, 8} a distance of 3 falls in column 1
(columns count toward the mention, so column 2 is distance <= 2).
"""

import math

import numpy as np
import pytest

from proxrank.corpus import Query, QueryTerm, extract_context, find_candidates
from proxrank.features import (
    Bm25Params,
    FeatureError,
    FeatureLayout,
    bm25_score,
    build_feature_vector,
    context_matrix,
    cosine_score,
    document_scores,
    grid_features,
    idfupto_features,
    rectangle_features,
    to_dense,
)

import oracles

SMALL = FeatureLayout(
    families=("noprox", "idfupto", "grid", "rectangle", "pad"),
    distance_boundaries=(2, 4, 8),
    idf_fraction_boundaries=(0.25, 0.5, 0.75, 1.0),
)


def _context(index, doc_id, mention_index, query, window=50):
    doc = index.documents[doc_id]
    ctx = extract_context(doc, doc.mentions[mention_index], query, window)
    assert ctx is not None
    return ctx


class TestLayoutGeometry:
    def test_family_offsets_follow_canonical_order(self):
        # 2 noprox + 3 idfupto + 12 grid + 12 rectangle + 1 pad
        assert SMALL.family_offset("noprox") == 0
        assert SMALL.family_offset("idfupto") == 2
        assert SMALL.family_offset("grid") == 5
        assert SMALL.family_offset("rectangle") == 17
        assert SMALL.family_offset("pad") == 29
        assert SMALL.dimension == 30

    def test_default_layout_dimension(self):
        assert FeatureLayout().dimension == 2 + 10 * 6 + 1

    def test_distance_buckets_count_toward_mention(self):
        assert SMALL.distance_bucket(1) == 2
        assert SMALL.distance_bucket(2) == 2
        assert SMALL.distance_bucket(3) == 1
        assert SMALL.distance_bucket(4) == 1
        assert SMALL.distance_bucket(5) == 0
        assert SMALL.distance_bucket(8) == 0
        assert SMALL.distance_bucket(9) == 0  # beyond the last split: farthest

    def test_idf_buckets(self):
        assert SMALL.idf_bucket(0.1) == 0
        assert SMALL.idf_bucket(0.25) == 0
        assert SMALL.idf_bucket(0.35) == 1
        assert SMALL.idf_bucket(0.75) == 2
        assert SMALL.idf_bucket(0.76) == 3
        assert SMALL.idf_bucket(1.0) == 3

    def test_worked_example_cell(self):
        # share 0.35 at distance 3 lands in grid cell (1, 1)
        i = SMALL.idf_bucket(0.35)
        j = SMALL.distance_bucket(3)
        assert (i, j) == (1, 1)

    def test_layout_validation(self):
        with pytest.raises(FeatureError):
            FeatureLayout(families=())
        with pytest.raises(FeatureError):
            FeatureLayout(families=("noprox", "noprox"))
        with pytest.raises(FeatureError):
            FeatureLayout(families=("sideways",))
        with pytest.raises(FeatureError):
            FeatureLayout(distance_boundaries=(4, 2))
        with pytest.raises(FeatureError):
            FeatureLayout(idf_fraction_boundaries=(0.5, 1.5))
        with pytest.raises(FeatureError):
            FeatureLayout(idf_fraction_boundaries=())

    def test_round_trip(self):
        assert FeatureLayout.from_dict(SMALL.to_dict()) == SMALL

    def test_cell_index_bounds(self):
        with pytest.raises(FeatureError):
            SMALL.cell_index("grid", 4, 0)
        with pytest.raises(FeatureError):
            SMALL.cell_index("pad", 0, 0)


class TestLexicalScores:
    def test_bm25_matches_direct_formula(self, fixture_index):
        stats = fixture_index.stats
        doc = fixture_index.documents["d01"]
        query = Query("q", [QueryTerm("created"), QueryTerm("python")])
        got = bm25_score(doc.tokens, query, stats)
        expected = oracles.bm25(1, 3, 8, 12, stats.avg_doc_len) + oracles.bm25(
            1, 4, 8, 12, stats.avg_doc_len
        )
        assert got == pytest.approx(expected, rel=1e-12)

    def test_bm25_term_multiplicity_scales_contribution(self, fixture_index):
        stats = fixture_index.stats
        doc = fixture_index.documents["d01"]
        single = bm25_score(doc.tokens, Query("q", [QueryTerm("python")]), stats)
        doubled = bm25_score(
            doc.tokens, Query("q", [QueryTerm("python"), QueryTerm("python")]), stats
        )
        assert doubled == pytest.approx(2.0 * single, rel=1e-12)

    def test_bm25_is_nonnegative_even_for_common_terms(self, fixture_index):
        # "the" appears in most documents; the idf variant must not go negative.
        stats = fixture_index.stats
        doc = fixture_index.documents["d01"]
        assert bm25_score(doc.tokens, Query("q", [QueryTerm("the")]), stats) >= 0.0

    def test_cosine_matches_direct_computation(self, fixture_index):
        stats = fixture_index.stats
        doc = fixture_index.documents["d02"]
        query = Query("q", [QueryTerm("python"), QueryTerm("designed")])
        got = cosine_score(doc.tokens, query, stats)

        def weight(term, tf):
            return tf * (stats.num_docs / max(stats.df.get(term, 0), 1))

        doc_tf = {}
        for tok in doc.tokens:
            doc_tf[tok] = doc_tf.get(tok, 0) + 1
        q_tf = {"python": 1, "designed": 1}
        dot = sum(weight(t, doc_tf.get(t, 0)) * weight(t, q_tf[t]) for t in q_tf)
        doc_norm = math.sqrt(sum(weight(t, c) ** 2 for t, c in doc_tf.items()))
        q_norm = math.sqrt(sum(weight(t, c) ** 2 for t, c in q_tf.items()))
        assert got == pytest.approx(dot / (doc_norm * q_norm), rel=1e-12)

    def test_cosine_zero_when_no_overlap(self, fixture_index):
        stats = fixture_index.stats
        doc = fixture_index.documents["d03"]
        assert cosine_score(doc.tokens, Query("q", [QueryTerm("zebra")]), stats) == 0.0


class TestProximityFamilies:
    def test_idfupto_is_cumulative_and_capped(self, fixture_index):
        query = Query("q", [QueryTerm("created"), QueryTerm("python")])
        fixture_index.warm_query(query)
        ctx = _context(fixture_index, "d01", 0, query)  # created at 1, python at 3
        vec = idfupto_features(ctx, query, fixture_index.stats, SMALL)
        base = SMALL.family_offset("idfupto")
        idf_created = 8 / 3
        idf_python = 8 / 4
        share = idf_created / (idf_created + idf_python)
        assert vec[base + 0] == pytest.approx(share, rel=1e-12)  # within 2
        assert vec[base + 1] == pytest.approx(1.0, rel=1e-12)  # within 4
        assert vec[base + 2] == pytest.approx(1.0, rel=1e-12)  # within 8
        values = [vec.get(base + k, 0.0) for k in range(3)]
        assert values == sorted(values)
        assert max(values) <= 1.0 + 1e-12

    def test_grid_adds_one_per_match(self, fixture_index):
        query = Query("q", [QueryTerm("created"), QueryTerm("python")])
        fixture_index.warm_query(query)
        ctx = _context(fixture_index, "d01", 0, query)
        vec = grid_features(ctx, query, fixture_index.stats, SMALL)
        idf_created = 8 / 3
        idf_python = 8 / 4
        total = idf_created + idf_python
        cell_created = SMALL.cell_index(
            "grid", SMALL.idf_bucket(idf_created / total), SMALL.distance_bucket(1)
        )
        cell_python = SMALL.cell_index(
            "grid", SMALL.idf_bucket(idf_python / total), SMALL.distance_bucket(3)
        )
        assert vec == {cell_created: 1.0, cell_python: 1.0}

    def test_rectangle_fires_dominated_cells(self, fixture_index):
        # A single match in cell (2, 1) of a 4x3 grid covers rows 0..2
        # and columns 0..1: six cells, each incremented once.
        query = Query("q", [QueryTerm("python")])
        fixture_index.warm_query(query)
        ctx = _context(fixture_index, "d01", 0, query)  # python at distance 3
        assert ctx.matches == {"python": 3}
        vec = rectangle_features(ctx, query, fixture_index.stats, SMALL)
        # share 1.0 -> row 3; distance 3 -> column 1; fires 4 * 2 = 8 cells
        expected = {
            SMALL.cell_index("rectangle", i, j): 1.0 for i in range(4) for j in range(2)
        }
        assert vec == expected

    def test_rectangle_accumulates_counts(self, fixture_index):
        query = Query("q", [QueryTerm("created"), QueryTerm("python")])
        fixture_index.warm_query(query)
        ctx = _context(fixture_index, "d01", 0, query)
        vec = rectangle_features(ctx, query, fixture_index.stats, SMALL)
        # Both matches dominate the far-common corner cell (0, 0).
        corner = SMALL.cell_index("rectangle", 0, 0)
        assert vec[corner] == 2.0


class TestVectorAssembly:
    def test_full_vector_contents(self, fixture_index):
        query = Query("q", [QueryTerm("created"), QueryTerm("python")])
        fixture_index.warm_query(query)
        doc = fixture_index.documents["d01"]
        ctx = _context(fixture_index, "d01", 0, query)
        vec = build_feature_vector(doc, ctx, query, fixture_index.stats, SMALL)
        assert vec[SMALL.family_offset("pad")] == 1.0
        assert all(0 <= k < SMALL.dimension for k in vec)
        assert all(np.isfinite(v) and v >= 0.0 for v in vec.values())
        noprox = document_scores(doc, query, fixture_index.stats, SMALL)
        assert vec[0] == noprox[0]
        assert vec[1] == noprox[1]

    def test_proximity_families_require_context(self, fixture_index):
        query = Query("q", [QueryTerm("python")])
        doc = fixture_index.documents["d01"]
        with pytest.raises(FeatureError, match="context"):
            build_feature_vector(doc, None, query, fixture_index.stats, SMALL)

    def test_noprox_only_layout_accepts_missing_context(self, fixture_index):
        layout = FeatureLayout(families=("noprox", "pad"))
        query = Query("q", [QueryTerm("python")])
        doc = fixture_index.documents["d01"]
        vec = build_feature_vector(doc, None, query, fixture_index.stats, layout)
        assert layout.dimension == 3
        assert vec[2] == 1.0

    def test_context_doc_mismatch_rejected(self, fixture_index):
        query = Query("q", [QueryTerm("python")])
        fixture_index.warm_query(query)
        ctx = _context(fixture_index, "d01", 0, query)
        other = fixture_index.documents["d02"]
        with pytest.raises(FeatureError, match="doc"):
            build_feature_vector(other, ctx, query, fixture_index.stats, SMALL)

    def test_context_matrix_rows_match_vectors(self, fixture_index):
        query = Query("q", [QueryTerm("created"), QueryTerm("python")])
        cand = find_candidates(fixture_index, query)
        contexts = cand.support["guido"]
        matrix = context_matrix(fixture_index, query, contexts, SMALL)
        assert matrix.shape == (len(contexts), SMALL.dimension)
        for row, ctx in zip(matrix, contexts):
            doc = fixture_index.documents[ctx.doc_id]
            vec = build_feature_vector(doc, ctx, query, fixture_index.stats, SMALL)
            assert np.array_equal(row, to_dense(vec, SMALL.dimension))

    def test_empty_context_list_gives_empty_matrix(self, fixture_index):
        query = Query("q", [QueryTerm("python")])
        matrix = context_matrix(fixture_index, query, [], SMALL)
        assert matrix.shape == (0, SMALL.dimension)
