"""Per-context feature families producing sparse non-negative vectors.

A feature layout fixes which families are active and how their cells map
into one flat index space.  Families, in layout order:

* ``noprox``    -- two whole-document scores (BM25, TF-IDF cosine) that
                   ignore mention positions entirely;
* ``idfupto``   -- for each distance boundary L, the fraction of the
                   query's total IDF matched within L tokens;
* ``grid``      -- a (rarity x proximity) histogram: each matched term
                   adds 1 to the single cell for its IDF-fraction bucket
                   and distance bucket;
* ``rectangle`` -- like grid, but each match also fires every cell that
                   is at most as rare and at most as close, so a cell
                   counts matches "at least this rare, at least this
                   near" and cell counts are additive across matches;
* ``pad``       -- a constant 1.0, which lets sum-style aggregation see
                   plain evidence counts.

Feature vectors are sparse maps index -> value with only finite,
non-negative values; absent indices read as zero.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from proxrank.corpus import (
    Context,
    CorpusIndex,
    CorpusStats,
    Document,
    Query,
    compute_idf,
)

__all__ = [
    "Bm25Params",
    "FAMILY_ORDER",
    "FeatureError",
    "FeatureLayout",
    "bm25_score",
    "build_feature_vector",
    "context_matrix",
    "cosine_score",
    "document_scores",
    "grid_features",
    "idfupto_features",
    "rectangle_features",
    "to_dense",
]

FAMILY_ORDER = ("noprox", "idfupto", "grid", "rectangle", "pad")
_NOPROX_SIZE = 2  # bm25, cosine

FeatureVector = dict[int, float]


class FeatureError(ValueError):
    """Invalid layout or feature request."""


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75


@dataclass(frozen=True)
class FeatureLayout:
    """Active families plus the bucket boundaries shared by grid-style
    families.

    ``distance_boundaries`` are ascending token distances; a match at
    distance l falls into the bucket of the first boundary >= l, and
    anything beyond the last boundary clamps to it.  Bucket index is then
    flipped so that higher j means closer.  ``idf_fraction_boundaries``
    are ascending in (0, 1]; higher bucket i means rarer.
    """

    families: tuple[str, ...] = ("noprox", "rectangle", "pad")
    distance_boundaries: tuple[int, ...] = (2, 4, 8, 16, 32, 50)
    idf_fraction_boundaries: tuple[float, ...] = (
        0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
    )

    def __post_init__(self) -> None:
        if not self.families:
            raise FeatureError("layout with no active families")
        unknown = [f for f in self.families if f not in FAMILY_ORDER]
        if unknown:
            raise FeatureError(f"unknown feature families: {unknown}")
        if len(set(self.families)) != len(self.families):
            raise FeatureError("duplicate families in layout")
        if not self.distance_boundaries or any(
            b2 <= b1 for b1, b2 in zip(self.distance_boundaries, self.distance_boundaries[1:])
        ):
            raise FeatureError("distance boundaries must be non-empty and strictly ascending")
        if any(b < 1 for b in self.distance_boundaries):
            raise FeatureError("distance boundaries must be >= 1")
        fracs = self.idf_fraction_boundaries
        if not fracs or any(b2 <= b1 for b1, b2 in zip(fracs, fracs[1:])):
            raise FeatureError("IDF fraction boundaries must be non-empty and strictly ascending")
        if fracs[0] <= 0.0 or fracs[-1] > 1.0:
            raise FeatureError("IDF fraction boundaries must lie in (0, 1]")

    # -- geometry --------------------------------------------------------

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (len(self.idf_fraction_boundaries), len(self.distance_boundaries))

    def family_size(self, family: str) -> int:
        rows, cols = self.grid_shape
        return {
            "noprox": _NOPROX_SIZE,
            "idfupto": cols,
            "grid": rows * cols,
            "rectangle": rows * cols,
            "pad": 1,
        }[family]

    def family_offset(self, family: str) -> int:
        if family not in self.families:
            raise FeatureError(f"family {family!r} not active in this layout")
        offset = 0
        for f in FAMILY_ORDER:
            if f == family:
                return offset
            if f in self.families:
                offset += self.family_size(f)
        raise AssertionError("unreachable")

    @property
    def dimension(self) -> int:
        return sum(self.family_size(f) for f in FAMILY_ORDER if f in self.families)

    def has(self, family: str) -> bool:
        return family in self.families

    @property
    def needs_context(self) -> bool:
        return any(f in self.families for f in ("idfupto", "grid", "rectangle"))

    def cell_index(self, family: str, i: int, j: int) -> int:
        """Flat index of grid/rectangle cell (i, j): i rarity, j proximity."""
        rows, cols = self.grid_shape
        if family not in ("grid", "rectangle"):
            raise FeatureError(f"{family!r} has no cells")
        if not (0 <= i < rows and 0 <= j < cols):
            raise FeatureError(f"cell ({i}, {j}) outside {rows}x{cols} grid")
        return self.family_offset(family) + i * cols + j

    def distance_bucket(self, distance: int) -> int:
        """Proximity coordinate j: larger means closer to the mention."""
        if distance < 1:
            raise FeatureError(f"distance must be >= 1, got {distance}")
        cols = len(self.distance_boundaries)
        idx = bisect_left(self.distance_boundaries, distance)
        if idx >= cols:  # beyond the last boundary: clamp to farthest bucket
            idx = cols - 1
        return cols - 1 - idx

    def idf_bucket(self, fraction: float) -> int:
        """Rarity coordinate i: larger means a rarer matched term."""
        if not (0.0 < fraction <= 1.0 + 1e-12):
            raise FeatureError(f"IDF fraction out of range: {fraction}")
        rows = len(self.idf_fraction_boundaries)
        idx = bisect_left(self.idf_fraction_boundaries, min(fraction, 1.0))
        return min(idx, rows - 1)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "families": list(self.families),
            "distance_boundaries": list(self.distance_boundaries),
            "idf_fraction_boundaries": list(self.idf_fraction_boundaries),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FeatureLayout":
        return cls(
            families=tuple(data["families"]),
            distance_boundaries=tuple(int(b) for b in data["distance_boundaries"]),
            idf_fraction_boundaries=tuple(float(b) for b in data["idf_fraction_boundaries"]),
        )


# -- whole-document scores ------------------------------------------------


def _term_freq(tokens: Sequence[str], term_tokens: tuple[str, ...], counts: Counter) -> int:
    if len(term_tokens) == 1:
        return counts.get(term_tokens[0], 0)
    hits = 0
    for p in range(len(tokens) - len(term_tokens) + 1):
        if tuple(tokens[p : p + len(term_tokens)]) == term_tokens:
            hits += 1
    return hits


def _doc_frequency(stats: CorpusStats, term_tokens: tuple[str, ...]) -> int:
    if len(term_tokens) == 1:
        return stats.df.get(term_tokens[0], 0)
    if term_tokens not in stats.phrase_df:
        raise FeatureError(
            f"phrase {' '.join(term_tokens)!r} has no cached statistics; "
            "resolve it through CorpusIndex.phrase_df first"
        )
    return stats.phrase_df[term_tokens]


def bm25_score(
    tokens: Sequence[str],
    query: Query,
    stats: CorpusStats,
    params: Bm25Params = Bm25Params(),
) -> float:
    """BM25 of a token sequence against the query.

    Uses the non-negative idf variant ln(1 + (N - df + 0.5)/(df + 0.5)),
    corpus-wide length normalization, and query-term multiplicity as a
    per-term multiplier.  Phrases count as single units with their own
    document frequency.
    """
    if stats.num_docs == 0:
        return 0.0
    counts = Counter(tokens)
    n = stats.num_docs
    avg = stats.avg_doc_len or 1.0
    dl = len(tokens)
    multiplicity = query.multiplicity()
    score = 0.0
    for term in query.distinct_terms():
        tf = _term_freq(tokens, term.tokens, counts)
        if tf == 0:
            continue
        df = _doc_frequency(stats, term.tokens)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        norm = tf + params.k1 * (1.0 - params.b + params.b * dl / avg)
        score += multiplicity[term.text] * idf * tf * (params.k1 + 1.0) / norm
    return score


def cosine_score(tokens: Sequence[str], query: Query, stats: CorpusStats) -> float:
    """TF-IDF cosine between the token sequence and the query.

    The document vector spans its own unigrams plus any query phrases;
    both sides weight tf by the corpus IDF (num_docs / df).
    """
    if stats.num_docs == 0:
        return 0.0
    counts = Counter(tokens)
    doc_weights: dict[tuple[str, ...], float] = {}
    for tok, tf in counts.items():
        doc_weights[(tok,)] = tf * compute_idf(stats, tok)
    multiplicity = query.multiplicity()
    query_weights: dict[tuple[str, ...], float] = {}
    for term in query.distinct_terms():
        idf = stats.num_docs / max(_doc_frequency(stats, term.tokens), 1)
        query_weights[term.tokens] = multiplicity[term.text] * idf
        if term.is_phrase:
            tf = _term_freq(tokens, term.tokens, counts)
            if tf:
                doc_weights[term.tokens] = tf * idf
    dot = sum(w * doc_weights.get(k, 0.0) for k, w in query_weights.items())
    if dot == 0.0:
        return 0.0
    doc_norm = math.sqrt(sum(w * w for w in doc_weights.values()))
    query_norm = math.sqrt(sum(w * w for w in query_weights.values()))
    return dot / (doc_norm * query_norm)


def document_scores(
    document: Document,
    query: Query,
    stats: CorpusStats,
    layout: FeatureLayout,
    params: Bm25Params = Bm25Params(),
) -> FeatureVector:
    """Whole-document features: BM25 and cosine (noprox) plus the pad."""
    out: FeatureVector = {}
    if layout.has("noprox"):
        offset = layout.family_offset("noprox")
        bm25 = bm25_score(document.tokens, query, stats, params)
        cos = cosine_score(document.tokens, query, stats)
        if bm25:
            out[offset] = bm25
        if cos:
            out[offset + 1] = cos
    if layout.has("pad"):
        out[layout.family_offset("pad")] = 1.0
    return out


# -- proximity families -----------------------------------------------------


def _match_cells(
    context: Context, query: Query, stats: CorpusStats, layout: FeatureLayout
) -> list[tuple[int, int]]:
    total_idf = compute_idf(stats, query)
    cells = []
    for text, distance in context.matches.items():
        fraction = compute_idf(stats, text) / total_idf
        cells.append((layout.idf_bucket(fraction), layout.distance_bucket(distance)))
    return cells


def idfupto_features(
    context: Context, query: Query, stats: CorpusStats, layout: FeatureLayout
) -> FeatureVector:
    """Matched-IDF fraction within each distance boundary.

    Feature for boundary L sums IDF(t)/IDF(query) over matched terms with
    distance <= L, so values are non-decreasing across boundaries and
    never exceed 1.
    """
    offset = layout.family_offset("idfupto")
    total_idf = compute_idf(stats, query)
    out: FeatureVector = {}
    for b, boundary in enumerate(layout.distance_boundaries):
        value = sum(
            compute_idf(stats, text) / total_idf
            for text, distance in context.matches.items()
            if distance <= boundary
        )
        if value:
            out[offset + b] = value
    return out


def grid_features(
    context: Context, query: Query, stats: CorpusStats, layout: FeatureLayout
) -> FeatureVector:
    """Rarity-by-proximity histogram: one increment per matched term."""
    out: FeatureVector = {}
    for i, j in _match_cells(context, query, stats, layout):
        idx = layout.cell_index("grid", i, j)
        out[idx] = out.get(idx, 0.0) + 1.0
    return out


def rectangle_features(
    context: Context, query: Query, stats: CorpusStats, layout: FeatureLayout
) -> FeatureVector:
    """Cumulative histogram: a match at (i, j) fires all cells (i', j')
    with i' <= i and j' <= j, one count each, additive across matches."""
    out: FeatureVector = {}
    for i, j in _match_cells(context, query, stats, layout):
        for ii in range(i + 1):
            for jj in range(j + 1):
                idx = layout.cell_index("rectangle", ii, jj)
                out[idx] = out.get(idx, 0.0) + 1.0
    return out


def build_feature_vector(
    document: Document,
    context: Context | None,
    query: Query,
    stats: CorpusStats,
    layout: FeatureLayout,
    params: Bm25Params = Bm25Params(),
) -> FeatureVector:
    """Assemble the full sparse vector for one context under the layout."""
    if layout.needs_context and context is None:
        raise FeatureError("layout has proximity families but no context was given")
    if context is not None and context.doc_id != document.doc_id:
        raise FeatureError(
            f"context from doc {context.doc_id!r} paired with document {document.doc_id!r}"
        )
    out = dict(document_scores(document, query, stats, layout, params))
    if context is not None:
        if layout.has("idfupto"):
            out.update(idfupto_features(context, query, stats, layout))
        if layout.has("grid"):
            out.update(grid_features(context, query, stats, layout))
        if layout.has("rectangle"):
            out.update(rectangle_features(context, query, stats, layout))
    for idx, value in out.items():
        if not (0 <= idx < layout.dimension):
            raise FeatureError(f"feature index {idx} outside layout dimension {layout.dimension}")
        if not math.isfinite(value) or value < 0.0:
            raise FeatureError(f"feature {idx} has invalid value {value!r}")
    return out


def to_dense(vector: Mapping[int, float], dimension: int) -> np.ndarray:
    out = np.zeros(dimension, dtype=float)
    for idx, value in vector.items():
        out[idx] = value
    return out


def context_matrix(
    index: CorpusIndex,
    query: Query,
    contexts: Iterable[Context],
    layout: FeatureLayout,
    params: Bm25Params = Bm25Params(),
) -> np.ndarray:
    """Stack feature vectors for an entity's contexts into an (n, M) array.

    Whole-document scores are computed once per distinct document.
    """
    doc_part: dict[str, FeatureVector] = {}
    rows = []
    for ctx in contexts:
        document = index.documents[ctx.doc_id]
        if ctx.doc_id not in doc_part:
            doc_part[ctx.doc_id] = document_scores(document, query, index.stats, layout, params)
        vector = dict(doc_part[ctx.doc_id])
        if layout.has("idfupto"):
            vector.update(idfupto_features(ctx, query, index.stats, layout))
        if layout.has("grid"):
            vector.update(grid_features(ctx, query, index.stats, layout))
        if layout.has("rectangle"):
            vector.update(rectangle_features(ctx, query, index.stats, layout))
        rows.append(to_dense(vector, layout.dimension))
    if not rows:
        return np.zeros((0, layout.dimension), dtype=float)
    return np.vstack(rows)
