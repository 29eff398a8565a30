"""Shared builders for randomized test instances."""

from __future__ import annotations

import numpy as np

from proxrank.corpus import Document, Judgments, Mention, Query, QueryTerm, ingest_corpus
from proxrank.training import PreparedQuery


def random_prepared(
    rng: np.random.Generator,
    query_id: str = "q",
    n_entities: int | None = None,
    dimension: int | None = None,
    max_contexts: int = 10,
    scale: float = 1.0,
) -> PreparedQuery:
    """Random feature stacks with non-negative entries, half the entities
    judged good and half bad."""
    n_entities = n_entities or int(rng.integers(2, 7))
    dimension = dimension or int(rng.integers(2, 21))
    matrices = [
        scale * rng.random((int(rng.integers(1, max_contexts + 1)), dimension))
        for _ in range(n_entities)
    ]
    ids = [f"e{k}" for k in range(n_entities)]
    half = max(1, n_entities // 2)
    return PreparedQuery.from_matrices(
        query_id, ids, matrices, judged_good=ids[:half], judged_bad=ids[half:]
    )


def documents_to_index(documents, catalog=None):
    """Round-trip package documents through the ingest path."""
    records = [
        {
            "doc_id": d.doc_id,
            "tokens": list(d.tokens),
            "mentions": [
                {"entity_id": m.entity_id, "start": m.start, "end": m.end} for m in d.mentions
            ],
        }
        for d in documents
    ]
    return ingest_corpus(records, catalog)


def tiny_corpus() -> tuple[list[Document], Query, Judgments]:
    """Three-document corpus with one query, small enough to hand-check."""
    documents = [
        Document(
            doc_id="a",
            tokens=("the", "red", "fox", "jumped", "over", "the", "lazy", "dog"),
            mentions=(Mention("fox", 2, 3), Mention("dog", 7, 8)),
        ),
        Document(
            doc_id="b",
            tokens=("a", "fox", "story", "about", "one", "red", "fox"),
            mentions=(Mention("fox", 1, 2), Mention("fox", 6, 7)),
        ),
        Document(
            doc_id="c",
            tokens=("nothing", "relevant", "here", "at", "all"),
            mentions=(),
        ),
    ]
    query = Query(query_id="q1", terms=[QueryTerm("red"), QueryTerm("jumped")])
    judgments = Judgments(good={"q1": frozenset({"fox"})}, bad={"q1": frozenset({"dog"})})
    return documents, query, judgments
