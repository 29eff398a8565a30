import os

import pytest

from proxrank.corpus import load_corpus, read_qrels, read_queries

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


@pytest.fixture(scope="session")
def fixture_index():
    return load_corpus(
        os.path.join(DATA_DIR, "fixture_corpus.jsonl"),
        os.path.join(DATA_DIR, "fixture_catalog.jsonl"),
    )


@pytest.fixture(scope="session")
def fixture_queries():
    return read_queries(os.path.join(DATA_DIR, "fixture_queries.jsonl"))


@pytest.fixture(scope="session")
def fixture_qrels():
    return read_qrels(os.path.join(DATA_DIR, "fixture_qrels.txt"))
