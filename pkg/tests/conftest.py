"""Shared fixtures; the heavy lifting lives in helpers.py."""

import pytest

from helpers import make_fixture_corpus, make_pool_dir


@pytest.fixture(scope="session")
def corpus():
    return make_fixture_corpus()


@pytest.fixture
def pool_dir(tmp_path):
    return make_pool_dir(tmp_path / "pool", n=6)
