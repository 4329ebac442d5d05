import pytest

from pdqkd.presets import REFERENCE_RUNS


@pytest.fixture(scope="session")
def paper50km():
    return REFERENCE_RUNS["paper50km"]


@pytest.fixture(scope="session")
def source50(paper50km):
    return paper50km.manifest().to_source_params()


@pytest.fixture(scope="session")
def link50(paper50km):
    return paper50km.manifest().to_link_params()
