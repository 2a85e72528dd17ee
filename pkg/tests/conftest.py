import pytest

from ocskit import matching


@pytest.fixture(scope="session")
def uw_consistent():
    return matching.cached_tables("unweighted", "consistent")


@pytest.fixture(scope="session")
def uw_paper():
    return matching.cached_tables("unweighted", "paper")


@pytest.fixture(scope="session")
def w10_consistent():
    return matching.cached_tables("weighted", "consistent", 10, 10)


@pytest.fixture(scope="session")
def w10_paper():
    return matching.cached_tables("weighted", "paper", 10, 10)
