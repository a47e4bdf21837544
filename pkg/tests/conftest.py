import pytest

from wearlog import fixture_gen


@pytest.fixture(scope="session")
def paper_bundle():
    return fixture_gen.generate(fixture_gen.paper_fixture_spec())


@pytest.fixture(scope="session")
def paper_dir(tmp_path_factory, paper_bundle):
    """Paper-shaped fixture written to disk once per session."""
    out = tmp_path_factory.mktemp("paper_fixture")
    return paper_bundle.write_to(out)
