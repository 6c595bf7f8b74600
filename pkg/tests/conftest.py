import pytest

from grounddesk import corpus, pipeline


@pytest.fixture(scope="session")
def desk20():
    return corpus.build_entity_pool("desk20")


@pytest.fixture(scope="session")
def avocado(desk20):
    return next(c for c in desk20 if c.name == "avocado")


@pytest.fixture(scope="session")
def default_bundle():
    return pipeline.default_corpus(seed=0)


@pytest.fixture(scope="session")
def default_triplets(default_bundle):
    return pipeline.label_corpus(default_bundle)
