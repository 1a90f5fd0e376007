import numpy as np
import pytest

from vasfilter.embstore import EmbeddingMatrix


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return (x / np.linalg.norm(x, axis=1, keepdims=True)).astype(np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_matrix(rng):
    def make(n, d, modality="vision", ids=None):
        return EmbeddingMatrix(unit_rows(rng, n, d), ids=ids, modality=modality, normalized=True)

    return make
