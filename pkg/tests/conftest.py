import numpy as np
import pytest
from hypothesis import settings

from camel.core import FeatureSet

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


def random_featureset(rng, V=2, M=3, N=8, labeled=False):
    views = np.concatenate([np.arange(V), rng.integers(0, V, size=N - V)])
    rng.shuffle(views)
    ids = rng.integers(0, max(2, N // 2), size=N) if labeled else None
    return FeatureSet(rng.standard_normal((N, M)), views, ids, V)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
