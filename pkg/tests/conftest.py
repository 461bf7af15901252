import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hyperpred.hypergraph import Hypergraph

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])  # fmt: skip
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy():
    """Six nodes, four hyperedges, random 3-d features."""
    features = np.random.default_rng(0).normal(size=(6, 3))
    return Hypergraph(6, ((0, 1, 2), (2, 3), (3, 4, 5), (0, 5)), features)


def random_hypergraph(rng, num_nodes=50, num_edges=60, size_range=(2, 5)):
    edges = set()
    while len(edges) < num_edges:
        n = int(rng.integers(size_range[0], size_range[1] + 1))
        edges.add(tuple(sorted(rng.choice(num_nodes, size=n, replace=False).tolist())))
    return Hypergraph(num_nodes, tuple(sorted(edges)), np.eye(num_nodes))


@pytest.fixture
def random_h(rng):
    return random_hypergraph(rng)
