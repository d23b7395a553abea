import numpy as np
import pytest
from hypothesis import settings

from gfnode.synthetic import random_connected_graph

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_graphs(count, seed=0, max_nodes=20, min_nodes=2):
    rng = np.random.default_rng(seed)
    return [random_connected_graph(int(rng.integers(min_nodes, max_nodes + 1)), rng)
            for _ in range(count)]
