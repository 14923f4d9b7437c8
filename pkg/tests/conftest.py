import numpy as np
import pytest

from ugd.noise import generate_sbm
from ugd.io import write_graph

from tests.common import path_graph, two_cliques


@pytest.fixture
def path3():
    return path_graph()


@pytest.fixture
def cliques():
    return two_cliques()


@pytest.fixture(scope='session')
def small_sbm():
    return generate_sbm(n=60, k=2, p_in=0.3, p_out=0.02, feature_centers_sep=1.5, seed=3, d=8, feature_std=0.5)


@pytest.fixture(scope='session')
def benchmark_sbm():
    return generate_sbm(n=400, k=4, p_in=0.05, p_out=0.005, feature_centers_sep=1.5, seed=0, d=32, feature_std=0.5)


@pytest.fixture
def sbm_dir(tmp_path, small_sbm):
    graph_dir = tmp_path / 'g'
    write_graph(small_sbm, str(graph_dir))
    return graph_dir


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
