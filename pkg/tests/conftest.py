import numpy as np
import pytest

import dssl.tensor as T
from dssl.graph import Graph
from dssl.loss import DsslBatch, DsslHyper, gumbel_noise
from dssl.model import ModelDims, init_params


@pytest.fixture(autouse=True)
def default_precision():
    T.set_default_dtype("float64")
    T.set_checked(True)
    yield
    T.set_default_dtype("float64")
    T.set_checked(True)


@pytest.fixture
def tiny_graph():
    """Two triangles joined by one edge, six nodes, two classes."""
    edges = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (2, 3)]
    features = np.random.default_rng(0).standard_normal((6, 4))
    return Graph.build(6, edges, features, labels=[0, 0, 0, 1, 1, 1], name="tiny")


@pytest.fixture
def triangle_graph():
    features = np.eye(3)
    return Graph.build(3, [(0, 1), (1, 2), (2, 0)], features, labels=[0, 0, 0], class_count=2)


@pytest.fixture
def graph_files(tmp_path, tiny_graph):
    """The tiny graph written as edge, feature and label files."""
    from dssl.graph import write_graph

    return write_graph(tiny_graph, str(tmp_path / "tiny"))


@pytest.fixture
def make_instance():
    """
    Factory for small random loss instances: a 6-node graph, K=3, and a batch
    with every node as a central node and m=2 sampled neighbors.
    """

    def factory(seed: int, **hyper_kwargs):
        rng = np.random.default_rng(seed)
        n = 6
        pairs = np.array([(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)])
        graph = Graph.build(n, pairs, rng.standard_normal((n, 4)), name=f"instance-{seed}")
        params = init_params(ModelDims(4, hidden_dim=5, out_dim=3), 3, seed)
        # a target that differs from the online encoder
        params = params.with_tensors(
            {
                "target.W1": params.target.W1.data + 0.1 * rng.standard_normal((4, 5)),
                "target.W2": params.target.W2.data + 0.1 * rng.standard_normal((5, 3)),
            }
        )
        settings = dict(K=3, beta=0.6, sigma1_sq=0.6, sigma2_sq=0.6, gamma=0.6)
        settings.update(hyper_kwargs)
        hyper = DsslHyper(**settings)
        centrals = np.arange(n)
        neighbors = np.stack([rng.choice(graph.neighbors(i), size=2) for i in centrals])
        batch = DsslBatch(
            centrals,
            neighbors,
            noise=gumbel_noise(rng, (neighbors.size, 3)),
            global_noise=gumbel_noise(rng, (n, 3)),
        )
        return graph, params, batch, hyper

    return factory


@pytest.fixture
def separable_blobs():
    """Two Gaussian blobs ten standard deviations apart, 20 points each."""
    rng = np.random.default_rng(3)
    x = np.vstack([rng.normal(0.0, 1.0, (20, 2)), rng.normal(10.0, 1.0, (20, 2))])
    y = np.repeat([0, 1], 20)
    return x, y
