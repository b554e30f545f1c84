import numpy as np
import pytest

import dssl.tensor as T
from dssl.errors import ConfigError, GraphError
from dssl.gae import GaeConfig, gae_loss, sample_negative_edges, train_gae
from dssl.graph import Graph
from dssl.model import EncoderParams, ModelDims, encode, init_params
from dssl.optim import Adam
from dssl.tensor import Tensor


def test_gae_loss_value():
    reps = Tensor(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    loss = gae_loss(reps, [(0, 1)], [(0, 2)]).item()
    # the linked pair scores 1, the unlinked pair scores 0
    assert loss == pytest.approx((np.log1p(np.exp(-1.0)) + np.log(2.0)) / 2)


def test_gae_loss_needs_pairs():
    with pytest.raises(ValueError):
        gae_loss(Tensor(np.eye(2)), np.zeros((0, 2)), np.zeros((0, 2)))


def test_gae_loss_gradient():
    pos = np.array([[0, 1], [2, 3]])
    neg = np.array([[0, 3], [1, 2], [0, 2]])
    x = Tensor(np.random.default_rng(0).standard_normal((4, 3)))
    assert T.finite_diff_check(lambda r: gae_loss(r, pos, neg), x) < 1e-6


def test_negative_samples_avoid_edges(tiny_graph):
    pairs = sample_negative_edges(tiny_graph, 50, np.random.default_rng(0))
    assert pairs.shape == (50, 2)
    linked = {tuple(e) for e in tiny_graph.edges.tolist()}
    for u, v in pairs.tolist():
        assert u != v
        assert (u, v) not in linked


def test_complete_graph_has_no_negatives():
    edges = [(u, v) for u in range(4) for v in range(u + 1, 4)]
    g = Graph.build(4, edges, np.zeros((4, 1)))
    with pytest.raises(GraphError):
        sample_negative_edges(g, 1, np.random.default_rng(0))


def test_config_validation():
    with pytest.raises(ConfigError):
        GaeConfig(edge_batch_size=0)
    with pytest.raises(ConfigError):
        GaeConfig(precision="half")


def test_train_gae_log(tiny_graph):
    seen = []
    config = GaeConfig(hidden_dim=4, out_dim=3, epochs=2, edge_batch_size=3, learning_rate=0.01)
    result = train_gae(tiny_graph, config, on_epoch=seen.append)
    assert seen == result.log
    assert [r["epoch"] for r in result.log] == [1, 2]
    for record in result.log:
        assert np.isfinite(record["loss_total"])
        assert record["loss_local"] is None
        assert record["effective_clusters"] is None
        assert -1.0 <= record["mean_pairwise_cosine"] <= 1.0
    assert result.encoder.W2.shape == (4, 3)


def test_gae_shares_the_encoder_initialization(tiny_graph):
    result = train_gae(tiny_graph, GaeConfig(hidden_dim=4, out_dim=3, epochs=0, seed=5))
    reference = init_params(ModelDims(4, 4, 3), 7, seed=5).online
    assert np.array_equal(result.encoder.W1.data, reference.W1.data)
    assert np.array_equal(result.encoder.W2.data, reference.W2.data)
    assert result.log == []


def test_gae_loss_decreases_under_training(tiny_graph):
    encoder = init_params(ModelDims(4, 4, 3), 1, seed=0).online
    positives = tiny_graph.undirected_edges()
    negatives = np.array([(0, 4), (1, 5), (0, 5), (1, 3), (2, 4)])
    optimizer = Adam(lr=0.01, weight_decay=0.0)
    state = optimizer.init_state({"W1": encoder.W1.data, "W2": encoder.W2.data})
    losses = []
    for _ in range(200):
        with T.Tape():
            reps = encode(encoder, tiny_graph.propagation, tiny_graph.x)
            loss = gae_loss(reps, positives, negatives)
            grads = T.backward(loss, wrt=[encoder.W1, encoder.W2])
        losses.append(loss.item())
        arrays = optimizer.step(
            {"W1": encoder.W1.data, "W2": encoder.W2.data},
            {"W1": grads[encoder.W1], "W2": grads[encoder.W2]},
            state,
        )
        encoder = EncoderParams(
            Tensor(arrays["W1"], requires_grad=True), Tensor(arrays["W2"], requires_grad=True)
        )
    assert losses[-1] < losses[0]
    assert np.mean(losses[-20:]) < np.mean(losses[:20])


def test_train_gae_is_deterministic(tiny_graph):
    config = GaeConfig(hidden_dim=4, out_dim=3, epochs=5, edge_batch_size=3, seed=2)
    a = train_gae(tiny_graph, config)
    b = train_gae(tiny_graph, config)
    assert np.array_equal(a.encoder.W1.data, b.encoder.W1.data)
    assert np.array_equal(a.encoder.W2.data, b.encoder.W2.data)
    assert [r["loss_total"] for r in a.log] == [r["loss_total"] for r in b.log]


def test_train_gae_restores_the_default_precision(tiny_graph):
    config = GaeConfig(hidden_dim=4, out_dim=3, epochs=1, precision="float32")
    result = train_gae(tiny_graph, config)
    assert result.encoder.W1.data.dtype == np.float32
    assert T.get_default_dtype() == np.float64
