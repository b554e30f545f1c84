import numpy as np
import pytest

from dssl.errors import GraphError
from dssl.graph import Graph
from dssl.metrics import (
    class_average_homophily,
    cross_class_neighborhood_similarity,
    edge_homophily,
    neighbor_label_counts,
    summarize,
)


def bipartite_graph():
    # every edge joins class 0 to class 1
    edges = [(0, 2), (0, 3), (1, 2), (1, 3)]
    return Graph.build(4, edges, np.zeros((4, 1)), labels=[0, 0, 1, 1])


def test_triangle_is_fully_homophilous(triangle_graph):
    assert edge_homophily(triangle_graph) == 1.0


def test_tiny_graph_homophily(tiny_graph):
    # six of the seven edges stay inside a triangle
    assert edge_homophily(tiny_graph) == pytest.approx(6 / 7)


def test_bipartite_graph_has_zero_homophily():
    g = bipartite_graph()
    assert edge_homophily(g) == 0.0
    assert class_average_homophily(g) == 0.0


def test_unlabeled_endpoints_are_ignored():
    g = Graph.build(3, [(0, 1), (1, 2)], np.zeros((3, 1)), labels=[0, 0, -1], class_count=2)
    assert edge_homophily(g) == 1.0


def test_metrics_need_labels():
    g = Graph.build(2, [(0, 1)], np.zeros((2, 1)))
    with pytest.raises(GraphError):
        edge_homophily(g)


def test_class_average_homophily_needs_two_classes():
    g = Graph.build(2, [(0, 1)], np.zeros((2, 1)), labels=[0, 0])
    with pytest.raises(GraphError):
        class_average_homophily(g)


def test_class_average_homophily_hand_computed(tiny_graph):
    # class 0: 6 of 7 neighbor slots same-class, class 1 likewise; both classes hold half the nodes
    expected = 2 * (6 / 7 - 0.5) / 1
    assert class_average_homophily(tiny_graph) == pytest.approx(expected)


def test_neighbor_label_counts(tiny_graph):
    counts = neighbor_label_counts(tiny_graph)
    assert counts.shape == (6, 2)
    assert counts[2].tolist() == [2.0, 1.0]
    assert counts[0].tolist() == [2.0, 0.0]


def test_cross_class_similarity_bipartite():
    # all neighbors of a class sit in the other class, so same-class histograms coincide
    sim = cross_class_neighborhood_similarity(bipartite_graph())
    assert np.allclose(sim, np.eye(2))


def test_cross_class_similarity_matches_pairwise_average():
    rng = np.random.default_rng(11)
    n, classes = 50, 3
    pairs = np.argwhere(np.triu(rng.random((n, n)) < 0.15, k=1))
    labels = rng.integers(0, classes, size=n)
    g = Graph.build(n, pairs, np.zeros((n, 1)), labels=labels)

    counts = neighbor_label_counts(g)
    expected = np.zeros((classes, classes))
    for a in range(classes):
        for b in range(classes):
            rows = [i for i in range(n) if labels[i] == a and counts[i].any()]
            cols = [j for j in range(n) if labels[j] == b and counts[j].any()]
            cosines = [
                counts[i] @ counts[j] / (np.linalg.norm(counts[i]) * np.linalg.norm(counts[j]))
                for i in rows
                for j in cols
            ]
            expected[a, b] = np.mean(cosines)
    assert np.allclose(cross_class_neighborhood_similarity(g), expected, atol=1e-12)


def test_cross_class_similarity_is_symmetric(tiny_graph):
    sim = cross_class_neighborhood_similarity(tiny_graph)
    assert np.allclose(sim, sim.T)
    assert np.all(np.diag(sim) > sim[0, 1])


def test_summarize_is_json_ready(tiny_graph):
    summary = summarize(tiny_graph)
    assert summary["n_nodes"] == 6
    assert summary["n_edges"] == 7
    assert summary["n_classes"] == 2
    assert len(summary["cross_class_similarity"]) == 2
    assert set(summary) == {
        "edge_homophily",
        "class_average_homophily",
        "cross_class_similarity",
        "n_nodes",
        "n_edges",
        "n_classes",
    }
