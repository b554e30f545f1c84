"""
Homophily and neighborhood-similarity measures of labeled graphs.
"""
import logging

import numpy as np
from scipy.sparse import csr_matrix

from dssl.errors import GraphError
from dssl.graph import Graph


def _require_labels(g: Graph) -> np.ndarray:
    if g.labels is None:
        raise GraphError(f"{g.name} has no labels; homophily metrics need labels")
    return g.labels


def edge_homophily(g: Graph) -> float:
    """
    Fraction of edges whose endpoints share a label.

    Edges touching an unlabeled node are ignored.

    Args:
        g (Graph): a labeled graph

    Raises:
        GraphError: missing labels or no labeled edge

    Returns:
        float: a value in [0, 1]
    """
    labels = _require_labels(g)
    edges = g.undirected_edges()
    lu, lv = labels[edges[:, 0]], labels[edges[:, 1]]
    keep = (lu >= 0) & (lv >= 0)
    if not keep.any():
        raise GraphError(f"{g.name} has no edge between labeled nodes")
    return float(np.mean(lu[keep] == lv[keep]))


def neighbor_label_counts(g: Graph) -> np.ndarray:
    """
    Histogram of neighbor labels per node.

    Returns:
        np.ndarray: N x C counts, unlabeled neighbors not counted
    """
    labels = _require_labels(g)
    labeled = labels[g.edges[:, 1]] >= 0
    rows = g.edges[labeled, 0]
    cols = labels[g.edges[labeled, 1]]
    counts = csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(g.num_nodes, g.class_count)
    )
    return counts.toarray()


def class_average_homophily(g: Graph) -> float:
    """
    Class-insensitive homophily that discounts each class by its size.

    h_k is the share of same-class neighbors over all neighbors of class-k nodes;
    the result is sum_k max(h_k - |C_k| / N, 0) / (C - 1).

    Args:
        g (Graph): a labeled graph

    Raises:
        GraphError: missing labels or fewer than two classes

    Returns:
        float: the class-average homophily
    """
    labels = _require_labels(g)
    classes = g.class_count
    if classes < 2:
        raise GraphError(f"class-average homophily needs at least 2 classes, found {classes}")

    counts = neighbor_label_counts(g)
    labeled = labels >= 0
    n_labeled = int(labeled.sum())
    total = 0.0
    for k in range(classes):
        members = labels == k
        degree_sum = counts[members].sum()
        if degree_sum == 0:
            if members.any():
                logging.debug(f"Class {k} has no labeled neighbors; skipped")
            continue
        h_k = counts[members, k].sum() / degree_sum
        total += max(h_k - members.sum() / n_labeled, 0.0)
    return float(total / (classes - 1))


def cross_class_neighborhood_similarity(g: Graph) -> np.ndarray:
    """
    Mean cosine similarity of neighbor-label histograms between two classes.

    Entry (c, c') averages cos(d(i), d(j)) over all pairs with i in class c and
    j in class c'. Nodes without labeled neighbors are excluded; a class with no
    remaining node yields a NaN row and column.

    Args:
        g (Graph): a labeled graph

    Returns:
        np.ndarray: C x C symmetric matrix
    """
    labels = _require_labels(g)
    counts = neighbor_label_counts(g)
    norms = np.linalg.norm(counts, axis=1)
    usable = (norms > 0) & (labels >= 0)
    units = np.zeros_like(counts)
    units[usable] = counts[usable] / norms[usable, None]

    means = np.full((g.class_count, g.class_count), np.nan)
    for k in range(g.class_count):
        members = usable & (labels == k)
        if members.any():
            means[k] = units[members].mean(axis=0)
        else:
            logging.warning(f"Class {k} has no node with labeled neighbors; similarity undefined")
    similarity = means @ means.T
    return (similarity + similarity.T) / 2.0


def summarize(g: Graph) -> dict:
    """All graph metrics in one JSON-ready dictionary."""
    similarity = cross_class_neighborhood_similarity(g)
    return {
        "edge_homophily": edge_homophily(g),
        "class_average_homophily": class_average_homophily(g),
        "cross_class_similarity": [
            [None if np.isnan(val) else float(val) for val in row] for row in similarity
        ],
        "n_nodes": g.num_nodes,
        "n_edges": g.num_edges,
        "n_classes": g.class_count,
    }
