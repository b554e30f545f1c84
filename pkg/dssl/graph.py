"""
Immutable graph storage, file ingestion, adjacency normalization and neighbor sampling.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix, diags, identity

import dssl.parsers.edges as edge_parser
import dssl.parsers.features as feature_parser
import dssl.parsers.labels as label_parser
from dssl.errors import GraphError, GraphParseError
from dssl.tensor import SparseMatrix, Tensor


@dataclass(frozen=True, eq=False)
class Graph:
    """
    A node/edge store with features and optional labels.

    `edges` holds every stored directed pair; an undirected graph keeps both
    (u, v) and (v, u). Use `Graph.build` to canonicalize raw edge lists.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    class_count: int = 0
    directed: bool = False
    name: str = field(default="graph", compare=False)

    @classmethod
    def build(
        cls,
        num_nodes: int,
        edges,
        features,
        labels=None,
        class_count: Optional[int] = None,
        directed: bool = False,
        name: str = "graph",
    ) -> "Graph":
        """
        Canonicalize an edge list and assemble a Graph.

        Self-loops are dropped, undirected edges are stored in both directions,
        and duplicate directed pairs are removed.

        Args:
            num_nodes (int): N
            edges (array-like): E x 2 node id pairs
            features (array-like): N x D feature matrix
            labels (array-like, optional): class ids in [0, C), -1 for unlabeled
            class_count (int, optional): C; inferred from labels when omitted
            directed (bool, optional): keep edges as given. Defaults to False.
            name (str, optional): label used in log messages

        Raises:
            GraphError: inconsistent sizes or ids

        Returns:
            Graph: the canonical graph
        """
        features = np.array(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != num_nodes:
            raise GraphError(
                f"features must be {num_nodes} x D, got shape {features.shape}"
            )
        pairs = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= num_nodes):
            raise GraphError(f"edge endpoint out of range for {num_nodes} nodes")

        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        if not directed:
            pairs = np.vstack([pairs, pairs[:, ::-1]])
        pairs = np.unique(pairs, axis=0) if pairs.size else pairs.reshape(0, 2)

        if labels is not None:
            labels = np.array(labels, dtype=np.int64)
            if labels.shape != (num_nodes,):
                raise GraphError(f"expected {num_nodes} labels, got {labels.shape[0]}")
            inferred = int(labels.max()) + 1 if labels.size else 0
            class_count = inferred if class_count is None else int(class_count)
            if labels.size and (labels.min() < -1 or labels.max() >= class_count):
                raise GraphError(f"labels must lie in [0, {class_count}) or be -1")
            labels.flags.writeable = False

        features.flags.writeable = False
        pairs.flags.writeable = False
        return cls(
            num_nodes=int(num_nodes),
            edges=pairs,
            features=features,
            labels=labels,
            class_count=int(class_count or 0),
            directed=bool(directed),
            name=name,
        )

    @property
    def num_edges(self) -> int:
        """Undirected edge count for undirected graphs, directed count otherwise."""
        return len(self.edges) if self.directed else len(self.edges) // 2

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @cached_property
    def x(self) -> Tensor:
        return Tensor(self.features)

    @cached_property
    def adjacency(self) -> csr_matrix:
        n = self.num_nodes
        data = np.ones(len(self.edges), dtype=np.float64)
        return csr_matrix((data, (self.edges[:, 0], self.edges[:, 1])), shape=(n, n))

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    @cached_property
    def propagation(self) -> SparseMatrix:
        return normalized_adjacency(self)

    def neighbors(self, node: int) -> np.ndarray:
        """Out-neighbors of a node, sorted by id."""
        adj = self.adjacency
        return adj.indices[adj.indptr[node] : adj.indptr[node + 1]]

    def undirected_edges(self) -> np.ndarray:
        """Each undirected edge once, as (u, v) with u < v."""
        if self.directed:
            pairs = np.sort(self.edges, axis=1)
            return np.unique(pairs, axis=0) if pairs.size else pairs
        return self.edges[self.edges[:, 0] < self.edges[:, 1]]

    def permute(self, perm) -> "Graph":
        """Relabel nodes so that old node i becomes perm[i]."""
        perm = np.asarray(perm, dtype=np.int64)
        features = np.empty_like(self.features)
        features[perm] = self.features
        labels = None
        if self.labels is not None:
            labels = np.empty_like(self.labels)
            labels[perm] = self.labels
        return Graph.build(
            self.num_nodes,
            perm[self.edges],
            features,
            labels=labels,
            class_count=self.class_count if self.labels is not None else None,
            directed=self.directed,
            name=self.name,
        )


def load_graph(
    edge_path: str,
    feature_path: str,
    label_path: Optional[str] = None,
    directed: bool = False,
) -> Graph:
    """
    Load a graph from an edge list, a feature CSV and an optional label file.

    Args:
        edge_path (str): whitespace separated node id pairs
        feature_path (str): headerless CSV, one row per node
        label_path (str, optional): one class id per line, -1 for unlabeled
        directed (bool, optional): keep edges directed. Defaults to False.

    Raises:
        GraphParseError: malformed input, naming the file and line

    Returns:
        Graph: the loaded graph
    """
    features = feature_parser.parse(feature_path)
    num_nodes = features.shape[0]
    edges = edge_parser.parse(edge_path, num_nodes=num_nodes)

    labels = None
    if label_path:
        labels = label_parser.parse(label_path)
        if len(labels) != num_nodes:
            raise GraphParseError(
                label_path,
                min(len(labels), num_nodes) + 1,
                f"expected {num_nodes} labels to match the feature rows, found {len(labels)}",
            )

    graph = Graph.build(
        num_nodes, edges, features, labels=labels, directed=directed, name=str(edge_path)
    )
    logging.info(
        f"Loaded {graph.num_nodes} nodes, {graph.num_edges} edges, "
        f"{graph.feature_dim} features, {graph.class_count} classes"
    )
    return graph


def normalized_adjacency(g: Graph) -> SparseMatrix:
    """
    The GCN propagation matrix D^-1/2 (A + I) D^-1/2 with D the degree of A + I.

    Args:
        g (Graph): the graph

    Returns:
        SparseMatrix: N x N, symmetric for undirected graphs
    """
    a_hat = g.adjacency + identity(g.num_nodes, format="csr")
    deg = np.asarray(a_hat.sum(axis=1)).reshape(-1)
    scale = diags(1.0 / np.sqrt(deg))
    return SparseMatrix(scale @ a_hat @ scale)


def sample_neighbors(g: Graph, node: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw m neighbors uniformly with replacement; an isolated node yields [node].

    Args:
        g (Graph): the graph
        node (int): the central node
        m (int): number of draws
        rng (np.random.Generator): seed-state

    Returns:
        np.ndarray: neighbor ids
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    nbrs = g.neighbors(node)
    if len(nbrs) == 0:
        return np.array([node], dtype=np.int64)
    return nbrs[rng.integers(0, len(nbrs), size=m)]


def sample_neighbor_batch(
    g: Graph, nodes: np.ndarray, m: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Vectorized `sample_neighbors` for a batch of central nodes.

    Isolated nodes get their own id in every column.

    Returns:
        np.ndarray: B x m neighbor ids
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    nodes = np.asarray(nodes, dtype=np.int64)
    adj = g.adjacency
    start = adj.indptr[nodes]
    deg = adj.indptr[nodes + 1] - start
    offsets = rng.integers(0, np.maximum(deg, 1)[:, None], size=(len(nodes), m))
    isolated = np.repeat(nodes[:, None], m, axis=1)
    if adj.nnz == 0:
        return isolated
    has_nbrs = deg[:, None] > 0
    position = np.where(has_nbrs, start[:, None] + offsets, 0)
    return np.where(has_nbrs, adj.indices[position], isolated).astype(np.int64)


def write_graph(g: Graph, prefix: str) -> dict:
    """
    Write the edge, feature and label files of a graph.

    Args:
        g (Graph): the graph to write
        prefix (str): output path prefix

    Returns:
        dict: paths keyed by 'edges', 'features' and 'labels'
    """
    paths = {
        "edges": f"{prefix}.edges",
        "features": f"{prefix}.features.csv",
        "labels": f"{prefix}.labels",
    }
    pd.DataFrame(g.undirected_edges()).to_csv(
        paths["edges"], sep=" ", header=False, index=False
    )
    pd.DataFrame(g.features).to_csv(
        paths["features"], header=False, index=False, float_format="%.17g"
    )
    if g.labels is not None:
        pd.Series(g.labels).to_csv(paths["labels"], header=False, index=False)
    else:
        del paths["labels"]
    for kind, path in paths.items():
        logging.debug(f"Wrote {kind} to {path}")
    return paths
