"""
A labeled random graph generator with a controlled edge homophily ratio.
"""
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from dssl.errors import SyntheticSpecError
from dssl.graph import Graph

# Above this share of the available pairs, candidates are enumerated instead of rejected.
DENSE_SHARE = 0.5


@dataclass(frozen=True)
class SyntheticSpec:
    num_nodes: int = 2000
    class_count: int = 5
    feature_dim: int = 32
    homophily: float = 0.5
    mean_degree: float = 12.0
    feature_signal: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2:
            raise SyntheticSpecError(f"class_count must be at least 2, got {self.class_count}")
        if self.mean_degree < 1:
            raise SyntheticSpecError(f"mean_degree must be at least 1, got {self.mean_degree}")
        if not 0.0 <= self.homophily <= 1.0:
            raise SyntheticSpecError(f"homophily must lie in [0, 1], got {self.homophily}")
        if self.num_nodes < self.class_count:
            raise SyntheticSpecError(
                f"num_nodes ({self.num_nodes}) must be at least class_count ({self.class_count})"
            )
        if self.feature_dim < 1:
            raise SyntheticSpecError(f"feature_dim must be at least 1, got {self.feature_dim}")
        if self.feature_signal < 0:
            raise SyntheticSpecError(
                f"feature_signal must be non-negative, got {self.feature_signal}"
            )

    @property
    def edge_count(self) -> int:
        return math.ceil(self.num_nodes * self.mean_degree / 2)

    @property
    def intra_count(self) -> int:
        return int(round(self.homophily * self.edge_count))

    def to_dict(self) -> dict:
        return asdict(self)


class _PairSampler:
    """Draws distinct unordered node pairs, either within a class or across classes."""

    def __init__(self, labels: np.ndarray, class_count: int, rng: np.random.Generator):
        self.labels = labels
        self.n = len(labels)
        self.rng = rng
        self.order = np.argsort(labels, kind="stable")
        self.sizes = np.bincount(labels, minlength=class_count)
        self.starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        self.intra_capacity = int((self.sizes * (self.sizes - 1) // 2).sum())
        self.inter_capacity = self.n * (self.n - 1) // 2 - self.intra_capacity

    def sample(self, count: int, intra: bool) -> np.ndarray:
        capacity = self.intra_capacity if intra else self.inter_capacity
        kind = "intra-class" if intra else "cross-class"
        if count > capacity:
            raise SyntheticSpecError(
                f"requested {count} {kind} edges but only {capacity} distinct pairs exist"
            )
        if count == 0:
            return np.zeros((0, 2), dtype=np.int64)
        if count > DENSE_SHARE * capacity:
            return self._enumerate(count, intra)
        return self._reject(count, intra)

    def _enumerate(self, count: int, intra: bool) -> np.ndarray:
        u, v = np.triu_indices(self.n, k=1)
        same = self.labels[u] == self.labels[v]
        keep = same if intra else ~same
        pairs = np.column_stack([u[keep], v[keep]])
        picked = self.rng.choice(len(pairs), size=count, replace=False)
        return pairs[np.sort(picked)]

    def _reject(self, count: int, intra: bool) -> np.ndarray:
        found = []
        taken = set()
        while len(found) < count:
            draws = int((count - len(found)) * 1.2) + 16
            u = self.rng.integers(0, self.n, size=draws)
            cls = self.labels[u]
            if intra:
                idx = self.starts[cls] + self.rng.integers(0, self.sizes[cls])
            else:
                r = self.rng.integers(0, self.n - self.sizes[cls])
                idx = np.where(r < self.starts[cls], r, r + self.sizes[cls])
            v = self.order[idx]
            for a, b in zip(u.tolist(), v.tolist()):
                if a == b:
                    continue
                key = (min(a, b), max(a, b))
                if key in taken:
                    continue
                taken.add(key)
                found.append(key)
                if len(found) == count:
                    break
        return np.array(found, dtype=np.int64)


def generate_synthetic(spec: SyntheticSpec) -> Graph:
    """
    Generate a labeled graph whose edge homophily matches the requested ratio.

    Labels are balanced and shuffled. Exactly round(h * M) of the M edges join
    two nodes of one class; the rest join nodes of two different classes.
    Features are Gaussian around per-class means placed `feature_signal` from
    the origin in random directions.

    Args:
        spec (SyntheticSpec): generator settings

    Raises:
        SyntheticSpecError: the requested edges cannot be placed

    Returns:
        Graph: the synthetic graph, identical for identical specs
    """
    rng = np.random.default_rng(spec.seed)
    n, classes = spec.num_nodes, spec.class_count
    labels = rng.permutation(np.arange(n) % classes)

    sampler = _PairSampler(labels, classes, rng)
    n_intra = spec.intra_count
    n_inter = spec.edge_count - n_intra
    intra = sampler.sample(n_intra, intra=True)
    inter = sampler.sample(n_inter, intra=False)
    edges = np.vstack([intra, inter])

    directions = rng.standard_normal((classes, spec.feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    features = spec.feature_signal * directions[labels] + rng.standard_normal(
        (n, spec.feature_dim)
    )

    logging.debug(f"Generated {len(edges)} edges ({n_intra} intra-class) for {n} nodes")
    return Graph.build(
        n,
        edges,
        features,
        labels=labels,
        class_count=classes,
        name=f"synthetic-h{spec.homophily:g}-s{spec.seed}",
    )
