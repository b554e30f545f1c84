"""
Downstream evaluation of frozen representations: node splits, a linear probe,
k-means clustering and normalized mutual information.
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence, Tuple

import numpy as np
from sklearn.cluster import KMeans
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import accuracy_score, normalized_mutual_info_score

from dssl.errors import ConfigError, ProbeError
from dssl.utils import array_checksum

PROBE_GRID = (1e-4, 1e-3, 1e-2, 1e-1)
MIN_STRATUM = 3


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    val: float = 0.2
    test: float = 0.2
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        fractions = (self.train, self.val, self.test)
        if min(fractions) <= 0:
            raise ConfigError("split", f"fractions must be positive, got {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError("split", f"fractions must sum to 1, got {sum(fractions)}")


@dataclass(frozen=True)
class ProbeResult:
    accuracy: float
    val_accuracy: float
    regularization: float


@dataclass
class EvalReport:
    accuracy: float
    nmi: float
    val_accuracy: float
    split_sizes: dict
    probe: dict
    nmi_average: str
    num_clusters: int
    seed: int
    representation_checksum: str
    method: str = "dssl"
    homophily: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _split_sizes(n: int, spec: SplitSpec) -> np.ndarray:
    n_train = int(round(spec.train * n))
    n_val = min(int(round(spec.val * n)), n - n_train)
    return np.array([n_train, n_val, n - n_train - n_val])


def _cut(indices: np.ndarray, sizes: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    bounds = np.cumsum(sizes)[:-1]
    return tuple(np.split(indices, bounds))


def _allocate(class_sizes: np.ndarray, spec: SplitSpec) -> np.ndarray:
    """
    Share the overall split sizes across classes.

    Each class first gets the floor of its share of every split; the leftover
    nodes go, one per split, to the splits with the most unfilled places
    (ties broken by the larger fractional share). Row sums equal the class
    sizes, column sums equal the overall sizes, and every count stays within
    one of its exact share.

    Returns:
        np.ndarray: C x 3 node counts per class and split
    """
    fractions = np.array([spec.train, spec.val, spec.test])
    exact = np.outer(class_sizes, fractions)
    counts = np.floor(exact).astype(np.int64)
    remainder = exact - counts
    open_places = _split_sizes(int(class_sizes.sum()), spec) - counts.sum(axis=0)
    leftover = class_sizes - counts.sum(axis=1)

    for cls in np.argsort(-leftover, kind="stable"):
        order = sorted(range(3), key=lambda s: (-open_places[s], -remainder[cls, s], s))
        for s in order[: leftover[cls]]:
            counts[cls, s] += 1
            open_places[s] -= 1
    return counts


def split_nodes(labels, spec: SplitSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Partition the labeled nodes into train, validation and test sets.

    The overall sizes are rounded once; stratified splits then share them
    across classes. If any class has fewer than three members the split falls
    back to a global shuffle.

    Args:
        labels (array-like): class ids, -1 for unlabeled
        spec (SplitSpec): fractions, seed and stratification

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray]: sorted train, val and test node ids
    """
    labels = np.asarray(labels)
    labeled = np.flatnonzero(labels >= 0)
    rng = np.random.default_rng(spec.seed)

    stratified = spec.stratified
    if stratified:
        classes, counts = np.unique(labels[labeled], return_counts=True)
        small = classes[counts < MIN_STRATUM]
        if len(small):
            logging.warning(
                f"Classes {small.tolist()} have fewer than {MIN_STRATUM} members; "
                "using a global split instead of a stratified one"
            )
            stratified = False

    if not stratified:
        parts = _cut(rng.permutation(labeled), _split_sizes(len(labeled), spec))
    else:
        pieces = [[], [], []]
        for cls, sizes in zip(classes, _allocate(counts, spec)):
            members = rng.permutation(labeled[labels[labeled] == cls])
            for piece, part in zip(pieces, _cut(members, sizes)):
                piece.append(part)
        parts = [np.concatenate(piece) for piece in pieces]
    return tuple(np.sort(part).astype(np.int64) for part in parts)


def _fit_probe(x: np.ndarray, y: np.ndarray, regularization: float) -> LogisticRegression:
    # sklearn scales the data term by C; C = 1 / (lambda * n) matches mean loss + lambda/2 ||W||^2
    probe = LogisticRegression(
        C=1.0 / (regularization * len(y)), solver="lbfgs", tol=1e-6, max_iter=5000
    )
    return probe.fit(x, y)


def linear_probe(
    representations: np.ndarray,
    labels,
    splits: Tuple[np.ndarray, np.ndarray, np.ndarray],
    grid: Sequence[float] = PROBE_GRID,
) -> ProbeResult:
    """
    Multinomial logistic regression on frozen representations.

    The L2 strength is picked from `grid` by validation accuracy (ties go to
    the stronger penalty); test accuracy is reported for the chosen model.

    Raises:
        ProbeError: the train split holds a single class, or the test split is empty

    Returns:
        ProbeResult: test accuracy, validation accuracy and chosen strength
    """
    x = np.asarray(representations, dtype=np.float64)
    y = np.asarray(labels)
    train, val, test = splits
    if len(np.unique(y[train])) < 2:
        raise ProbeError("the train split contains a single class; a probe cannot be fitted")
    if len(test) == 0:
        raise ProbeError("the test split is empty; there is nothing to score the probe on")
    if len(val) == 0:
        logging.warning("Empty validation split; selecting the probe strength on the train split")
        val = train

    best = None
    for strength in sorted(grid, reverse=True):
        probe = _fit_probe(x[train], y[train], strength)
        score = accuracy_score(y[val], probe.predict(x[val]))
        logging.debug(f"Probe strength {strength:g}: validation accuracy {score:.4f}")
        if best is None or score > best[0]:
            best = (score, strength, probe)

    val_accuracy, strength, probe = best
    accuracy = accuracy_score(y[test], probe.predict(x[test]))
    return ProbeResult(float(accuracy), float(val_accuracy), float(strength))


def kmeans(
    representations: np.ndarray, k: int, seed: int, n_init: int = 10, max_iter: int = 300
) -> np.ndarray:
    """
    k-means++ seeded Lloyd iterations, best of `n_init` restarts by inertia.

    Returns:
        np.ndarray: cluster id per row
    """
    x = np.asarray(representations, dtype=np.float64)
    if not 1 <= k <= len(x):
        raise ValueError(f"k must lie in [1, {len(x)}], got {k}")
    model = KMeans(
        n_clusters=k, init="k-means++", n_init=n_init, max_iter=max_iter, random_state=seed
    )
    return model.fit_predict(x)


def nmi(pred, truth, average: str = "arithmetic") -> float:
    """Mutual information over the mean ('arithmetic' or 'geometric') of the two entropies."""
    if len(pred) != len(truth):
        raise ValueError(f"assignment lengths differ: {len(pred)} vs {len(truth)}")
    return float(normalized_mutual_info_score(truth, pred, average_method=average))


def evaluate_representations(
    representations: np.ndarray,
    labels,
    spec: SplitSpec,
    method: str = "dssl",
    nmi_average: str = "arithmetic",
) -> EvalReport:
    """
    Linear-probe accuracy and k-means NMI over the labeled nodes.

    The number of clusters equals the number of classes present.
    """
    x = np.asarray(representations, dtype=np.float64)
    y = np.asarray(labels)
    splits = split_nodes(y, spec)
    probe = linear_probe(x, y, splits)

    labeled = np.flatnonzero(y >= 0)
    k = len(np.unique(y[labeled]))
    clusters = kmeans(x[labeled], k, spec.seed)
    score = nmi(clusters, y[labeled], average=nmi_average)
    logging.info(f"Linear probe accuracy {probe.accuracy:.4f}, NMI {score:.4f}")

    return EvalReport(
        accuracy=probe.accuracy,
        nmi=score,
        val_accuracy=probe.val_accuracy,
        split_sizes={name: len(part) for name, part in zip(("train", "val", "test"), splits)},
        probe={
            "regularization": probe.regularization,
            "grid": list(PROBE_GRID),
            "solver": "lbfgs",
        },
        nmi_average=nmi_average,
        num_clusters=k,
        seed=spec.seed,
        representation_checksum=array_checksum(x),
        method=method,
    )
