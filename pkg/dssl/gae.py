"""
Graph autoencoder baseline: the same two-layer encoder trained to reconstruct
edges from inner products of representations.
"""
import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional

import numpy as np
import tqdm

import dssl.tensor as T
from dssl.errors import ConfigError, GraphError
from dssl.graph import Graph
from dssl.model import EncoderParams, ModelDims, embed, encode, init_params
from dssl.optim import Adam
from dssl.tensor import Tensor
from dssl.trainer import PRECISIONS, collapse_metrics
from dssl.utils import BAR_FORMAT, chunk_list


@dataclass(frozen=True)
class GaeConfig:
    hidden_dim: int = 64
    out_dim: int = 32
    learning_rate: float = 5e-3
    weight_decay: float = 5e-4
    epochs: int = 100
    edge_batch_size: int = 1024
    negative_samples_per_edge: int = 1
    seed: int = 0
    precision: str = "float64"

    def __post_init__(self):
        for key in ("hidden_dim", "out_dim", "edge_batch_size", "negative_samples_per_edge"):
            if getattr(self, key) < 1:
                raise ConfigError(key, f"must be at least 1, got {getattr(self, key)}")
        if self.epochs < 0:
            raise ConfigError("epochs", f"must be non-negative, got {self.epochs}")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError(
                "learning_rate", "learning rate and weight decay must be non-negative"
            )
        if self.precision not in PRECISIONS:
            raise ConfigError("precision", f"must be one of {', '.join(PRECISIONS)}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GaeResult:
    encoder: EncoderParams
    log: List[dict]


def _softplus(x: Tensor) -> Tensor:
    # inputs are inner products of unit rows, so exp cannot overflow
    return T.log(T.add(T.exp(x), 1.0))


def _pair_scores(representations: Tensor, pairs: np.ndarray) -> Tensor:
    left = T.gather_rows(representations, pairs[:, 0])
    right = T.gather_rows(representations, pairs[:, 1])
    return T.sum_rows(T.mul(left, right))


def gae_loss(representations: Tensor, edge_batch, negative_batch) -> Tensor:
    """
    Mean binary cross-entropy of sigmoid(v_i . v_j) over positive and negative pairs.

    Args:
        representations (Tensor): N x D' rows
        edge_batch (array-like): P x 2 linked pairs
        negative_batch (array-like): Q x 2 unlinked pairs

    Returns:
        Tensor: scalar loss
    """
    pos = np.asarray(edge_batch, dtype=np.int64).reshape(-1, 2)
    neg = np.asarray(negative_batch, dtype=np.int64).reshape(-1, 2)
    count = len(pos) + len(neg)
    if count == 0:
        raise ValueError("gae_loss needs at least one pair")
    total = Tensor(0.0)
    if len(pos):
        scores = T.scalar_mul(_pair_scores(representations, pos), -1.0)
        total = T.add(total, T.sum(_softplus(scores)))
    if len(neg):
        total = T.add(total, T.sum(_softplus(_pair_scores(representations, neg))))
    return T.scalar_mul(total, 1.0 / count)


def sample_negative_edges(graph: Graph, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    Uniform node pairs that are neither edges nor self-pairs.

    Raises:
        GraphError: the graph has no non-edge to draw

    Returns:
        np.ndarray: count x 2 pairs
    """
    n = graph.num_nodes
    stored = graph.edges[:, 0] * n + graph.edges[:, 1]
    if not graph.directed:
        stored = np.concatenate([stored, graph.edges[:, 1] * n + graph.edges[:, 0]])
    if n < 2 or len(np.unique(stored)) >= n * (n - 1):
        raise GraphError("the graph has no unlinked node pair to sample")

    found = np.zeros((0, 2), dtype=np.int64)
    while len(found) < count:
        draws = (count - len(found)) * 2 + 8
        u = rng.integers(0, n, size=draws)
        v = rng.integers(0, n, size=draws)
        keep = (u != v) & ~np.isin(u * n + v, stored)
        found = np.vstack([found, np.column_stack([u[keep], v[keep]])])
    return found[:count]


def train_gae(
    graph: Graph,
    config: GaeConfig,
    on_epoch: Optional[Callable[[dict], None]] = None,
    show_progress: bool = False,
) -> GaeResult:
    """
    Train the encoder on edge reconstruction with sampled negatives.

    The encoder starts from the same initialization the self-supervised trainer
    uses for an equal seed. Log records share the trainer's keys; components the
    baseline does not have are null.

    Returns:
        GaeResult: trained encoder and per-epoch log
    """
    with T.default_dtype(config.precision):
        dims = ModelDims(graph.feature_dim, config.hidden_dim, config.out_dim)
        encoder = init_params(dims, 1, config.seed).online
        optimizer = Adam(lr=config.learning_rate, weight_decay=config.weight_decay)
        arrays = {"W1": encoder.W1.data, "W2": encoder.W2.data}
        adam_state = optimizer.init_state(arrays)
        rng = np.random.default_rng([config.seed, 2])
        positives = graph.undirected_edges()
        log = []
        logging.info(f"Training the autoencoder baseline for {config.epochs} epochs")

        for epoch in tqdm.tqdm(
            range(1, config.epochs + 1),
            disable=not show_progress,
            bar_format=BAR_FORMAT,
            desc="Training",
        ):
            started = time.perf_counter()
            losses = []
            shuffled = positives[rng.permutation(len(positives))]
            for batch in chunk_list(shuffled, config.edge_batch_size):
                negatives = sample_negative_edges(
                    graph, len(batch) * config.negative_samples_per_edge, rng
                )
                with T.Tape():
                    loss = gae_loss(encode(encoder, graph.propagation, graph.x), batch, negatives)
                    grads = T.backward(loss, wrt=[encoder.W1, encoder.W2])
                arrays = optimizer.step(
                    {"W1": encoder.W1.data, "W2": encoder.W2.data},
                    {"W1": grads[encoder.W1], "W2": grads[encoder.W2]},
                    adam_state,
                )
                encoder = EncoderParams(
                    Tensor(arrays["W1"], requires_grad=True),
                    Tensor(arrays["W2"], requires_grad=True),
                )
                losses.append(loss.item())

            representations = embed(encoder, graph)
            record = {
                "epoch": epoch,
                "loss_total": float(np.mean(losses)) if losses else None,
                "loss_local": None,
                "loss_global": None,
                "entropy": None,
                "mean_pairwise_cosine": collapse_metrics(representations)["mean_pairwise_cosine"]
                if graph.num_nodes > 1
                else None,
                "effective_clusters": None,
                "wall_ms": (time.perf_counter() - started) * 1000.0,
            }
            log.append(record)
            logging.info(f"epoch {epoch}: reconstruction loss={record['loss_total']}")
            if on_epoch:
                on_epoch(record)

        return GaeResult(encoder=encoder, log=log)
