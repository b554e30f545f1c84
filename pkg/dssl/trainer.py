"""
The training loop: neighbor-sampled mini-batches, Adam steps on the online
parameters, the moving-average target encoder, the epoch-end analytic
prototype update, and collapse diagnostics.
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np
import tqdm

import dssl.tensor as T
from dssl.errors import ConfigError, NumericalError, ShapeError
from dssl.graph import Graph, sample_neighbor_batch
from dssl.loss import DsslBatch, DsslHyper, LossBreakdown, gumbel_noise, node_posteriors, total_loss
from dssl.model import EncoderParams, ModelDims, ModelParams, embed, init_params
from dssl.optim import Adam, AdamState
from dssl.utils import BAR_FORMAT, chunk_list, prefix_keys

UPDATE_MODES = ("cached", "exact")
PRECISIONS = ("float64", "float32")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-3
    weight_decay: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 256
    neighbors_per_node: int = 5
    epochs: int = 100
    tau: float = 0.9
    hyper: DsslHyper = field(default_factory=DsslHyper)
    seed: int = 0
    eval_every: int = 0
    degenerate_reinit_threshold: float = 1e-6
    hidden_dim: int = 64
    out_dim: int = 32
    mlp_hidden: int = 0
    combine: str = "concat"
    projector_activation: str = "relu"
    precision: str = "float64"
    global_update: bool = True
    prototype_update_mode: str = "cached"

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau", f"must lie in [0, 1], got {self.tau}")
        for key in ("batch_size", "neighbors_per_node", "hidden_dim", "out_dim"):
            if getattr(self, key) < 1:
                raise ConfigError(key, f"must be at least 1, got {getattr(self, key)}")
        for key in ("epochs", "eval_every", "mlp_hidden"):
            if getattr(self, key) < 0:
                raise ConfigError(key, f"must be non-negative, got {getattr(self, key)}")
        for key in ("learning_rate", "weight_decay", "degenerate_reinit_threshold"):
            if getattr(self, key) < 0:
                raise ConfigError(key, f"must be non-negative, got {getattr(self, key)}")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ConfigError("adam_beta1", "Adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise ConfigError("adam_eps", f"must be positive, got {self.adam_eps}")
        if self.prototype_update_mode not in UPDATE_MODES:
            raise ConfigError("prototype_update_mode", f"must be one of {', '.join(UPDATE_MODES)}")
        if self.precision not in PRECISIONS:
            raise ConfigError("precision", f"must be one of {', '.join(PRECISIONS)}")
        if self.combine not in ("concat", "product"):
            raise ConfigError("combine", "must be 'concat' or 'product'")
        if self.projector_activation not in ("relu", "identity"):
            raise ConfigError("projector_activation", "must be 'relu' or 'identity'")

    def dims(self, feature_dim: int) -> ModelDims:
        return ModelDims(feature_dim, self.hidden_dim, self.out_dim, self.mlp_hidden)

    def optimizer(self) -> Adam:
        return Adam(
            lr=self.learning_rate,
            beta1=self.adam_beta1,
            beta2=self.adam_beta2,
            eps=self.adam_eps,
            weight_decay=self.weight_decay,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainState:
    """Everything the loop mutates. The target encoder only changes through `ema_update`."""

    params: ModelParams
    adam: AdamState
    rng: np.random.Generator
    epoch: int = 0
    step: int = 0
    pi_weighted_sum: Optional[np.ndarray] = None
    pi_mass: Optional[np.ndarray] = None
    assignments: Optional[np.ndarray] = None

    def reset_accumulators(self, num_nodes: int) -> None:
        K, dim = self.params.prototypes.mu.shape
        self.pi_weighted_sum = np.zeros((K, dim))
        self.pi_mass = np.zeros(K)
        self.assignments = np.full(num_nodes, -1, dtype=np.int64)


@dataclass
class TrainResult:
    encoder: EncoderParams
    state: TrainState
    log: List[dict]


def init_state(graph: Graph, config: TrainConfig) -> TrainState:
    """Fresh parameters, optimizer moments and batch generator for a graph."""
    params = init_params(
        config.dims(graph.feature_dim),
        config.hyper.K,
        config.seed,
        combine=config.combine,
        projector_activation=config.projector_activation,
    )
    arrays = {name: t.data for name, t in params.trainable().items()}
    state = TrainState(
        params=params,
        adam=config.optimizer().init_state(arrays),
        rng=np.random.default_rng([config.seed, 1]),
    )
    state.reset_accumulators(graph.num_nodes)
    return state


def assemble_batch(
    graph: Graph, nodes, config: TrainConfig, rng: np.random.Generator
) -> DsslBatch:
    """Sample m neighbors per central node and the Gumbel noise for one step."""
    nodes = np.asarray(nodes, dtype=np.int64)
    hyper = config.hyper
    neighbors = sample_neighbor_batch(graph, nodes, config.neighbors_per_node, rng)
    noise = gumbel_noise(rng, (neighbors.size, hyper.K))
    global_noise = None
    if hyper.global_estimator == "gumbel":
        global_noise = gumbel_noise(rng, (len(nodes), hyper.K))
    return DsslBatch(nodes, neighbors, noise, global_noise)


def ema_update(xi: EncoderParams, theta: EncoderParams, tau: float) -> EncoderParams:
    """xi <- tau * xi + (1 - tau) * theta, as fresh tensors outside any tape."""
    if xi.W1.shape != theta.W1.shape or xi.W2.shape != theta.W2.shape:
        raise ShapeError("target and online encoders differ in shape")
    if tau == 1.0:
        return xi
    return EncoderParams(
        T.Tensor(tau * xi.W1.data + (1.0 - tau) * theta.W1.data),
        T.Tensor(tau * xi.W2.data + (1.0 - tau) * theta.W2.data),
    )


def normalize_rows(mu: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mu, axis=1, keepdims=True)
    return mu / np.maximum(norms, T.NORM_FLOOR)


def _loss_dump(breakdown: LossBreakdown) -> str:
    return ", ".join(f"{key}={value}" for key, value in breakdown.as_dict().items())


def train_step(
    state: TrainState, graph: Graph, nodes, config: TrainConfig
) -> LossBreakdown:
    """
    One stochastic update on a batch of central nodes.

    Gradients of the loss update the online encoder, projector, head and
    prototypes through Adam; moved prototypes are renormalized; the target encoder then
    moves towards the online encoder. The epoch accumulators absorb the batch's
    node posteriors.

    Raises:
        NumericalError: the loss is not finite

    Returns:
        LossBreakdown: the components of the loss before the update
    """
    batch = assemble_batch(graph, nodes, config, state.rng)
    trainable = state.params.trainable()
    with T.Tape():
        loss, breakdown = total_loss(batch, state.params, config.hyper, graph)
        if not np.isfinite(breakdown.total):
            raise NumericalError(
                f"non-finite loss at epoch {state.epoch} step {state.step}: {_loss_dump(breakdown)}"
            )
        grads = T.backward(loss, wrt=trainable.values())

    arrays = {name: tensor.data for name, tensor in trainable.items()}
    updated = config.optimizer().step(
        arrays, {name: grads[tensor] for name, tensor in trainable.items()}, state.adam
    )
    mu = updated["prototypes.mu"]
    moved = np.any(mu != arrays["prototypes.mu"], axis=1)
    if moved.any():
        mu = mu.copy()
        mu[moved] = normalize_rows(mu[moved])
        updated["prototypes.mu"] = mu
    params = state.params.with_tensors(updated)
    target = ema_update(params.target, params.online, config.tau)
    state.params = params.with_tensors({"target.W1": target.W1, "target.W2": target.W2})

    state.pi_weighted_sum += breakdown.q_node.T @ breakdown.representations
    state.pi_mass += breakdown.q_node.sum(axis=0)
    state.assignments[batch.centrals] = breakdown.q_node.argmax(axis=1)
    state.step += 1
    logging.debug(f"epoch {state.epoch} step {state.step}: {_loss_dump(breakdown)}")
    return breakdown


def prototype_update(
    weighted_sum: np.ndarray, threshold: float, rng: np.random.Generator
) -> np.ndarray:
    """
    mu_k = S_k / ||S_k|| for S_k = sum_i pi_i(k) v_i.

    Rows with ||S_k|| below `threshold` are replaced by random unit vectors.
    """
    norms = np.linalg.norm(weighted_sum, axis=1)
    mu = weighted_sum / np.maximum(norms, T.NORM_FLOOR)[:, None]
    degenerate = np.flatnonzero(norms < threshold)
    for k in degenerate:
        logging.warning(f"Prototype {k} has a vanishing weighted sum; reinitializing it")
        fresh = rng.standard_normal(weighted_sum.shape[1])
        mu[k] = fresh / np.linalg.norm(fresh)
    return mu


def exact_weighted_sum(params: ModelParams, graph: Graph, hyper: DsslHyper) -> np.ndarray:
    """S = pi^T V over every node with posteriors averaged over all neighbors."""
    v = embed(params.online, graph)
    return node_posteriors(params, graph, hyper).T @ v


def global_prototype_update(state: TrainState, graph: Graph, config: TrainConfig) -> TrainState:
    """
    Replace every prototype with the normalized posterior-weighted mean of the
    representations, then reset the epoch accumulators.
    """
    if config.prototype_update_mode == "exact":
        weighted = exact_weighted_sum(state.params, graph, config.hyper)
    else:
        weighted = state.pi_weighted_sum
        if logging.getLogger().isEnabledFor(logging.DEBUG):
            exact = exact_weighted_sum(state.params, graph, config.hyper)
            gap = np.abs(normalize_rows(exact) - normalize_rows(weighted)).max()
            logging.debug(f"Cached and exact prototype targets differ by at most {gap:.3e}")

    mu = prototype_update(weighted, config.degenerate_reinit_threshold, state.rng)
    state.params = state.params.with_tensors({"prototypes.mu": mu})
    state.reset_accumulators(graph.num_nodes)
    return state


def collapse_metrics(representations: np.ndarray, assignments: Optional[np.ndarray] = None) -> dict:
    """
    Diagnostics for the two collapse modes.

    Args:
        representations (np.ndarray): N x D' rows, N >= 2
        assignments (np.ndarray, optional): argmax cluster per node, -1 if unknown

    Returns:
        dict: mean_pairwise_cosine, dim_std (per dimension), effective_clusters
    """
    reps = np.asarray(representations, dtype=np.float64)
    n = reps.shape[0]
    if n < 2:
        raise ValueError("collapse metrics need at least two representations")
    units = normalize_rows(reps)
    total = units.sum(axis=0)
    self_sim = (units * units).sum()
    cosine = (total @ total - self_sim) / (n * (n - 1))

    clusters = 0
    if assignments is not None:
        known = assignments[assignments >= 0]
        clusters = int(len(np.unique(known)))
    return {
        "mean_pairwise_cosine": float(cosine),
        "dim_std": reps.std(axis=0),
        "effective_clusters": clusters,
    }


def train(
    graph: Graph,
    config: TrainConfig,
    on_epoch: Optional[Callable[[dict], None]] = None,
    evaluator: Optional[Callable[[np.ndarray], dict]] = None,
    show_progress: bool = False,
) -> TrainResult:
    """
    Train on a graph for a fixed number of epochs.

    Each epoch visits every node once as a central node, in shuffled batches.
    After the last batch of an epoch the prototypes are reset analytically
    (unless disabled) and one log record is produced.

    Args:
        graph (Graph): training graph
        config (TrainConfig): run settings
        on_epoch (Callable, optional): receives each log record as it is produced
        evaluator (Callable, optional): scores representations every `eval_every` epochs
        show_progress (bool, optional): display a progress bar. Defaults to False.

    Returns:
        TrainResult: the online encoder, final state and per-epoch log
    """
    with T.default_dtype(config.precision):
        state = init_state(graph, config)
        log = []
        logging.info(
            f"Training for {config.epochs} epochs on {graph.num_nodes} nodes "
            f"(K={config.hyper.K}, tau={config.tau}, seed={config.seed})"
        )

        for _ in tqdm.tqdm(
            range(config.epochs), disable=not show_progress, bar_format=BAR_FORMAT, desc="Training"
        ):
            started = time.perf_counter()
            order = state.rng.permutation(graph.num_nodes)
            breakdowns = [
                train_step(state, graph, nodes, config)
                for nodes in chunk_list(order, config.batch_size)
            ]
            assignments = state.assignments.copy()
            if config.global_update:
                global_prototype_update(state, graph, config)
            else:
                state.reset_accumulators(graph.num_nodes)
            state.epoch += 1

            representations = embed(state.params.online, graph)
            collapse = collapse_metrics(representations, assignments)
            record = {"epoch": state.epoch}
            record.update(
                prefix_keys(
                    {
                        key: float(np.mean([b.as_dict()[key] for b in breakdowns]))
                        for key in ("total", "local", "global")
                    },
                    "loss",
                )
            )
            record["entropy"] = float(np.mean([b.entropy for b in breakdowns]))
            record["mean_pairwise_cosine"] = collapse["mean_pairwise_cosine"]
            record["effective_clusters"] = collapse["effective_clusters"]
            if evaluator and config.eval_every and state.epoch % config.eval_every == 0:
                record.update(prefix_keys(evaluator(representations), "eval"))
            record["wall_ms"] = (time.perf_counter() - started) * 1000.0
            log.append(record)

            logging.info(
                f"epoch {record['epoch']}: loss={record['loss_total']:.4f} "
                f"(local={record['loss_local']:.4f}, global={record['loss_global']:.4f}, "
                f"entropy={record['entropy']:.4f}) cosine={record['mean_pairwise_cosine']:.3f} "
                f"clusters={record['effective_clusters']}"
            )
            if on_epoch:
                on_epoch(record)

        return TrainResult(encoder=state.params.online, state=state, log=log)
