"""
Posteriors, Gumbel-Softmax sampling, the three-part training loss, and the
exact evidence-bound quantities used to check it.

A batch holds B central nodes and m sampled neighbors per central node, so every
per-edge quantity has B * m rows ordered central-major (the m edges of central 0
first).
"""
import logging
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

import dssl.tensor as T
from dssl.errors import ConfigError, ShapeError
from dssl.graph import Graph
from dssl.model import (
    ModelParams,
    ProjectorParams,
    encode,
    inference_logits,
    project_latent,
)
from dssl.tensor import SparseMatrix, Tensor

GUMBEL_CLAMP = 1e-12
LOCAL_ESTIMATORS = ("gumbel", "exact")
GLOBAL_ESTIMATORS = ("exact", "gumbel")
GUMBEL_MODES = ("straight_through", "soft")


@dataclass(frozen=True)
class DsslHyper:
    """
    Loss hyperparameters. The prior over latent factors is uniform.

    The use_* switches and uniform_posterior reproduce the ablations: no local
    term, no global term, no entropy term, and a fixed uniform q. Setting beta
    to 0 removes the semantic shift.
    """

    K: int = 8
    beta: float = 0.6
    sigma1_sq: float = 0.6
    sigma2_sq: float = 0.6
    gamma: float = 0.6
    entropy_weight: float = 1.0
    local_estimator: str = "gumbel"
    global_estimator: str = "exact"
    gumbel_mode: str = "straight_through"
    use_local: bool = True
    use_global: bool = True
    use_entropy: bool = True
    uniform_posterior: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("K", f"must be at least 1, got {self.K}")
        if self.beta < 0:
            raise ConfigError("beta", f"must be non-negative, got {self.beta}")
        for key in ("sigma1_sq", "sigma2_sq", "gamma"):
            if getattr(self, key) <= 0:
                raise ConfigError(key, f"must be positive, got {getattr(self, key)}")
        if self.entropy_weight < 0:
            raise ConfigError("entropy_weight", f"must be non-negative, got {self.entropy_weight}")
        for key, allowed in (
            ("local_estimator", LOCAL_ESTIMATORS),
            ("global_estimator", GLOBAL_ESTIMATORS),
            ("gumbel_mode", GUMBEL_MODES),
        ):
            if getattr(self, key) not in allowed:
                raise ConfigError(key, f"must be one of {', '.join(allowed)}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DsslBatch:
    """
    Central nodes, their sampled neighbors, and the Gumbel noise for one step.

    noise has one row per edge (B * m rows); global_noise one row per central node
    and is only read by the Gumbel global estimator.
    """

    centrals: np.ndarray
    neighbors: np.ndarray
    noise: Optional[np.ndarray] = None
    global_noise: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return len(self.centrals)

    @property
    def m(self) -> int:
        return self.neighbors.shape[1]

    @property
    def edge_count(self) -> int:
        return self.neighbors.size

    @property
    def edge_centrals(self) -> np.ndarray:
        return np.repeat(self.centrals, self.m)

    @property
    def edge_slots(self) -> np.ndarray:
        """Batch position of the central node of every edge row."""
        return np.repeat(np.arange(self.size), self.m)


@dataclass
class LossBreakdown:
    total: float
    local: float
    global_: float
    entropy: float
    q_edge: np.ndarray
    q_node: np.ndarray
    representations: np.ndarray

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "local": self.local,
            "global": self.global_,
            "entropy": self.entropy,
        }


def gumbel_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Gumbel(0, 1) draws -log(-log(u)) with u clamped away from 0 and 1."""
    u = np.clip(rng.random(shape), GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP)
    return -np.log(-np.log(u))


def _rows(x: Tensor) -> Tuple[Tensor, bool]:
    if len(x.shape) == 1:
        return T.reshape(x, (1, x.shape[0])), True
    return x, False


def _unrows(x: Tensor, single: bool) -> Tensor:
    return T.reshape(x, (x.shape[1],)) if single else x


def posterior_q(logits: Tensor) -> Tensor:
    """q(k | v, z): row-wise softmax of the inference head logits."""
    rows, single = _rows(logits)
    return _unrows(T.softmax_rows(rows), single)


def prototype_logits(v: Tensor, mu: Tensor, sigma1_sq: float) -> Tensor:
    return T.scalar_mul(T.matmul(v, T.transpose(mu)), 1.0 / sigma1_sq)


def posterior_p_k_given_v(v: Tensor, mu: Tensor, sigma1_sq: float) -> Tensor:
    """
    p(k | v) under a uniform prior and isotropic Gaussians around unit prototypes.

    For unit-norm v this is softmax_k(v . mu_k / sigma1_sq).
    """
    rows, single = _rows(v)
    return _unrows(T.softmax_rows(prototype_logits(rows, mu, sigma1_sq)), single)


def gumbel_sample(
    logits: Tensor, gamma: float, noise, mode: str = "straight_through"
) -> Tensor:
    """
    Relaxed categorical sample softmax((logits + noise) / gamma).

    In straight_through mode the forward value is the one-hot argmax while the
    gradient flows through the relaxed vector.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    rows, single = _rows(logits)
    noise = np.asarray(noise, dtype=rows.data.dtype).reshape(rows.shape)
    soft = T.softmax_rows(T.scalar_mul(T.add(rows, Tensor(noise)), 1.0 / gamma))
    if mode == "straight_through":
        hard = np.zeros_like(soft.data)
        hard[np.arange(hard.shape[0]), soft.data.argmax(axis=1)] = 1.0
        soft = T.replace_forward(soft, hard)
    elif mode != "soft":
        raise ValueError(f"unknown Gumbel mode '{mode}'")
    return _unrows(soft, single)


def local_loss(
    v: Tensor, z: Tensor, c: Tensor, projector: ProjectorParams, beta: float
) -> Tensor:
    """Mean over rows of ||v + beta * g(c) - z||^2."""
    if v.shape != z.shape:
        raise ShapeError(f"local_loss: v {v.shape} and z {z.shape} differ")
    shifted = T.add(v, T.scalar_mul(project_latent(projector, c), beta))
    return T.mean(T.squared_row_norms(T.sub(shifted, z)))


def shift_distances(
    v: Tensor, z: Tensor, projector: ProjectorParams, beta: float, K: int
) -> Tensor:
    """
    ||v + beta * g(e_k) - z||^2 for every row and every one-hot latent code e_k.

    Returns:
        Tensor: rows x K squared distances
    """
    residual = T.sub(v, z)
    codes = project_latent(projector, Tensor(np.eye(K)))
    base = T.squared_row_norms(residual)
    base_cols = T.matmul(T.reshape(base, (base.shape[0], 1)), Tensor(np.ones((1, K))))
    cross = T.scalar_mul(T.matmul(residual, T.transpose(codes)), 2.0 * beta)
    code_norms = T.scalar_mul(T.squared_row_norms(codes), beta * beta)
    return T.add(T.add(base_cols, cross), code_norms)


def local_loss_exact(
    v: Tensor, z: Tensor, q: Tensor, projector: ProjectorParams, beta: float
) -> Tensor:
    """E_q[||v + beta * g(k) - z||^2] summed exactly over the K latent codes, averaged over rows."""
    distances = shift_distances(v, z, projector, beta, q.shape[1])
    return T.scalar_mul(T.sum(T.mul(q, distances)), 1.0 / q.shape[0])


def global_loss(
    q_node: Tensor, v: Tensor, mu: Tensor, sigma1_sq: float, sigma2_sq: float
) -> Tensor:
    """-sigma2_sq * mean_i sum_k q(k | v_i) log softmax_k(v_i . mu_k / sigma1_sq)."""
    log_p = T.log_softmax_rows(prototype_logits(v, mu, sigma1_sq))
    return T.scalar_mul(T.sum(T.mul(q_node, log_p)), -sigma2_sq / q_node.shape[0])


def log_probabilities(q: Tensor) -> Tensor:
    """log q with entries floored at the smallest normal number of the dtype."""
    return T.log(T.add(q, float(np.finfo(q.data.dtype).tiny)))


def entropy_term(q: Tensor, log_q: Optional[Tensor] = None) -> Tensor:
    """Mean Shannon entropy (nats) of the rows of q."""
    if log_q is None:
        log_q = log_probabilities(q)
    return T.scalar_mul(T.sum(T.mul(q, log_q)), -1.0 / q.shape[0])


def aggregation_matrix(batch: DsslBatch) -> SparseMatrix:
    """B x (B * m) operator averaging edge rows into their central node."""
    cols = np.arange(batch.edge_count)
    values = np.full(batch.edge_count, 1.0 / batch.m)
    return SparseMatrix.from_coo(
        batch.edge_slots, cols, values, shape=(batch.size, batch.edge_count)
    )


@dataclass
class _Forward:
    v_edge: Tensor
    z_edge: Tensor
    v_central: Tensor
    logits: Tensor
    q_edge: Tensor
    log_q: Tensor
    aggregate: SparseMatrix


def _forward(batch: DsslBatch, params: ModelParams, hyper: DsslHyper, graph: Graph) -> _Forward:
    if params.K != hyper.K:
        raise ShapeError(f"model has {params.K} prototypes but K={hyper.K}")
    v_all = encode(params.online, graph.propagation, graph.x)
    z_all = T.detach(encode(params.target, graph.propagation, graph.x))
    v_edge = T.gather_rows(v_all, batch.edge_centrals)
    z_edge = T.gather_rows(z_all, batch.neighbors.reshape(-1))
    v_central = T.gather_rows(v_all, batch.centrals)
    logits = inference_logits(params.head, v_edge, z_edge)
    if hyper.uniform_posterior:
        uniform = np.full(logits.shape, 1.0 / hyper.K)
        q_edge, log_q = Tensor(uniform), Tensor(np.log(uniform))
        logits = Tensor(np.zeros(logits.shape))
    else:
        q_edge, log_q = T.softmax_rows(logits), T.log_softmax_rows(logits)
    return _Forward(v_edge, z_edge, v_central, logits, q_edge, log_q, aggregation_matrix(batch))


def total_loss(
    batch: DsslBatch, params: ModelParams, hyper: DsslHyper, graph: Graph
) -> Tuple[Tensor, LossBreakdown]:
    """
    The training loss: local reconstruction + global clustering - entropy.

    Args:
        batch (DsslBatch): central nodes, sampled neighbors, Gumbel noise
        params (ModelParams): current parameters
        hyper (DsslHyper): loss hyperparameters and ablation switches
        graph (Graph): the graph the batch was drawn from

    Returns:
        Tuple[Tensor, LossBreakdown]: the scalar loss on the active tape, and its parts
    """
    fwd = _forward(batch, params, hyper, graph)
    zero = Tensor(0.0)

    if hyper.local_estimator == "exact":
        local = local_loss_exact(fwd.v_edge, fwd.z_edge, fwd.q_edge, params.projector, hyper.beta)
    else:
        if batch.noise is None:
            raise ValueError("the Gumbel local estimator needs per-edge noise")
        c = gumbel_sample(fwd.logits, hyper.gamma, batch.noise, hyper.gumbel_mode)
        local = local_loss(fwd.v_edge, fwd.z_edge, c, params.projector, hyper.beta)

    q_node = T.sparse_dense_matmul(fwd.aggregate, fwd.q_edge)
    if hyper.global_estimator == "gumbel":
        if batch.global_noise is None:
            raise ValueError("the Gumbel global estimator needs per-node noise")
        weights = gumbel_sample(
            log_probabilities(q_node), hyper.gamma, batch.global_noise, hyper.gumbel_mode
        )
    else:
        weights = q_node
    global_ = global_loss(
        weights, fwd.v_central, params.prototypes.mu, hyper.sigma1_sq, hyper.sigma2_sq
    )
    entropy = entropy_term(fwd.q_edge, fwd.log_q)

    local = local if hyper.use_local else zero
    global_ = global_ if hyper.use_global else zero
    entropy = entropy if hyper.use_entropy else zero
    total = T.sub(T.add(local, global_), T.scalar_mul(entropy, hyper.entropy_weight))

    breakdown = LossBreakdown(
        total=total.item(),
        local=local.item(),
        global_=global_.item(),
        entropy=entropy.item(),
        q_edge=fwd.q_edge.data,
        q_node=q_node.data,
        representations=fwd.v_central.data,
    )
    return total, breakdown


def _gaussian_log_norm(dim: int, sigma_sq: float) -> float:
    return -0.5 * dim * np.log(2.0 * np.pi * sigma_sq)


def exact_negative_elbo(
    batch: DsslBatch,
    params: ModelParams,
    hyper: DsslHyper,
    graph: Graph,
    q_override: Optional[np.ndarray] = None,
) -> Tensor:
    """
    The negative evidence lower bound with full Gaussian log-densities.

    Expectations are exact sums over K; sigma2_sq is the true neighbor variance.
    `q_override` evaluates the bound at an explicit per-edge distribution.

    Returns:
        Tensor: mean over central nodes of -(1/m) sum_j E_q[log N(z_j; v + beta g(k), sigma2_sq I)
            + log p(k | v) - log q(k | v, z_j)]
    """
    fwd = _forward(batch, params, hyper, graph)
    if q_override is not None:
        q_override = np.asarray(q_override, dtype=np.float64)
        if q_override.shape != fwd.q_edge.shape:
            raise ShapeError(f"q_override must have shape {fwd.q_edge.shape}")
        q, log_q = Tensor(q_override), log_probabilities(Tensor(q_override))
    else:
        q, log_q = fwd.q_edge, fwd.log_q

    dim = fwd.v_edge.shape[1]
    distances = shift_distances(fwd.v_edge, fwd.z_edge, params.projector, hyper.beta, hyper.K)
    log_lik = T.add(
        T.scalar_mul(distances, -0.5 / hyper.sigma2_sq),
        _gaussian_log_norm(dim, hyper.sigma2_sq),
    )
    log_p = T.gather_rows(
        T.log_softmax_rows(prototype_logits(fwd.v_central, params.prototypes.mu, hyper.sigma1_sq)),
        batch.edge_slots,
    )
    per_code = T.sub(T.add(log_lik, log_p), log_q)
    return T.scalar_mul(T.sum(T.mul(q, per_code)), -1.0 / batch.edge_count)


def _joint_log_terms(batch: DsslBatch, params: ModelParams, hyper: DsslHyper, graph: Graph):
    """log p(z_j | v_i, k) + log p(k | v_i) for every edge row and code, as an array."""
    with T.Tape():
        fwd = _forward(batch, params, hyper, graph)
        distances = shift_distances(
            fwd.v_edge, fwd.z_edge, params.projector, hyper.beta, hyper.K
        ).data
        log_p = T.log_softmax_rows(
            prototype_logits(fwd.v_central, params.prototypes.mu, hyper.sigma1_sq)
        ).data
    dim = fwd.v_edge.shape[1]
    log_lik = -0.5 * distances / hyper.sigma2_sq + _gaussian_log_norm(dim, hyper.sigma2_sq)
    return log_lik + log_p[batch.edge_slots]


def negative_log_marginal(
    batch: DsslBatch, params: ModelParams, hyper: DsslHyper, graph: Graph
) -> float:
    """
    Brute-force -log p(z | v) = -log sum_k p(k | v) N(z; v + beta g(k), sigma2_sq I),
    averaged over edge rows.
    """
    joint = _joint_log_terms(batch, params, hyper, graph)
    return float(-logsumexp(joint, axis=1).mean())


def exact_posterior(
    batch: DsslBatch, params: ModelParams, hyper: DsslHyper, graph: Graph
) -> np.ndarray:
    """Bayes posterior p(k | v_i, z_j) for every edge row."""
    joint = _joint_log_terms(batch, params, hyper, graph)
    return np.exp(joint - logsumexp(joint, axis=1, keepdims=True))


def node_posteriors(params: ModelParams, graph: Graph, hyper: DsslHyper) -> np.ndarray:
    """
    q(k | v_i) for every node, averaging q(k | v_i, z_j) over all neighbors j.

    Isolated nodes are paired with themselves.

    Returns:
        np.ndarray: N x K rows summing to 1
    """
    n = graph.num_nodes
    if hyper.uniform_posterior:
        return np.full((n, hyper.K), 1.0 / hyper.K)
    isolated = np.flatnonzero(graph.degrees == 0)
    pairs = np.vstack([graph.edges, np.column_stack([isolated, isolated])]).astype(np.int64)
    with T.Tape():
        v_all = T.detach(encode(params.online, graph.propagation, graph.x))
        z_all = T.detach(encode(params.target, graph.propagation, graph.x))
        logits = inference_logits(
            params.head, T.gather_rows(v_all, pairs[:, 0]), T.gather_rows(z_all, pairs[:, 1])
        )
        q = T.softmax_rows(logits).data
    counts = np.bincount(pairs[:, 0], minlength=n).astype(np.float64)
    sums = np.zeros((n, q.shape[1]))
    np.add.at(sums, pairs[:, 0], q)
    logging.debug(f"Computed node posteriors over {len(pairs)} neighbor pairs")
    return sums / counts[:, None]
