"""
Trainable components: the two-layer graph convolution encoder (online and
target copies), the latent-factor projector, the inference head, and the
prototype bank.
"""
import logging
from dataclasses import dataclass, fields, replace
from typing import TYPE_CHECKING, Dict, Union

import numpy as np

import dssl.tensor as T
from dssl.errors import ShapeError
from dssl.tensor import SparseMatrix, Tensor

if TYPE_CHECKING:
    from dssl.graph import Graph

ACTIVATIONS = ("relu", "identity")
COMBINE_MODES = ("concat", "product")


@dataclass(frozen=True)
class ModelDims:
    feature_dim: int
    hidden_dim: int = 64
    out_dim: int = 32
    mlp_hidden: int = 0

    @property
    def mlp_width(self) -> int:
        """Hidden width of both perceptrons; 0 means the representation size."""
        return self.mlp_hidden or self.out_dim


@dataclass(frozen=True)
class EncoderParams:
    W1: Tensor
    W2: Tensor

    @property
    def out_dim(self) -> int:
        return self.W2.shape[1]

    @property
    def in_dim(self) -> int:
        return self.W1.shape[0]


@dataclass(frozen=True)
class ProjectorParams:
    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    activation: str = "relu"


@dataclass(frozen=True)
class InferenceHeadParams:
    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    combine: str = "concat"


@dataclass(frozen=True)
class Prototypes:
    mu: Tensor

    @property
    def count(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class ModelParams:
    online: EncoderParams
    target: EncoderParams
    projector: ProjectorParams
    head: InferenceHeadParams
    prototypes: Prototypes

    @property
    def K(self) -> int:
        return self.prototypes.count

    def named_tensors(self) -> Dict[str, Tensor]:
        """Every tensor keyed by '<group>.<name>'."""
        named = {}
        for group in fields(self):
            params = getattr(self, group.name)
            for item in fields(params):
                value = getattr(params, item.name)
                if isinstance(value, Tensor):
                    named[f"{group.name}.{item.name}"] = value
        return named

    def trainable(self) -> Dict[str, Tensor]:
        """Tensors updated by the optimizer; the target encoder is excluded."""
        return {
            name: tensor
            for name, tensor in self.named_tensors().items()
            if not name.startswith("target.")
        }

    def with_tensors(self, updates: Dict[str, Union[Tensor, np.ndarray]]) -> "ModelParams":
        """
        Copy of the bundle with some tensors replaced.

        Arrays are wrapped as new leaves; target encoder leaves never require gradients.
        """
        grouped = {}
        for name, value in updates.items():
            group, item = name.split(".", 1)
            if not isinstance(value, Tensor):
                value = Tensor(value, requires_grad=group != "target")
            grouped.setdefault(group, {})[item] = value
        changes = {
            group: replace(getattr(self, group), **items) for group, items in grouped.items()
        }
        return replace(self, **changes)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(
    dims: ModelDims,
    K: int,
    seed: int,
    combine: str = "concat",
    projector_activation: str = "relu",
) -> ModelParams:
    """
    Randomly initialize every parameter group.

    Weights are Glorot-uniform, biases zero, the target encoder is an exact copy
    of the online encoder, and prototypes are Gaussian draws scaled to unit norm.

    Args:
        dims (ModelDims): layer sizes
        K (int): number of latent factors
        seed (int): random seed
        combine (str, optional): head input, 'concat' ([v; z]) or 'product' (v * z)
        projector_activation (str, optional): 'relu' or 'identity'

    Returns:
        ModelParams: the initialized bundle
    """
    if min(dims.feature_dim, dims.hidden_dim, dims.out_dim, K) < 1:
        raise ShapeError(f"all dimensions and K must be at least 1, got {dims} and K={K}")
    if combine not in COMBINE_MODES:
        raise ValueError(f"combine must be one of {COMBINE_MODES}, got '{combine}'")
    if projector_activation not in ACTIVATIONS:
        raise ValueError(f"activation must be one of {ACTIVATIONS}, got '{projector_activation}'")

    rng = np.random.default_rng(seed)
    d_out, width = dims.out_dim, dims.mlp_width
    W1 = glorot_uniform(rng, dims.feature_dim, dims.hidden_dim)
    W2 = glorot_uniform(rng, dims.hidden_dim, d_out)
    online = EncoderParams(Tensor(W1, requires_grad=True), Tensor(W2, requires_grad=True))
    target = EncoderParams(Tensor(W1), Tensor(W2))

    projector = ProjectorParams(
        W1=Tensor(glorot_uniform(rng, K, width), requires_grad=True),
        b1=Tensor(np.zeros(width), requires_grad=True),
        W2=Tensor(glorot_uniform(rng, width, d_out), requires_grad=True),
        b2=Tensor(np.zeros(d_out), requires_grad=True),
        activation=projector_activation,
    )

    head_in = 2 * d_out if combine == "concat" else d_out
    head = InferenceHeadParams(
        W1=Tensor(glorot_uniform(rng, head_in, width), requires_grad=True),
        b1=Tensor(np.zeros(width), requires_grad=True),
        W2=Tensor(glorot_uniform(rng, width, K), requires_grad=True),
        b2=Tensor(np.zeros(K), requires_grad=True),
        combine=combine,
    )

    mu = rng.standard_normal((K, d_out))
    mu /= np.linalg.norm(mu, axis=1, keepdims=True)
    prototypes = Prototypes(Tensor(mu, requires_grad=True))

    logging.debug(f"Initialized parameters for {dims} with K={K} (seed {seed})")
    return ModelParams(online, target, projector, head, prototypes)


def encode(params: EncoderParams, a_hat: SparseMatrix, x: Tensor) -> Tensor:
    """
    Two graph convolutions followed by row-wise L2 normalization.

    Computes normalize(A relu(A X W1) W2); rows are v_i for the online encoder
    and z_i for the target encoder.
    """
    if x.shape[1] != params.in_dim:
        raise ShapeError(
            f"feature dim {x.shape[1]} does not match encoder input dim {params.in_dim}"
        )
    hidden = T.relu(T.sparse_dense_matmul(a_hat, T.matmul(x, params.W1)))
    out = T.sparse_dense_matmul(a_hat, T.matmul(hidden, params.W2))
    return T.l2_normalize_rows(out)


def _as_rows(x: Tensor):
    if len(x.shape) == 1:
        return T.reshape(x, (1, x.shape[0])), True
    return x, False


def _mlp(x: Tensor, W1: Tensor, b1: Tensor, W2: Tensor, b2: Tensor, activation: str) -> Tensor:
    hidden = T.add(T.matmul(x, W1), b1)
    if activation == "relu":
        hidden = T.relu(hidden)
    return T.add(T.matmul(hidden, W2), b2)


def project_latent(params: ProjectorParams, c: Tensor) -> Tensor:
    """Embed latent codes (a K-vector or B x K rows) into representation space."""
    rows, single = _as_rows(c)
    out = _mlp(rows, params.W1, params.b1, params.W2, params.b2, params.activation)
    return T.reshape(out, (out.shape[1],)) if single else out


def inference_logits(params: InferenceHeadParams, v: Tensor, z: Tensor) -> Tensor:
    """Pre-softmax logits of q(k | v, z) for one pair or B x D' rows of pairs."""
    v_rows, single = _as_rows(v)
    z_rows, _ = _as_rows(z)
    if v_rows.shape != z_rows.shape:
        raise ShapeError(f"inference head inputs differ in shape: {v_rows.shape} vs {z_rows.shape}")
    if params.combine == "concat":
        joined = T.concat_rows(v_rows, z_rows)
    else:
        joined = T.mul(v_rows, z_rows)
    out = _mlp(joined, params.W1, params.b1, params.W2, params.b2, "relu")
    return T.reshape(out, (out.shape[1],)) if single else out


def embed(params: EncoderParams, graph: "Graph") -> np.ndarray:
    """Frozen representations of every node, computed off the tape."""
    frozen = EncoderParams(T.detach(params.W1), T.detach(params.W2))
    return encode(frozen, graph.propagation, graph.x).data
