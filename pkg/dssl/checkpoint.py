"""
Binary checkpoints of trained parameters.

Layout: the 8-byte magic `DSSLCKPT`, a little-endian uint64 header length, a
UTF-8 JSON header, then every array as float64 little-endian in header order.
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from dssl.errors import CheckpointError, ShapeError
from dssl.model import EncoderParams, ModelDims, ModelParams, init_params
from dssl.tensor import Tensor

MAGIC = b"DSSLCKPT"
FORMAT_VERSION = 1
METHODS = ("dssl", "gae")


@dataclass
class Checkpoint:
    method: str
    arrays: Dict[str, np.ndarray]
    dims: dict
    K: int = 1
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def feature_dim(self) -> int:
        return int(self.dims["feature_dim"])

    @property
    def out_dim(self) -> int:
        return int(self.dims["out_dim"])

    def encoder(self) -> EncoderParams:
        """The online encoder, as leaves that do not require gradients."""
        return EncoderParams(Tensor(self.arrays["online.W1"]), Tensor(self.arrays["online.W2"]))

    def model_params(self) -> ModelParams:
        """
        The full parameter bundle of a self-supervised checkpoint.

        Raises:
            CheckpointError: the checkpoint only holds an encoder
        """
        if self.method != "dssl":
            raise CheckpointError(f"a '{self.method}' checkpoint holds no latent-factor parameters")
        dims = ModelDims(
            self.feature_dim,
            int(self.dims["hidden_dim"]),
            self.out_dim,
            int(self.dims.get("mlp_hidden", 0)),
        )
        template = init_params(
            dims,
            self.K,
            seed=0,
            combine=self.extra.get("combine", "concat"),
            projector_activation=self.extra.get("projector_activation", "relu"),
        )
        missing = set(template.named_tensors()) - set(self.arrays)
        if missing:
            raise CheckpointError(f"checkpoint is missing tensors: {sorted(missing)}")
        return template.with_tensors(dict(self.arrays))

    def check_feature_dim(self, feature_dim: int) -> None:
        if feature_dim != self.feature_dim:
            raise ShapeError(
                f"graph feature dim {feature_dim} does not match checkpoint input dim "
                f"{self.feature_dim}"
            )


def from_params(
    params: ModelParams, config_hash: str = "", mlp_hidden: int = 0
) -> Checkpoint:
    """Checkpoint every tensor of a self-supervised model."""
    online = params.online
    return Checkpoint(
        method="dssl",
        arrays={name: t.data for name, t in params.named_tensors().items()},
        dims={
            "feature_dim": online.in_dim,
            "hidden_dim": online.W1.shape[1],
            "out_dim": online.out_dim,
            "mlp_hidden": mlp_hidden,
        },
        K=params.K,
        config_hash=config_hash,
        extra={"combine": params.head.combine, "projector_activation": params.projector.activation},
    )


def from_encoder(encoder: EncoderParams, method: str = "gae", config_hash: str = "") -> Checkpoint:
    """Checkpoint an encoder alone (the autoencoder baseline)."""
    return Checkpoint(
        method=method,
        arrays={"online.W1": encoder.W1.data, "online.W2": encoder.W2.data},
        dims={
            "feature_dim": encoder.in_dim,
            "hidden_dim": encoder.W1.shape[1],
            "out_dim": encoder.out_dim,
        },
        config_hash=config_hash,
    )


def save(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    """
    Write a checkpoint.

    Args:
        path (Union[str, Path]): destination file
        checkpoint (Checkpoint): the parameters and their metadata

    Returns:
        Path: the written file
    """
    names = sorted(checkpoint.arrays)
    header = {
        "format_version": FORMAT_VERSION,
        "method": checkpoint.method,
        "names": names,
        "shapes": [list(np.shape(checkpoint.arrays[name])) for name in names],
        "dims": checkpoint.dims,
        "K": checkpoint.K,
        "config_hash": checkpoint.config_hash,
        "extra": checkpoint.extra,
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(encoded)))
        fh.write(encoded)
        for name in names:
            fh.write(np.ascontiguousarray(checkpoint.arrays[name], dtype="<f8").tobytes())
    logging.debug(f"Wrote {len(names)} tensors to {path}")
    return path


def load(path: Union[str, Path], method: Optional[str] = None) -> Checkpoint:
    """
    Read a checkpoint written by `save`.

    Args:
        path (Union[str, Path]): checkpoint file
        method (str, optional): require this training method

    Raises:
        CheckpointError: bad magic, truncated data, or an unexpected method

    Returns:
        Checkpoint: arrays as float64
    """
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a dssl checkpoint")
    start = len(MAGIC) + 8
    if len(raw) < start:
        raise CheckpointError(f"{path}: truncated header")
    (length,) = struct.unpack("<Q", raw[len(MAGIC) : start])
    try:
        header = json.loads(raw[start : start + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header ({e})") from None
    if not {"names", "shapes", "dims"} <= set(header):
        raise CheckpointError(f"{path}: header lacks names, shapes or dims")

    offset = start + length
    arrays = {}
    for name, shape in zip(header["names"], header["shapes"]):
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated data for '{name}'")
        arrays[name] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).astype(np.float64)
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")

    if header.get("method") not in METHODS:
        raise CheckpointError(f"{path}: unknown method '{header.get('method')}'")
    if method and header["method"] != method:
        raise CheckpointError(
            f"{path}: expected a '{method}' checkpoint, found '{header['method']}'"
        )
    return Checkpoint(
        method=header["method"],
        arrays=arrays,
        dims=header["dims"],
        K=header.get("K", 1),
        config_hash=header.get("config_hash", ""),
        extra=header.get("extra", {}),
    )
