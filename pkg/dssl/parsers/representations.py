"""
Read and write representation and posterior tables (node_id, dim_0..dim_{D-1}).
"""
from typing import Tuple

import numpy as np
import pandas as pd

from dssl.errors import GraphParseError


def to_frame(values: np.ndarray, prefix: str = "dim") -> pd.DataFrame:
    """
    Tabulate a per-node matrix with a node_id column.

    Args:
        values (np.ndarray): N x D values
        prefix (str, optional): column prefix. Defaults to 'dim'.

    Returns:
        pd.DataFrame: columns node_id, {prefix}_0 .. {prefix}_{D-1}
    """
    df = pd.DataFrame(values, columns=[f"{prefix}_{i}" for i in range(values.shape[1])])
    df.insert(0, "node_id", np.arange(values.shape[0]))
    return df


def write(path: str, values: np.ndarray, prefix: str = "dim") -> None:
    to_frame(values, prefix=prefix).to_csv(path, index=False, float_format="%.17g")


def parse(path: str, prefix: str = "dim") -> Tuple[np.ndarray, np.ndarray]:
    """
    Read a representation CSV back, ordered by node_id.

    Args:
        path (str): CSV with header node_id,dim_0,...
        prefix (str, optional): expected column prefix. Defaults to 'dim'.

    Raises:
        GraphParseError: unexpected header or non-numeric values

    Returns:
        Tuple[np.ndarray, np.ndarray]: node ids and the N x D matrix
    """
    df = pd.read_csv(path, float_precision="round_trip")
    expected = ["node_id"] + [f"{prefix}_{i}" for i in range(len(df.columns) - 1)]
    if list(df.columns) != expected or len(expected) < 2:
        raise GraphParseError(path, 1, f"expected header {','.join(expected[:3])},...")
    df = df.apply(pd.to_numeric, errors="coerce")
    if df.isna().any().any():
        row = int(np.flatnonzero(df.isna().any(axis=1).to_numpy())[0])
        raise GraphParseError(path, row + 2, "missing or non-numeric value")

    df = df.sort_values("node_id")
    node_ids = df["node_id"].to_numpy(dtype=np.int64)
    return node_ids, df.drop(columns="node_id").to_numpy(dtype=np.float64)
