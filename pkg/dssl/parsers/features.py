"""
Parse node feature files: headerless CSV, one row of reals per node in node-id order.
"""
import logging
import re

import numpy as np
import pandas as pd

from dssl.errors import GraphParseError


def parse(path: str) -> np.ndarray:
    """
    Read the feature matrix.

    Args:
        path (str): headerless CSV of real values

    Raises:
        GraphParseError: ragged or non-numeric row

    Returns:
        np.ndarray: an N x D float64 matrix
    """
    try:
        df = pd.read_csv(
            path, header=None, skip_blank_lines=False, float_precision="round_trip"
        )
    except pd.errors.EmptyDataError:
        raise GraphParseError(path, 1, "feature file is empty") from None
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        lineno = int(match.group(1)) if match else 0
        raise GraphParseError(path, lineno, "ragged feature row") from None

    values = df.apply(pd.to_numeric, errors="coerce")
    bad = values.isna().any(axis=1).to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise GraphParseError(path, row + 1, "ragged or non-numeric feature row")

    features = values.to_numpy(dtype=np.float64)
    logging.debug(f"Read {features.shape[0]}x{features.shape[1]} features from {path}")
    return features
