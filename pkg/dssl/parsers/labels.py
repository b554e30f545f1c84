"""
Parse label files: one integer class id per line in node-id order, -1 for unlabeled.
"""
import numpy as np

from dssl.errors import GraphParseError
from dssl.parsers.generic import iter_records, parse_int

UNLABELED = -1


def parse(path: str) -> np.ndarray:
    """
    Read node labels.

    Args:
        path (str): one label per line

    Raises:
        GraphParseError: unknown label token

    Returns:
        np.ndarray: integer labels, -1 where unlabeled
    """
    labels = []
    for lineno, fields in iter_records(path):
        if len(fields) != 1:
            raise GraphParseError(path, lineno, f"expected one label, found {len(fields)}")
        label = parse_int(fields[0], path, lineno, "label")
        if label < UNLABELED:
            raise GraphParseError(path, lineno, f"unknown label token '{fields[0]}'")
        labels.append(label)
    return np.array(labels, dtype=np.int64)
