"""
Parse edge list files: one edge per line, two whitespace-separated 0-based node ids.
"""
import logging
from typing import Optional

import numpy as np

from dssl.errors import GraphParseError
from dssl.parsers.generic import iter_records, parse_int


def parse(path: str, num_nodes: Optional[int] = None) -> np.ndarray:
    """
    Read an edge list, validating ids against the node count.

    Self-loops are dropped with a warning; duplicates are kept for the caller to
    deduplicate.

    Args:
        path (str): the edge list to read
        num_nodes (int, optional): upper bound (exclusive) for node ids

    Raises:
        GraphParseError: malformed line or out-of-range node id

    Returns:
        np.ndarray: an E x 2 integer array of the edges as written
    """
    pairs = []
    loops = 0
    for lineno, fields in iter_records(path):
        if len(fields) < 2:
            raise GraphParseError(path, lineno, f"expected two node ids, found {len(fields)}")
        u = parse_int(fields[0], path, lineno, "node id")
        v = parse_int(fields[1], path, lineno, "node id")
        for node in (u, v):
            if node < 0 or (num_nodes is not None and node >= num_nodes):
                raise GraphParseError(
                    path, lineno, f"node id {node} out of range for {num_nodes} nodes"
                )
        if u == v:
            loops += 1
            continue
        pairs.append((u, v))

    if loops:
        logging.warning(f"Dropped {loops} self-loop(s) from {path}")
    logging.debug(f"Read {len(pairs)} edges from {path}")
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)
