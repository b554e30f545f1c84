import hashlib
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Iterable, Union

import numpy as np
import rich.console
from rich.logging import RichHandler
from threadpoolctl import threadpool_limits
from tqdm.contrib.concurrent import process_map

from dssl.errors import exit_code_for

BAR_FORMAT = "{l_bar}{bar:80}{r_bar}{bar:-80b}"


def setup_logging(verbose: bool = False, silent: bool = False) -> None:
    """
    Send log records to stderr through Rich

    Args:
        verbose (bool, optional): Print debug related text. Defaults to False.
        silent (bool, optional): Only critical errors will be printed. Defaults to False.
    """
    logging.basicConfig(
        format="%(asctime)s:%(name)s:%(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[
            RichHandler(rich_tracebacks=True, console=rich.console.Console(stderr=True))
        ],
    )
    logging.getLogger().setLevel(
        logging.ERROR if silent else logging.DEBUG if verbose else logging.INFO
    )


def limit_threads():
    """
    Cap BLAS/OpenMP threads from DSSL_NUM_THREADS, if set

    Returns:
        threadpool_limits: A context manager (a no-op limit when unset)
    """
    threads = os.getenv("DSSL_NUM_THREADS")
    if threads:
        logging.debug(f"Limiting numeric libraries to {threads} thread(s)")
        return threadpool_limits(limits=int(threads))
    return threadpool_limits(limits=None)


def parallel_map(func: Callable, items: list, cpus: int, desc: str) -> list:
    """
    Run a function over a list, in worker processes when cpus > 1

    Args:
        func (Callable): A picklable function taking one item
        items (list): The inputs
        cpus (int): The number of worker processes
        desc (str): Progress bar label

    Returns:
        list: Results in input order
    """
    if cpus <= 1:
        return [func(item) for item in items]
    return process_map(
        func,
        items,
        max_workers=cpus,
        chunksize=1,
        bar_format=BAR_FORMAT,
        desc=desc,
    )


def mkdir(directory: str) -> Path:
    """
    Create a directory if it does not exist

    Args:
        directory (str): The directory to create

    Returns:
        Path: The Path object of the created directory
    """
    d = Path(directory)
    if not d.exists():
        d.mkdir(parents=True, exist_ok=True)
    return d


def file_checksum(filename: Union[str, Path]) -> str:
    """
    SHA-256 of a file's contents

    Args:
        filename (Union[str, Path]): The file to hash

    Returns:
        str: hex digest
    """
    digest = hashlib.sha256()
    with open(filename, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def array_checksum(array: np.ndarray) -> str:
    """SHA-256 of an array's float64 little-endian bytes."""
    data = np.ascontiguousarray(array, dtype="<f8")
    return hashlib.sha256(data.tobytes()).hexdigest()


def prefix_keys(results: dict, prefix: str) -> dict:
    """
    Add a prefix to existing keys

    Args:
        results (dict): The dictionary of results
        prefix (str): A string to prefix each key with

    Returns:
        dict: The result dictionary with prefixed keys.
    """
    prefixed = {}
    for key, val in results.items():
        prefixed[f"{prefix}_{key}"] = val
    return prefixed


def chunk_list(lst: Iterable, n: int) -> list:
    """
    Yield successive n-sized chunks from input list.

    Args:
        lst (list): The list to chunk
        n (int): The size of each chunk

    Returns:
        list: A list of n-sized chunks
    """
    for i in range(0, len(lst), n):
        yield lst[i : i + n]


def exit_with_error(error: BaseException) -> None:
    """
    Log an error and exit with the code its type maps to

    Args:
        error (BaseException): The exception that stopped a command
    """
    logging.error(str(error) or type(error).__name__)
    sys.exit(exit_code_for(error))
