"""
Shared functions used by parsers.
"""
from typing import Iterator, Tuple

from dssl.errors import GraphParseError


def iter_records(path: str, comment: str = "#") -> Iterator[Tuple[int, list]]:
    """
    Yield whitespace-split fields of each non-blank line.

    Args:
        path (str): input text file
        comment (str, optional): lines starting with this are skipped. Defaults to '#'.

    Yields:
        Tuple[int, list]: the 1-based line number and its fields
    """
    with open(path, "rt") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or (comment and line.startswith(comment)):
                continue
            yield lineno, line.split()


def parse_int(token: str, path: str, lineno: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise GraphParseError(path, lineno, f"invalid {what} '{token}'") from None
