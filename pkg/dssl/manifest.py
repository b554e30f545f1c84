"""
Run manifests: one JSON record per command invocation, written even when the
command fails.
"""
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

import dssl
from dssl.errors import exit_code_for
from dssl.utils import file_checksum


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


@dataclass
class RunManifest:
    command: str
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None
    version: str = dssl.__version__
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    status: str = "running"
    error: Optional[str] = None
    exit_code: int = 0
    duration_seconds: float = 0.0

    def add_input(self, label: str, path) -> None:
        """Record an input file with its SHA-256."""
        if path:
            self.inputs[label] = {"path": str(path), "sha256": file_checksum(path)}

    def add_output(self, label: str, path) -> None:
        self.outputs[label] = str(path)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def write(self, path) -> Path:
        path = Path(path)
        with open(path, "wt") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


@contextmanager
def track_run(manifest: RunManifest, path) -> Iterator[RunManifest]:
    """
    Time a command and write its manifest on exit.

    A raised exception marks the run as failed, records the message and exit
    code, and is re-raised after the manifest is written.
    """
    started = time.perf_counter()
    try:
        yield manifest
        manifest.status = "success"
    except BaseException as e:
        manifest.status = "failed"
        manifest.error = str(e) or type(e).__name__
        manifest.exit_code = exit_code_for(e)
        raise
    finally:
        manifest.duration_seconds = time.perf_counter() - started
        try:
            manifest.write(path)
            logging.debug(f"Wrote run manifest: {path}")
        except OSError as e:
            logging.error(f"Unable to write run manifest {path}: {e}")
