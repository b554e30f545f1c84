"""
Dense tensors, compressed-row sparse matrices, and a recorded tape for
reverse-mode gradients.

Every operation is a module-level function. When any input requires a gradient
the operation is appended to the active Tape together with a vector-Jacobian
product, and `backward` walks the tape from the root towards the leaves.
Outside a `with Tape()` block nothing is recorded and results are constants.

Example:
    with Tape():
        w = Tensor(np.ones((3, 2)), requires_grad=True)
        loss = tensor.sum(tensor.matmul(x, w))
        grads = tensor.backward(loss)
        grads[w]
"""
import logging
import os
import threading
from contextlib import contextmanager
from collections.abc import Mapping
from typing import Callable, Iterable, Iterator, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix, issparse

from dssl.errors import NumericalError, ShapeError

Number = Union[int, float]
_DTYPES = {"float64": np.float64, "float32": np.float32}
_SETTINGS = {
    "checked": os.getenv("DSSL_CHECKED", "1") != "0",
    "dtype": np.float64,
}
_LOCAL = threading.local()
NORM_FLOOR = 1e-12


def set_checked(checked: bool) -> None:
    """
    Enable or disable checked mode (finite-value and log-domain validation).

    Args:
        checked (bool): True to validate values on construction
    """
    _SETTINGS["checked"] = bool(checked)


def is_checked() -> bool:
    return _SETTINGS["checked"]


def set_default_dtype(name: str) -> None:
    """
    Select the floating point precision of newly created tensors.

    Args:
        name (str): Either 'float64' (default) or 'float32'
    """
    if name not in _DTYPES:
        raise ValueError(f"Unknown precision '{name}', expected one of {sorted(_DTYPES)}")
    _SETTINGS["dtype"] = _DTYPES[name]
    logging.debug(f"Default tensor precision set to {name}")


def get_default_dtype():
    return _SETTINGS["dtype"]


@contextmanager
def default_dtype(name: str) -> Iterator[None]:
    """Use `name` as the default precision inside the block and restore the previous one after."""
    previous = _SETTINGS["dtype"]
    set_default_dtype(name)
    try:
        yield
    finally:
        _SETTINGS["dtype"] = previous


class Tensor:
    """An immutable dense array that may take part in gradient computation."""

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=_SETTINGS["dtype"], copy=True)
        self._setup(arr, requires_grad)

    def _setup(self, arr: np.ndarray, requires_grad: bool) -> None:
        if _SETTINGS["checked"] and not np.all(np.isfinite(arr)):
            raise NumericalError(f"Non-finite value in tensor of shape {arr.shape}")
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._node = None

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        out = cls.__new__(cls)
        out._setup(np.asarray(arr), requires_grad)
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class SparseMatrix:
    """A constant matrix in compressed-row layout, backed by scipy."""

    def __init__(self, matrix):
        if not issparse(matrix):
            matrix = csr_matrix(np.asarray(matrix))
        matrix = csr_matrix(matrix, dtype=_SETTINGS["dtype"])
        matrix.sum_duplicates()
        matrix.sort_indices()
        self.matrix = matrix

    @classmethod
    def from_coo(cls, rows, cols, values, shape: Tuple[int, int]) -> "SparseMatrix":
        return cls(csr_matrix((values, (rows, cols)), shape=shape))

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    @property
    def row_offsets(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def values(self) -> np.ndarray:
        return self.matrix.data

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __repr__(self) -> str:
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


class Node:
    """One recorded primitive: its output, parents, and vector-Jacobian product."""

    def __init__(self, tape: "Tape", op: str, output: Tensor, parents, vjp: Callable):
        self.tape = tape
        self.op = op
        self.output = output
        self.parents = tuple(parents)
        self.vjp = vjp
        self.index = len(tape.nodes)


class Tape:
    """
    Append-only record of primitive operations.

    A tape belongs to the thread that created it. Using a tape as a context
    manager makes it the active tape for that thread until the block exits.
    """

    def __init__(self):
        self.nodes = []

    def record(self, op: str, output: Tensor, parents, vjp: Callable) -> None:
        node = Node(self, op, output, parents, vjp)
        self.nodes.append(node)
        output._node = node

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack().pop()

    @staticmethod
    def active() -> Optional["Tape"]:
        """The innermost tape entered on this thread, or None."""
        stack = _tape_stack()
        return stack[-1] if stack else None


def _tape_stack() -> list:
    if not hasattr(_LOCAL, "stack"):
        _LOCAL.stack = []
    return _LOCAL.stack


def _result(op: str, arr: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    tape = Tape.active()
    needs_grad = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor._wrap(arr, requires_grad=needs_grad)
    if needs_grad:
        tape.record(op, out, parents, vjp)
    return out


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _broadcast_kind(a: Tuple[int, ...], b: Tuple[int, ...], op: str) -> str:
    """Classify the allowed broadcasts: equal shapes, scalar, or row vector with matrix."""
    if a == b:
        return "same"
    if len(b) == 0 or b == (1,):
        return "scalar_b"
    if len(a) == 0 or a == (1,):
        return "scalar_a"
    if len(a) == 2 and b in ((a[1],), (1, a[1])):
        return "row_b"
    if len(b) == 2 and a in ((b[1],), (1, b[1])):
        return "row_a"
    raise ShapeError(f"{op}: shapes {a} and {b} do not conform")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0 or shape == (1,):
        return np.asarray(grad.sum()).reshape(shape)
    return grad.sum(axis=0).reshape(shape)


def add(a, b) -> Tensor:
    """Elementwise sum; b may be a scalar or a row vector broadcast over rows."""
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_kind(a.shape, b.shape, "add")

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result("add", a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_kind(a.shape, b.shape, "sub")

    def vjp(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _result("sub", a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product."""
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_kind(a.shape, b.shape, "mul")

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result("mul", a.data * b.data, (a, b), vjp)


def scalar_mul(x: Tensor, c: Number) -> Tensor:
    c = float(c)
    return _result("scalar_mul", x.data * c, (x,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _result("matmul", a.data @ b.data, (a, b), vjp)


def sparse_dense_matmul(s: SparseMatrix, d: Tensor) -> Tensor:
    """Product of a constant sparse matrix with a dense tensor."""
    if d.data.ndim != 2 or s.cols != d.shape[0]:
        raise ShapeError(f"sparse_dense_matmul: shapes {s.shape} and {d.shape} do not conform")
    out = np.asarray(s.matrix @ d.data)

    def vjp(g):
        return (np.asarray(s.matrix.T @ g),)

    return _result("sparse_dense_matmul", out, (d,), vjp)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {x.shape}")
    return _result("transpose", x.data.T.copy(), (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)
    return _result("reshape", out.copy(), (x,), lambda g: (g.reshape(x.shape),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _result("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    if _SETTINGS["checked"] and np.any(x.data <= 0):
        raise NumericalError("log: input has non-positive entries")
    return _result("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def _check_matrix(x: Tensor, op: str) -> None:
    if x.data.ndim != 2:
        raise ShapeError(f"{op}: expected a matrix, got shape {x.shape}")


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax with the per-row maximum subtracted first."""
    _check_matrix(x, "softmax_rows")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _result("softmax_rows", s, (x,), vjp)


def log_softmax_rows(x: Tensor) -> Tensor:
    """Row-wise log-softmax in the shifted-max stable form."""
    _check_matrix(x, "log_softmax_rows")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    s = np.exp(out)

    def vjp(g):
        return (g - s * g.sum(axis=1, keepdims=True),)

    return _result("log_softmax_rows", out, (x,), vjp)


def sum(x: Tensor) -> Tensor:  # noqa: A001
    return _result("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.full(x.shape, g),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return _result(
        "mean", np.asarray(x.data.mean()), (x,), lambda g: (np.full(x.shape, g / n),)
    )


def sum_rows(x: Tensor) -> Tensor:
    """Sum of each row of a matrix, as a vector."""
    _check_matrix(x, "sum_rows")
    return _result(
        "sum_rows",
        x.data.sum(axis=1),
        (x,),
        lambda g: (np.repeat(g[:, None], x.shape[1], axis=1),),
    )


def squared_row_norms(x: Tensor) -> Tensor:
    _check_matrix(x, "squared_row_norms")
    return _result(
        "squared_row_norms",
        (x.data * x.data).sum(axis=1),
        (x,),
        lambda g: (2.0 * x.data * g[:, None],),
    )


def l2_normalize_rows(x: Tensor, floor: float = NORM_FLOOR) -> Tensor:
    """Scale every row to unit Euclidean norm; norms below `floor` are clamped."""
    _check_matrix(x, "l2_normalize_rows")
    raw = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    clamped = raw < floor
    norms = np.where(clamped, floor, raw)
    y = x.data / norms

    def vjp(g):
        radial = np.where(clamped, 0.0, (g * y).sum(axis=1, keepdims=True))
        return ((g - y * radial) / norms,)

    return _result("l2_normalize_rows", y, (x,), vjp)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    """Join two matrices row by row: row i of the result is [a_i; b_i]."""
    _check_matrix(a, "concat_rows")
    _check_matrix(b, "concat_rows")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_rows: row counts {a.shape[0]} and {b.shape[0]} differ")
    split = a.shape[1]

    def vjp(g):
        return g[:, :split], g[:, split:]

    return _result("concat_rows", np.hstack([a.data, b.data]), (a, b), vjp)


def gather_rows(x: Tensor, index) -> Tensor:
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {x.shape[0]} rows")

    def vjp(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _result("gather_rows", x.data[idx], (x,), vjp)


def detach(x: Tensor) -> Tensor:
    """The same values cut off from the tape."""
    return Tensor._wrap(x.data, requires_grad=False)


def replace_forward(surrogate: Tensor, value) -> Tensor:
    """
    Forward `value` while routing the incoming gradient to `surrogate` unchanged.

    This is the straight-through combinator: the result reads as `value` but
    differentiates as `surrogate`.
    """
    arr = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=surrogate.data.dtype)
    if arr.shape != surrogate.shape:
        raise ShapeError(f"replace_forward: shapes {arr.shape} and {surrogate.shape} differ")
    return _result("replace_forward", arr.copy(), (surrogate,), lambda g: (g,))


class Gradients(Mapping):
    """Gradients keyed by leaf tensor; leaves that were never reached map to zeros."""

    def __init__(self, entries: dict):
        self._entries = entries

    def __getitem__(self, leaf: Tensor) -> np.ndarray:
        if id(leaf) in self._entries:
            return self._entries[id(leaf)][1]
        return np.zeros_like(leaf.data)

    def __contains__(self, leaf) -> bool:
        return id(leaf) in self._entries

    def __iter__(self):
        return (tensor for tensor, _ in self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)


def backward(root: Tensor, wrt: Optional[Iterable[Tensor]] = None) -> Gradients:
    """
    Reverse-mode gradients of a scalar root.

    Args:
        root (Tensor): A single-element tensor produced on a tape
        wrt (Iterable[Tensor], optional): Leaves that must appear in the result (zeros if unreached)

    Raises:
        ShapeError: root is not a scalar

    Returns:
        Gradients: d(root)/d(leaf) for every requires_grad leaf on the path
    """
    if root.data.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")

    pending = {id(root): np.ones_like(root.data)}
    leaves = {}
    if root._node is None:
        if root.requires_grad:
            leaves[id(root)] = root
    else:
        nodes = root._node.tape.nodes[: root._node.index + 1]
        for node in reversed(nodes):
            grad = pending.pop(id(node.output), None)
            if grad is None:
                continue
            for parent, parent_grad in zip(node.parents, node.vjp(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                parent_grad = np.asarray(parent_grad).reshape(parent.shape)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad
                if parent._node is None:
                    leaves[key] = parent

    entries = {key: (leaf, pending[key]) for key, leaf in leaves.items()}
    for leaf in wrt or ():
        if id(leaf) not in entries:
            entries[id(leaf)] = (leaf, np.zeros_like(leaf.data))
    return Gradients(entries)


def finite_diff_check(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6, floor: float = 1e-12
) -> float:
    """
    Compare analytic gradients of a scalar function with central differences.

    Args:
        f (Callable): Maps a tensor to a scalar tensor
        x (Tensor): The point at which the gradient is checked
        eps (float, optional): Perturbation per coordinate. Defaults to 1e-6.
        floor (float, optional): Added to the denominator. Defaults to 1e-12.

    Returns:
        float: max |analytic - numeric| / (|analytic| + |numeric| + floor) over coordinates
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = np.array(x.data, dtype=np.float64)
    leaf = Tensor(base, requires_grad=True)
    with Tape():
        analytic = backward(f(leaf), wrt=[leaf])[leaf]

    numeric = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        plus = base.copy()
        plus[idx] += eps
        minus = base.copy()
        minus[idx] -= eps
        with Tape():
            upper = f(Tensor(plus)).item()
            lower = f(Tensor(minus)).item()
        numeric[idx] = (upper - lower) / (2.0 * eps)

    if base.size == 0:
        return 0.0
    error = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + floor)
    return float(error.max())
