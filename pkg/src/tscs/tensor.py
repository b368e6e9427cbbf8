"""Dense tensor algebra: mode products, matricization, vectorization, Kronecker products.

Tensors and matrices are plain ``numpy.ndarray`` objects in double precision,
stored row-major (C order, last mode varies fastest).  Modes are numbered
1..J to match the usual multilinear-algebra convention; ``mode=1`` is the
first axis.

The vectorization convention is row-major throughout, under which

    vec(X x_1 A_1 x_2 ... x_J A_J) = (A_1 kron A_2 kron ... kron A_J) vec(X)

holds with the Kronecker factors in ascending mode order.
"""

from __future__ import annotations

import numpy as np

#: Default cap (in elements) for any materialized matrix, to prevent an
#: accidental full-image Kronecker blowup.  2**26 doubles = 512 MiB.
DEFAULT_CAP = 1 << 26


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class MaterializationError(ValueError):
    """A requested dense materialization exceeds the configured element cap."""


def as_tensor(x) -> np.ndarray:
    """Coerce ``x`` to a C-contiguous float64 array with all-finite entries."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite entries")
    return arr


def as_matrix(x) -> np.ndarray:
    """Like :func:`as_tensor` but additionally requires a 2-D shape."""
    arr = as_tensor(x)
    if arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got array of rank {arr.ndim}")
    return arr


def _check_mode(x: np.ndarray, mode: int) -> int:
    if not 1 <= mode <= x.ndim:
        raise ShapeError(f"mode {mode} out of range for rank-{x.ndim} tensor")
    return mode - 1


def mode_product(x: np.ndarray, matrix: np.ndarray, mode: int) -> np.ndarray:
    """Multiply the ``mode``-th fibers of ``x`` by ``matrix``.

    Parameters
    ----------
    x : ndarray
        Input tensor of shape ``(n_1, ..., n_J)``.
    matrix : ndarray
        Matrix of shape ``(r, n_mode)``.
    mode : int
        Mode index in ``1..J``.

    Returns
    -------
    ndarray
        Tensor whose shape equals ``x.shape`` with ``n_mode`` replaced by
        ``r``:  ``out[.., i, ..] = sum_k matrix[i, k] * x[.., k, ..]``.
    """
    x = np.asarray(x, dtype=np.float64)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"mode-{mode} product needs a matrix, got rank {matrix.ndim}")
    axis = _check_mode(x, mode)
    if matrix.shape[1] != x.shape[axis]:
        raise ShapeError(
            f"mode-{mode} product needs a matrix with {x.shape[axis]} columns, "
            f"got {matrix.shape[0]}x{matrix.shape[1]} for tensor shape {tuple(x.shape)}"
        )
    out = np.tensordot(matrix, x, axes=(1, axis))
    return np.moveaxis(out, 0, axis)


def matricize(x: np.ndarray, mode: int) -> np.ndarray:
    """Unfold ``x`` into a matrix whose rows index the ``mode``-th dimension.

    Columns enumerate the remaining modes in ascending mode order, row-major.
    """
    x = np.asarray(x, dtype=np.float64)
    axis = _check_mode(x, mode)
    return np.moveaxis(x, axis, 0).reshape(x.shape[axis], -1)


def dematricize(m: np.ndarray, mode: int, shape) -> np.ndarray:
    """Exact inverse of :func:`matricize` for the given target ``shape``."""
    m = np.asarray(m, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    if not 1 <= mode <= len(shape):
        raise ShapeError(f"mode {mode} out of range for target shape {shape}")
    axis = mode - 1
    rest = shape[:axis] + shape[axis + 1 :]
    expected = (shape[axis], int(np.prod(rest)) if rest else 1)
    if m.ndim != 2 or m.shape != expected:
        raise ShapeError(
            f"cannot fold matrix of shape {tuple(m.shape)} into {shape} at mode "
            f"{mode} (expected {expected})"
        )
    folded = m.reshape((shape[axis],) + rest)
    return np.ascontiguousarray(np.moveaxis(folded, 0, axis))


def vec(x: np.ndarray) -> np.ndarray:
    """Flatten ``x`` to a 1-D copy in row-major order."""
    return np.asarray(x, dtype=np.float64).reshape(-1).copy()


def kron(a: np.ndarray, b: np.ndarray, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Kronecker product ``a kron b`` with a materialization guard.

    Raises
    ------
    MaterializationError
        If the result would hold more than ``cap`` elements.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("kron operands must be matrices")
    elements = a.shape[0] * b.shape[0] * a.shape[1] * b.shape[1]
    if cap is not None and elements > cap:
        raise MaterializationError(
            f"result too large to materialize: {a.shape[0] * b.shape[0]}x"
            f"{a.shape[1] * b.shape[1]} = {elements} elements exceeds cap {cap}"
        )
    return np.kron(a, b)
