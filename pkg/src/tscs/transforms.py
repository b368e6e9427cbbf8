"""Fixed orthonormal basis factors: block-diagonal DCT matrices and identities.

A separable block-wise 2D DCT is, per coordinate, a block-diagonal 1D DCT.
These factors are the non-trainable part of structured sensing factors; they
are orthonormal, so the inverse factor is the transpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import as_matrix


@dataclass(frozen=True)
class BasisFactor:
    """An n x n orthonormal, block-diagonal analysis matrix."""

    matrix: np.ndarray
    block_size: int
    kind: str  # "identity" or "block_dct"

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def inverse_matrix(self) -> np.ndarray:
        """Synthesis (inverse) matrix; equals the transpose by orthonormality."""
        return self.matrix.T


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix of size n.

    Row 0 is the constant ``1/sqrt(n)``; row ``i >= 1``, column ``j`` is
    ``sqrt(2/n) * cos(pi * (2j + 1) * i / (2n))``.
    """
    if n < 1:
        raise ValueError("DCT size must be >= 1")
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    mat = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * j + 1) * i / (2.0 * n))
    mat[0, :] = 1.0 / np.sqrt(n)
    return mat


def identity_factor(n: int) -> BasisFactor:
    if n < 1:
        raise ValueError("factor size must be >= 1")
    return BasisFactor(matrix=np.eye(n), block_size=1, kind="identity")


def block_dct_factor(n: int, b: int) -> BasisFactor:
    """Block-diagonal factor with ``n/b`` copies of ``dct_matrix(b)``.

    ``b`` must divide ``n``; there is no implicit padding, so callers must
    crop or pad signals before building operators.
    """
    if n < 1 or b < 1:
        raise ValueError("sizes must be >= 1")
    if n % b != 0:
        raise ValueError(f"block size {b} does not divide factor size {n}")
    if b == 1:
        return identity_factor(n)
    block = dct_matrix(b)
    mat = np.zeros((n, n))
    for start in range(0, n, b):
        mat[start : start + b, start : start + b] = block
    return BasisFactor(matrix=mat, block_size=b, kind="block_dct")


def basis_from_plan_entry(n: int, entry) -> BasisFactor | None:
    """Resolve one basis-plan entry for a mode of length ``n``.

    ``None`` means no basis object at all (the unstructured path); an integer
    ``b >= 1`` selects :func:`block_dct_factor` (``b == 1`` is the identity).
    """
    if entry is None:
        return None
    b = int(entry)
    return block_dct_factor(n, b)


def orthonormality_defect(factor: BasisFactor) -> float:
    """Max-norm of ``F F^T - I``; useful for invariant checks."""
    mat = as_matrix(factor.matrix)
    return float(np.max(np.abs(mat @ mat.T - np.eye(mat.shape[0]))))
