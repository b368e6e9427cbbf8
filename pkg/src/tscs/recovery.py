"""Sparse recovery by orthogonal matching pursuit and the exact-recovery study.

The Monte-Carlo experiment measures the probability that OMP returns a
synthetic k-sparse signal exactly (support equality and max error <= 1e-6)
when the measurement matrix is an unconstrained Gaussian draw, a tensor-sum
of Kronecker factors, or a structured tensor-sum with block-DCT bases.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .operators import build_operator
from .tensor import ShapeError
from .utils import derive_rng

#: OMP stops early once the residual 2-norm falls to this level.
RESIDUAL_TOL = 1e-12

#: Max absolute coefficient error still counted as exact recovery.
EXACT_TOL = 1e-6


@dataclass(frozen=True)
class SparseVector:
    """A k-sparse vector stored as (sorted support, values on the support)."""

    length: int
    support: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if support.shape != values.shape or support.ndim != 1:
            raise ShapeError("support and values must be 1-D and aligned")
        if support.size:
            if support[0] < 0 or support[-1] >= self.length:
                raise ValueError("support index out of range")
            if np.any(np.diff(support) <= 0):
                raise ValueError("support must be sorted and unique")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @property
    def nnz(self) -> int:
        return int(self.support.size)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.length)
        dense[self.support] = self.values
        return dense


@dataclass(frozen=True)
class OmpResult:
    estimate: SparseVector
    residual_norm: float
    iterations: int
    rank_deficient: bool = False


def omp(a: np.ndarray, y: np.ndarray, k: int, tol: float = RESIDUAL_TOL) -> OmpResult:
    """Orthogonal matching pursuit with a budget of ``k`` selections.

    Each iteration picks the not-yet-chosen column maximizing
    ``|a_i^T r| / ||a_i||``, re-solves least squares on the accrued support,
    and updates the residual; iteration stops after ``k`` picks or once the
    residual norm falls to ``tol``.  If a selected column is numerically
    dependent on the support, the coefficients come from a minimum-norm
    least-squares solve and the result is flagged ``rank_deficient``.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError("measurement matrix must be 2-D")
    m, n = a.shape
    if y.shape != (m,):
        raise ShapeError(f"measurement length {y.shape} does not match matrix rows {m}")
    if not 1 <= k <= m:
        raise ValueError(f"sparsity budget k={k} must satisfy 1 <= k <= rows={m}")
    if not np.any(y):
        return OmpResult(SparseVector(n), residual_norm=0.0, iterations=0)
    support, coef, iterations, flagged = backend.greedy_path(a, y, k, tol)
    if flagged:
        coef, *_ = np.linalg.lstsq(a[:, support], y, rcond=None)
    residual = y - a[:, support] @ coef if support.size else y
    order = np.argsort(support)
    estimate = SparseVector(n, support=support[order], values=np.asarray(coef)[order])
    return OmpResult(
        estimate=estimate,
        residual_norm=float(np.linalg.norm(residual)),
        iterations=int(iterations),
        rank_deficient=bool(flagged),
    )


# ---------------------------------------------------------------------------
# matrix sources for the Monte-Carlo study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianSource:
    """Unconstrained i.i.d. Gaussian measurement matrix."""

    name = "unconstrained"
    branch_count = 0

    def build(self, rng: np.random.Generator, n: int, m: int) -> np.ndarray:
        return rng.standard_normal((m, n)) / np.sqrt(n)


@dataclass(frozen=True)
class TensorSumSource:
    """Sum of ``branch_count`` Kronecker products of Gaussian factors.

    ``blocks`` switches on fixed block-DCT bases per branch (the structured
    variant); the signal and measurement shapes must factorize ``N`` and
    ``m`` respectively.
    """

    branch_count: int
    input_shape: tuple
    output_shape: tuple
    blocks: tuple | None = None

    @property
    def name(self) -> str:
        return "structured" if self.blocks else "tensor_sum"

    def validate(self, n: int, m: int) -> None:
        if int(np.prod(self.input_shape)) != n:
            raise ValueError(
                f"signal shape {tuple(self.input_shape)} does not factorize N={n}"
            )
        if int(np.prod(self.output_shape)) != m:
            raise ValueError(
                f"measurement shape {tuple(self.output_shape)} does not factorize m={m}"
            )

    def build(self, rng: np.random.Generator, n: int, m: int) -> np.ndarray:
        self.validate(n, m)
        plan = list(self.blocks) if self.blocks else None
        op = build_operator(self.input_shape, self.output_shape, self.branch_count,
                            basis_plan=plan, rng_seed=rng)
        return op.materialize()


def _trial(source, n: int, k: int, m: int, seed, index: int) -> bool:
    rng = derive_rng(seed, index)
    a = source.build(rng, n, m)
    support = np.sort(rng.choice(n, size=k, replace=False))
    values = rng.standard_normal(k)
    x = np.zeros(n)
    x[support] = values
    result = omp(a, a @ x, k)
    est = result.estimate
    if est.nnz != k or not np.array_equal(est.support, support):
        return False
    return bool(np.max(np.abs(est.to_dense() - x)) <= EXACT_TOL)


def exact_recovery_rate(source, n: int, k: int, m: int, trials: int, seed,
                        threads: int = 1) -> float:
    """Fraction of seeded trials recovered exactly.

    Every trial draws a fresh matrix, support and coefficients from a stream
    derived from ``(seed, trial_index)``, so results are reproducible and
    independent of ``threads``.  ``k = 0`` is trivially recovered (rate 1)
    and ``k > m`` cannot be unique (rate 0); both shortcut the loop.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if k < 0 or m < 1 or m > n:
        raise ValueError(f"invalid experiment size k={k}, m={m}, N={n}")
    if isinstance(source, TensorSumSource):
        source.validate(n, m)
    if k == 0:
        return 1.0
    if k > m:
        return 0.0
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hits = list(pool.map(lambda i: _trial(source, n, k, m, seed, i), range(trials)))
    else:
        hits = [_trial(source, n, k, m, seed, i) for i in range(trials)]
    return sum(hits) / trials
