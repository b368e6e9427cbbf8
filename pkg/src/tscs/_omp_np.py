"""Pure-NumPy greedy pursuit kernel (fallback for the compiled extension).

Implements the orthogonal-matching-pursuit selection loop with an
incrementally updated Cholesky factor of the support Gram matrix.  The
compiled kernel in ``_omp_cy`` runs the same operation sequence; both honor
the same contract:

    greedy_path(a, y, k, tol) -> (support, coef, iterations, rank_deficient)

On ``rank_deficient=True`` the last selected column is numerically dependent
on the accrued support; ``coef`` is then stale and the caller must fall back
to a minimum-norm least-squares solve over ``support``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

#: A new support column whose Cholesky pivot satisfies d^2 <= RANK_EPS * ||a||^2
#: is treated as linearly dependent on the support.
RANK_EPS = 1e-13


def greedy_path(a: np.ndarray, y: np.ndarray, k: int, tol: float):
    m, n = a.shape
    norms = np.sqrt(np.einsum("ij,ij->j", a, a))
    eligible = norms > 0.0
    safe_norms = np.where(eligible, norms, 1.0)
    r = y.astype(np.float64, copy=True)
    low = np.zeros((k, k))
    cols = np.zeros((k, m))
    proj = np.zeros(k)
    support = np.zeros(k, dtype=np.int64)
    coef = np.zeros(0)
    count = 0
    for _ in range(k):
        if np.sqrt(r @ r) <= tol:
            break
        score = np.where(eligible, np.abs(a.T @ r) / safe_norms, -np.inf)
        j = int(np.argmax(score))
        if not np.isfinite(score[j]):
            break  # nothing eligible remains
        col = a[:, j].astype(np.float64)
        aa = col @ col
        if count > 0:
            v = cols[:count] @ col
            w = solve_triangular(low[:count, :count], v, lower=True)
            dd = aa - w @ w
            if dd <= RANK_EPS * aa:
                support[count] = j
                return support[: count + 1].copy(), coef, count + 1, True
            low[count, :count] = w
            low[count, count] = np.sqrt(dd)
        else:
            low[0, 0] = np.sqrt(aa)
        cols[count] = col
        proj[count] = col @ y
        support[count] = j
        eligible[j] = False
        count += 1
        z = solve_triangular(low[:count, :count], proj[:count], lower=True)
        coef = solve_triangular(low[:count, :count].T, z, lower=False)
        r = y - cols[:count].T @ coef
    return support[:count].copy(), coef, count, False
