"""Coherence functionals and image-quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .tensor import ShapeError, as_matrix


class DegenerateColumnError(ValueError):
    """A coherence computation hit an exactly-zero column."""


@dataclass(frozen=True)
class CoherenceReport:
    """Mutual coherence value plus the column pair attaining it (i < j)."""

    value: float
    argmax_pair: tuple[int, int]


def pair_coherence_value(a: np.ndarray, i: int, j: int) -> float:
    """Normalized absolute inner product of columns ``i`` and ``j``."""
    ci, cj = a[:, i], a[:, j]
    denom = np.sqrt(np.dot(ci, ci)) * np.sqrt(np.dot(cj, cj))
    return float(np.abs(np.dot(ci, cj)) / denom)


def mutual_coherence(a: np.ndarray) -> CoherenceReport:
    """Maximum normalized absolute inner product over distinct column pairs.

    The maximum runs over strict pairs ``i < j`` (the diagonal is excluded,
    so orthogonal matrices score 0 and a repeated column scores 1).
    """
    a = as_matrix(a)
    n = a.shape[1]
    if n < 2:
        raise ShapeError("mutual coherence needs at least 2 columns")
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0.0):
        bad = int(np.argmin(norms))
        raise DegenerateColumnError(f"column {bad} is identically zero")
    gram = np.abs(a.T @ a) / np.outer(norms, norms)
    iu, ju = np.triu_indices(n, k=1)
    best = int(np.argmax(gram[iu, ju]))
    i, j = int(iu[best]), int(ju[best])
    # report the definitional per-pair value so the result is exactly
    # recomputable from the argmax pair (the Gram entry can differ in the
    # last ulp from the pairwise dot product)
    value = pair_coherence_value(a, i, j)
    return CoherenceReport(value=value, argmax_pair=(i, j))


def coherence_max_entry(a: np.ndarray) -> float:
    """Largest absolute entry of a matrix."""
    a = as_matrix(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def mutual_coherence_pair(psi: np.ndarray, phi: np.ndarray) -> float:
    """Coherence between the rows of ``psi`` and the columns of ``phi``.

    Rows of ``psi`` and columns of ``phi`` are normalized internally, so the
    result lies in ``[1/sqrt(N), 1]`` for square orthonormal-spanning pairs.
    """
    psi = as_matrix(psi)
    phi = as_matrix(phi)
    if psi.shape[1] != phi.shape[0]:
        raise ShapeError(
            f"inner dimensions disagree: psi is {psi.shape}, phi is {phi.shape}"
        )
    row_norms = np.linalg.norm(psi, axis=1)
    col_norms = np.linalg.norm(phi, axis=0)
    if np.any(row_norms == 0.0) or np.any(col_norms == 0.0):
        raise DegenerateColumnError("zero row or column in coherence pair")
    inner = (psi / row_norms[:, None]) @ (phi / col_norms[None, :])
    return float(np.max(np.abs(inner)))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the inputs are equal."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr shapes disagree: {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    window = np.outer(g, g)
    return window / window.sum()


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Mean structural similarity over all full 11x11 Gaussian windows.

    Single-scale SSIM with sigma = 1.5, K1 = 0.01, K2 = 0.03, and dynamic
    range ``peak``; both images must be 2-D with min dimension >= 11.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("ssim expects 2-D images")
    if a.shape != b.shape:
        raise ShapeError(f"ssim shapes disagree: {a.shape} vs {b.shape}")
    if min(a.shape) < 11:
        raise ShapeError(f"image {a.shape} too small for an 11x11 window")
    window = _gaussian_window()
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2

    def filt(x):
        return convolve2d(x, window, mode="valid")

    mu_a = filt(a)
    mu_b = filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
