"""Tensor-summation measurement operators and their learnable adjoints.

A sensing operator is a sum of ``T`` separable branches.  Branch ``t`` holds
one factor per mode; the effective per-mode factor is the learnable weight
matrix composed with an optional fixed orthonormal basis (analysis side
first, then the weights).  Applying the operator runs the input through each
branch's mode-product chain and sums the branch outputs:

    Y = sum_t  S x_1 (W_1 D_1) x_2 ... x_J (W_J D_J)

The adjoint operator maps measurements back to signal space with learnable
weights composed with the fixed inverse (transposed) bases:

    S~ = sum_t  Y x_1 (D_1^T B_1) x_2 ... x_J (D_J^T B_J)

With ``B_j = W_j^T`` the adjoint is exact: it equals the transpose of the
materialized sensing matrix under the row-major vec convention.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .tensor import DEFAULT_CAP, MaterializationError, ShapeError, kron, mode_product
from .tensorfile import tensor_from_bytes, tensor_to_bytes
from .transforms import BasisFactor, basis_from_plan_entry


@dataclass
class FactorMatrix:
    """One learnable sensing factor: weights (m x n) over an optional basis (n x n)."""

    weights: np.ndarray
    basis: BasisFactor | None = None

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or min(w.shape) < 1:
            raise ShapeError("factor weights must be a non-empty matrix")
        if w.shape[0] > w.shape[1]:
            raise ShapeError(
                f"factor must not expand its mode: {w.shape[0]} rows > {w.shape[1]} columns"
            )
        if self.basis is not None and self.basis.size != w.shape[1]:
            raise ShapeError(
                f"basis size {self.basis.size} does not match factor columns {w.shape[1]}"
            )
        self.weights = w

    def effective(self) -> np.ndarray:
        """The m x n matrix actually applied to the mode: weights after basis."""
        if self.basis is None:
            return self.weights
        return self.weights @ self.basis.matrix

    def weight_grad(self, d_effective: np.ndarray) -> np.ndarray:
        """Chain a gradient w.r.t. the effective matrix back to the weights."""
        if self.basis is None:
            return d_effective
        return d_effective @ self.basis.matrix.T


@dataclass
class AdjointFactor:
    """One learnable adjoint factor: weights (n x m) under an optional inverse basis."""

    weights: np.ndarray
    basis: BasisFactor | None = None

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or min(w.shape) < 1:
            raise ShapeError("adjoint weights must be a non-empty matrix")
        if self.basis is not None and self.basis.size != w.shape[0]:
            raise ShapeError(
                f"basis size {self.basis.size} does not match adjoint rows {w.shape[0]}"
            )
        self.weights = w

    def effective(self) -> np.ndarray:
        """The n x m matrix actually applied: inverse basis after weights."""
        if self.basis is None:
            return self.weights
        return self.basis.inverse_matrix() @ self.weights

    def weight_grad(self, d_effective: np.ndarray) -> np.ndarray:
        if self.basis is None:
            return d_effective
        return self.basis.matrix @ d_effective


@dataclass(frozen=True)
class ParamCount:
    factorized: int
    dense_equivalent: int


def _apply_branches(x: np.ndarray, branches, in_shape, out_shape) -> np.ndarray:
    """Sum of per-branch mode-product chains; shared by sensing and adjoint."""
    x = np.asarray(x, dtype=np.float64)
    if tuple(x.shape) != tuple(in_shape):
        raise ShapeError(f"input shape {tuple(x.shape)} does not match operator {tuple(in_shape)}")
    total = np.zeros(out_shape)
    for branch in branches:
        y = x
        for mode, factor in enumerate(branch, start=1):
            y = mode_product(y, factor.effective(), mode)
        total += y
    return total


class TensorSumOperator:
    """Measurement operator ``P`` summing ``T`` separable branches.

    Attributes
    ----------
    branches : list of list of FactorMatrix
        ``branches[t][j]`` is the factor of branch ``t`` at mode ``j + 1``.
    input_shape, output_shape : tuple of int
        Signal and measurement tensor shapes; shared by all branches.
    """

    def __init__(self, branches, input_shape, output_shape, basis_plan=None, seed=None):
        self.branches = branches
        self.input_shape = tuple(int(n) for n in input_shape)
        self.output_shape = tuple(int(m) for m in output_shape)
        self.basis_plan = basis_plan
        self.seed = seed
        if len(branches) < 1:
            raise ShapeError("operator needs at least one branch")
        for branch in branches:
            if len(branch) != len(self.input_shape):
                raise ShapeError("every branch needs one factor per mode")
            shapes = tuple(f.weights.shape for f in branch)
            if shapes != tuple(zip(self.output_shape, self.input_shape)):
                raise ShapeError(
                    f"branch factor shapes {shapes} do not map "
                    f"{self.input_shape} -> {self.output_shape}"
                )

    @property
    def branch_count(self) -> int:
        return len(self.branches)

    @property
    def signal_length(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def measurement_count(self) -> int:
        return int(np.prod(self.output_shape))

    @property
    def measurement_rate(self) -> float:
        return self.measurement_count / self.signal_length

    def apply(self, s: np.ndarray) -> np.ndarray:
        """Sense a signal tensor: returns the measurement tensor ``Y``."""
        return _apply_branches(s, self.branches, self.input_shape, self.output_shape)

    def transpose_apply(self, y: np.ndarray) -> np.ndarray:
        """Apply the exact adjoint ``P^T`` to a measurement tensor.

        Satisfies ``<apply(S), Y> == <S, transpose_apply(Y)>``; equivalently
        each branch's per-mode factors are transposed with no reordering of
        the Kronecker chain under the row-major vec convention.
        """
        y = np.asarray(y, dtype=np.float64)
        if tuple(y.shape) != self.output_shape:
            raise ShapeError(
                f"measurement shape {tuple(y.shape)} does not match operator {self.output_shape}"
            )
        total = np.zeros(self.input_shape)
        for branch in self.branches:
            s = y
            for mode, factor in enumerate(branch, start=1):
                s = mode_product(s, factor.effective().T, mode)
            total += s
        return total

    def materialize(self, cap: int = DEFAULT_CAP) -> np.ndarray:
        """Dense ``m x N`` measurement matrix: the sum of branch Kronecker chains."""
        m, n = self.measurement_count, self.signal_length
        if cap is not None and m * n > cap:
            raise MaterializationError(
                f"operator too large to materialize: {m}x{n} exceeds cap {cap}"
            )
        total = np.zeros((m, n))
        for branch in self.branches:
            block = branch[0].effective()
            for factor in branch[1:]:
                block = kron(block, factor.effective(), cap=cap)
            total += block
        return total

    def param_count(self) -> ParamCount:
        """Learnable parameter count versus the dense equivalent matrix."""
        factorized = sum(f.weights.size for branch in self.branches for f in branch)
        return ParamCount(factorized=factorized, dense_equivalent=self.measurement_count * self.signal_length)


class AdjointOperator:
    """Learnable proxy operator mapping measurements back to signal shape."""

    def __init__(self, branches, input_shape, output_shape, basis_plan=None, seed=None):
        self.branches = branches
        self.input_shape = tuple(int(m) for m in input_shape)  # measurement shape
        self.output_shape = tuple(int(n) for n in output_shape)  # signal shape
        self.basis_plan = basis_plan
        self.seed = seed
        for branch in branches:
            shapes = tuple(f.weights.shape for f in branch)
            if shapes != tuple(zip(self.output_shape, self.input_shape)):
                raise ShapeError(
                    f"adjoint factor shapes {shapes} do not map "
                    f"{self.input_shape} -> {self.output_shape}"
                )

    @property
    def branch_count(self) -> int:
        return len(self.branches)

    def apply(self, y: np.ndarray) -> np.ndarray:
        """Compute the proxy (coarse signal estimate) from a measurement tensor."""
        return _apply_branches(y, self.branches, self.input_shape, self.output_shape)


def normalize_basis_plan(basis_plan, branch_count: int, mode_count: int):
    """Expand a basis plan to the canonical T x J grid of entries.

    ``None`` means identity (no basis) everywhere.  A per-branch integer ``b``
    is shorthand for a block-``b`` DCT on the first two modes and identity on
    any further modes (the usual image layout with a channel mode last).
    """
    if basis_plan is None:
        return [[None] * mode_count for _ in range(branch_count)]
    plan = list(basis_plan)
    if len(plan) != branch_count:
        raise ValueError(f"basis plan has {len(plan)} entries for {branch_count} branches")
    out = []
    for entry in plan:
        if entry is None:
            out.append([None] * mode_count)
        elif np.isscalar(entry):
            spatial = min(2, mode_count)
            row = [int(entry)] * spatial + [None] * (mode_count - spatial)
            out.append(row)
        else:
            row = [None if b is None else int(b) for b in entry]
            if len(row) != mode_count:
                raise ValueError(f"basis plan entry {entry} needs {mode_count} modes")
            out.append(row)
    return out


def build_operator(input_shape, output_shape, branch_count: int, basis_plan=None,
                   rng_seed=0) -> TensorSumOperator:
    """Construct a tensor-sum sensing operator with Gaussian-initialized weights.

    Parameters
    ----------
    input_shape, output_shape : sequence of int
        Per-mode signal lengths ``(n_1, ..., n_J)`` and measurement lengths
        ``(m_1, ..., m_J)`` with ``m_j <= n_j``.
    branch_count : int
        Number of separable branches ``T``.
    basis_plan : optional
        Per-branch fixed-basis assignment; see :func:`normalize_basis_plan`.
    rng_seed
        Seed (or ``numpy.random.Generator``) for the weight draws.  Entries
        of the mode-``j`` weights are i.i.d. Gaussian with variance ``1/n_j``,
        drawn branch-major then mode-minor, so equal seeds give bit-identical
        operators.
    """
    input_shape = tuple(int(n) for n in input_shape)
    output_shape = tuple(int(m) for m in output_shape)
    if len(input_shape) != len(output_shape) or not input_shape:
        raise ShapeError("input and output shapes need the same positive mode count")
    if any(n < 1 for n in input_shape) or any(m < 1 for m in output_shape):
        raise ShapeError("shape entries must be positive")
    if any(m > n for m, n in zip(output_shape, input_shape)):
        raise ShapeError(f"per-mode compression violated: {output_shape} > {input_shape}")
    if branch_count < 1:
        raise ValueError("branch count must be >= 1")
    plan = normalize_basis_plan(basis_plan, branch_count, len(input_shape))
    rng = np.random.default_rng(rng_seed)
    branches = []
    for t in range(branch_count):
        branch = []
        for j, (m, n) in enumerate(zip(output_shape, input_shape)):
            weights = rng.normal(0.0, 1.0 / np.sqrt(n), size=(m, n))
            basis = basis_from_plan_entry(n, plan[t][j])
            branch.append(FactorMatrix(weights=weights, basis=basis))
        branches.append(branch)
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return TensorSumOperator(branches, input_shape, output_shape, basis_plan=plan, seed=seed)


def build_adjoint(op: TensorSumOperator, init: str = "transpose", rng_seed=None) -> AdjointOperator:
    """Create the learnable adjoint paired with a sensing operator.

    ``init="transpose"`` sets each adjoint weight to the transpose of the
    corresponding sensing weight and reuses the sensing bases on the inverse
    side, so the initial proxy equals ``transpose_apply``.  ``init="gaussian"``
    draws i.i.d. weights with per-mode variance ``1/m_j`` from ``rng_seed``.
    """
    if init not in ("transpose", "gaussian"):
        raise ValueError(f"unknown adjoint init {init!r}")
    rng = np.random.default_rng(rng_seed) if init == "gaussian" else None
    branches = []
    for branch in op.branches:
        adj_branch = []
        for factor in branch:
            m, n = factor.weights.shape
            if init == "transpose":
                weights = factor.weights.T.copy()
            else:
                weights = rng.normal(0.0, 1.0 / np.sqrt(m), size=(n, m))
            adj_branch.append(AdjointFactor(weights=weights, basis=factor.basis))
        branches.append(adj_branch)
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return AdjointOperator(branches, op.output_shape, op.input_shape,
                           basis_plan=op.basis_plan, seed=seed)


# ---------------------------------------------------------------------------
# serialization: JSON header + one binary tensor record per weight matrix
# ---------------------------------------------------------------------------

_OP_MAGIC = b"TSCSOP01"


def save_operator(op, path) -> None:
    """Serialize a sensing or adjoint operator; round trips are bit-exact."""
    if isinstance(op, TensorSumOperator):
        kind = "sensing"
    elif isinstance(op, AdjointOperator):
        kind = "adjoint"
    else:
        raise TypeError(f"cannot serialize {type(op).__name__}")
    header = {
        "format": "tscs-operator-v1",
        "kind": kind,
        "input_shape": list(op.input_shape),
        "output_shape": list(op.output_shape),
        "branch_count": op.branch_count,
        "basis_plan": op.basis_plan,
        "seed": None if op.seed is None else int(op.seed),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_OP_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for branch in op.branches:
            for factor in branch:
                fh.write(tensor_to_bytes(factor.weights))


def load_operator(path):
    """Load an operator saved by :func:`save_operator`."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != _OP_MAGIC:
        raise ValueError(f"{path}: not an operator file (bad magic)")
    (json_len,) = struct.unpack_from("<I", buf, 8)
    header = json.loads(buf[12 : 12 + json_len].decode("utf-8"))
    if header.get("format") != "tscs-operator-v1":
        raise ValueError(f"{path}: unsupported operator format {header.get('format')!r}")
    pos = 12 + json_len
    t_count = header["branch_count"]
    in_shape = tuple(header["input_shape"])
    out_shape = tuple(header["output_shape"])
    plan = header["basis_plan"]
    kind = header["kind"]
    mode_count = len(in_shape)
    branches = []
    for t in range(t_count):
        branch = []
        for j in range(mode_count):
            weights, pos = tensor_from_bytes(buf, pos)
            if kind == "sensing":
                basis = basis_from_plan_entry(in_shape[j], plan[t][j])
                branch.append(FactorMatrix(weights=weights, basis=basis))
            else:
                basis = basis_from_plan_entry(out_shape[j], plan[t][j])
                branch.append(AdjointFactor(weights=weights, basis=basis))
        branches.append(branch)
    if pos != len(buf):
        raise ValueError(f"{path}: trailing bytes after operator payload")
    seed = header.get("seed")
    if kind == "sensing":
        return TensorSumOperator(branches, in_shape, out_shape, basis_plan=plan, seed=seed)
    return AdjointOperator(branches, in_shape, out_shape, basis_plan=plan, seed=seed)
