"""Constraint systems, residual measures, step-size bounds and distance oracles.

A feasibility problem asks for ``X`` with ``A * X <= B`` on a set of
inequality row slices and ``A * X = B`` on the remaining equality row
slices, optionally together with entrywise bounds on ``X`` itself.  The
residual of an iterate is the Frobenius norm of the constraint violation,
with inequality rows clipped at zero from below; it vanishes exactly on the
feasible region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import FourierTensor3, Tensor3, bcirc, tprod, unfold

# Entrywise slack used when deciding whether a point satisfies a constraint.
FEASIBILITY_TOL = 1e-12

# Singular values below this fraction of the largest are treated as zero.
RANK_REL_TOL = 1e-10


@dataclass(frozen=True)
class ConstraintPartition:
    """Disjoint split of the ``m`` row indices into inequalities and equalities."""

    m: int
    ineq_rows: tuple[int, ...]
    eq_rows: tuple[int, ...]

    def __post_init__(self):
        ineq = set(self.ineq_rows)
        eq = set(self.eq_rows)
        if len(ineq) != len(self.ineq_rows) or len(eq) != len(self.eq_rows):
            raise ValueError("duplicate row indices in partition")
        if ineq & eq:
            raise ValueError(f"rows {sorted(ineq & eq)} appear in both index sets")
        if ineq | eq != set(range(self.m)):
            raise ValueError(f"partition does not cover rows 0..{self.m - 1}")

    @classmethod
    def all_equalities(cls, m: int) -> "ConstraintPartition":
        return cls(m, (), tuple(range(m)))

    @classmethod
    def all_inequalities(cls, m: int) -> "ConstraintPartition":
        return cls(m, tuple(range(m)), ())

    @classmethod
    def leading_inequalities(cls, m: int, n_ineq: int) -> "ConstraintPartition":
        """Rows ``0..n_ineq-1`` are inequalities, the rest equalities."""
        return cls(m, tuple(range(n_ineq)), tuple(range(n_ineq, m)))

    def ineq_mask(self) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        mask[list(self.ineq_rows)] = True
        return mask


@dataclass(frozen=True)
class RowPaving:
    """Ordered partition of row indices into blocks for block iterations.

    The first ``ineq_block_count`` blocks cover the inequality rows, the
    remaining blocks the equality rows; no block mixes the two kinds.
    """

    blocks: tuple[tuple[int, ...], ...]
    ineq_block_count: int

    def __post_init__(self):
        if not 0 <= self.ineq_block_count <= len(self.blocks):
            raise ValueError("ineq_block_count out of range")
        seen: set[int] = set()
        for blk in self.blocks:
            if not blk:
                raise ValueError("empty block in paving")
            if seen & set(blk):
                raise ValueError("paving blocks are not disjoint")
            seen |= set(blk)

    def __len__(self) -> int:
        return len(self.blocks)

    def validate_against(self, partition: ConstraintPartition) -> None:
        covered = {i for blk in self.blocks for i in blk}
        if covered != set(range(partition.m)):
            raise ValueError("paving does not cover every row exactly once")
        ineq = set(partition.ineq_rows)
        for j, blk in enumerate(self.blocks):
            rows = set(blk)
            if j < self.ineq_block_count and not rows <= ineq:
                raise ValueError(f"inequality block {j} contains equality rows")
            if j >= self.ineq_block_count and rows & ineq:
                raise ValueError(f"equality block {j} contains inequality rows")

    @classmethod
    def consecutive(cls, partition: ConstraintPartition, block_size: int) -> "RowPaving":
        """Blocks of consecutive rows within each constraint kind.

        The final block of each kind is smaller when the size does not
        divide the row count.
        """
        if block_size < 1:
            raise ValueError("block size must be positive")

        def chunks(rows: tuple[int, ...]) -> list[tuple[int, ...]]:
            return [rows[i : i + block_size] for i in range(0, len(rows), block_size)]

        ineq_blocks = chunks(partition.ineq_rows)
        eq_blocks = chunks(partition.eq_rows)
        return cls(tuple(ineq_blocks + eq_blocks), len(ineq_blocks))


@dataclass(eq=False)
class FeasibilityProblem:
    """Operator tensor, right-hand side, row partition and optional extras.

    ``op`` is ``m x l x n`` and ``rhs`` is ``m x p x n``; iterates live in
    ``l x p x n``.  Matrix problems use ``n == 1`` and may carry a row
    paving for block iterations.  Bound tensors constrain the iterate
    entrywise.  Row slices of ``op`` must have positive Frobenius norm,
    otherwise the sampling probabilities and updates are undefined.
    """

    op: Tensor3
    rhs: Tensor3
    partition: ConstraintPartition
    paving: RowPaving | None = None
    upper_bound: Tensor3 | None = None
    lower_bound: Tensor3 | None = None
    row_sq_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m, l, n = self.op.dims
        mb, p, nb = self.rhs.dims
        if mb != m or nb != n:
            raise ValueError(
                f"rhs dims {self.rhs.dims} incompatible with operator dims {self.op.dims}"
            )
        if self.partition.m != m:
            raise ValueError(f"partition covers {self.partition.m} rows, operator has {m}")
        sq = np.sum(self.op.data**2, axis=(1, 2))
        zero = np.flatnonzero(sq == 0.0)
        if zero.size:
            raise ValueError(f"row slice {int(zero[0])} has zero Frobenius norm")
        self.row_sq_norms = sq
        if self.paving is not None:
            if n != 1:
                raise ValueError("row pavings are only supported for matrix problems (n == 1)")
            self.paving.validate_against(self.partition)
        for name, bound in (("upper_bound", self.upper_bound), ("lower_bound", self.lower_bound)):
            if bound is not None and bound.dims != (l, p, n):
                raise ValueError(f"{name} dims {bound.dims} do not match iterate dims ({l}, {p}, {n})")

    @property
    def m(self) -> int:
        return self.op.dims[0]

    @property
    def l(self) -> int:
        return self.op.dims[1]

    @property
    def n(self) -> int:
        return self.op.dims[2]

    @property
    def p(self) -> int:
        return self.rhs.dims[1]

    @property
    def is_matrix(self) -> bool:
        return self.n == 1

    @property
    def has_bounds(self) -> bool:
        return self.upper_bound is not None or self.lower_bound is not None

    def total_sq_norm(self) -> float:
        return float(self.row_sq_norms.sum())

    def block_sq_norms(self) -> np.ndarray:
        if self.paving is None:
            raise ValueError("problem has no row paving")
        return np.array([self.row_sq_norms[list(blk)].sum() for blk in self.paving.blocks])

    def iterate_dims(self) -> tuple[int, int, int]:
        return (self.l, self.p, self.n)


def clipped_violation(problem: FeasibilityProblem, x: Tensor3) -> np.ndarray:
    """``A * X - B`` with inequality row slices clipped at zero from below."""
    if x.dims != problem.iterate_dims():
        raise ValueError(f"iterate dims {x.dims} do not match {problem.iterate_dims()}")
    r = tprod(problem.op, x).data - problem.rhs.data
    mask = problem.partition.ineq_mask()
    if mask.any():
        r[mask] = np.maximum(r[mask], 0.0)
    return r


def residual_matrix(problem: FeasibilityProblem, x: Tensor3) -> float:
    """Frobenius norm of the clipped violation of a matrix problem."""
    if not problem.is_matrix:
        raise ValueError("residual_matrix requires a matrix problem (n == 1)")
    if problem.has_bounds:
        raise ValueError("residual_matrix does not cover bound constraints")
    return float(np.linalg.norm(clipped_violation(problem, x).ravel()))


def residual_tensor(problem: FeasibilityProblem, x: Tensor3) -> float:
    """Frobenius norm of the clipped violation of a tensor problem.

    Coincides exactly with :func:`residual_matrix` when ``n == 1``.
    """
    if problem.has_bounds:
        raise ValueError("residual_tensor does not cover bound constraints")
    return float(np.linalg.norm(clipped_violation(problem, x).ravel()))


def residual_eq_bound(problem: FeasibilityProblem, x: Tensor3) -> float:
    """Residual of an equality system with entrywise bounds on the iterate.

    The square root of the squared equality violation plus the squared
    bound violations; zero exactly on the feasible region.
    """
    if problem.partition.ineq_rows:
        raise ValueError("residual_eq_bound requires an equality-only partition")
    if not problem.has_bounds:
        raise ValueError("residual_eq_bound requires at least one bound tensor")
    if x.dims != problem.iterate_dims():
        raise ValueError(f"iterate dims {x.dims} do not match {problem.iterate_dims()}")
    r = tprod(problem.op, x).data - problem.rhs.data
    total = float(np.sum(r * r))
    if problem.upper_bound is not None:
        over = np.maximum(x.data - problem.upper_bound.data, 0.0)
        total += float(np.sum(over * over))
    if problem.lower_bound is not None:
        under = np.maximum(problem.lower_bound.data - x.data, 0.0)
        total += float(np.sum(under * under))
    return math.sqrt(total)


def default_residual(problem: FeasibilityProblem):
    """The residual function matching the problem's structure."""
    if problem.has_bounds:
        return residual_eq_bound
    return residual_tensor


def max_violation(problem: FeasibilityProblem, x: Tensor3) -> float:
    """Largest entrywise constraint violation, including bounds."""
    r = tprod(problem.op, x).data - problem.rhs.data
    mask = problem.partition.ineq_mask()
    worst = 0.0
    if mask.any():
        worst = max(worst, float(np.max(np.maximum(r[mask], 0.0), initial=0.0)))
    if (~mask).any():
        worst = max(worst, float(np.max(np.abs(r[~mask]), initial=0.0)))
    if problem.upper_bound is not None:
        worst = max(worst, float(np.max(x.data - problem.upper_bound.data, initial=0.0)))
    if problem.lower_bound is not None:
        worst = max(worst, float(np.max(problem.lower_bound.data - x.data, initial=0.0)))
    return worst


def is_feasible(problem: FeasibilityProblem, x: Tensor3, tol: float = FEASIBILITY_TOL) -> bool:
    return max_violation(problem, x) <= tol


@dataclass(frozen=True)
class StepBounds:
    """Strict upper limits on the solvers' step sizes.

    ``per_row[i] = 2 ||A_i||_F^2 / max_j ||(A_hat_i)_j||_F^2`` always lies
    in ``[2/n, 2]``: the low end is hit when a single Fourier frontal slice
    of the row carries all its energy (constant tubes), the high end when
    the Fourier slice norms are flat across frequencies.  Block iterations
    on matrix problems use the constant limit 2.
    """

    per_row: np.ndarray
    per_block: np.ndarray | None = None


def step_bounds(a_hat: FourierTensor3) -> StepBounds:
    """Per-row step-size limits read off the tube-wise DFT of the operator."""
    m, _, n = a_hat.dims
    freq_sq = np.sum(a_hat.data.real**2 + a_hat.data.imag**2, axis=1)  # (m, n)
    peak = freq_sq.max(axis=1)
    zero = np.flatnonzero(peak == 0.0)
    if zero.size:
        raise ValueError(f"row slice {int(zero[0])} has zero Frobenius norm")
    # ||A_i||_F^2 equals the mean of the Fourier slice norms over frequencies.
    row_sq = freq_sq.sum(axis=1) / n
    bounds = 2.0 * row_sq / peak
    if np.any(bounds < 2.0 / n - 1e-12) or np.any(bounds > 2.0 + 1e-12):
        raise ArithmeticError("step-size bounds escaped their [2/n, 2] range")
    return StepBounds(per_row=bounds)


def hoffman_equality(a: Tensor3, rank_rel_tol: float = RANK_REL_TOL) -> float:
    """Error-bound constant of a consistent equality system.

    The distance of any point to the solution set is at most this constant
    times the residual; for equality systems it is the reciprocal of the
    smallest nonzero singular value of the block-circulant matrix.
    """
    s = np.linalg.svd(bcirc(a), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("operator is zero; no error-bound constant exists")
    kept = s[s > rank_rel_tol * s[0]]
    return 1.0 / float(kept[-1])


def distance_oracle_equality(
    problem: FeasibilityProblem, x: Tensor3, rank_rel_tol: float = RANK_REL_TOL
) -> float:
    """Exact distance of ``x`` to the solution set of an equality system.

    Unfolds to the block-circulant matrix system and applies the least-norm
    correction through an SVD with relative rank tolerance
    ``rank_rel_tol``.  Raises if the system turns out inconsistent (the
    corrected point still violates the equations).
    """
    if problem.partition.ineq_rows:
        raise ValueError("distance oracle requires an equality-only partition")
    if problem.has_bounds:
        raise ValueError("distance oracle does not cover bound constraints")
    if x.dims != problem.iterate_dims():
        raise ValueError(f"iterate dims {x.dims} do not match {problem.iterate_dims()}")
    mat = bcirc(problem.op)
    rhs = unfold(problem.rhs)
    u0 = unfold(x)
    r = mat @ u0 - rhs
    bu, s, vt = np.linalg.svd(mat, full_matrices=False)
    keep = s > rank_rel_tol * s[0]
    delta = vt[keep].T @ ((bu[:, keep].T @ r) / s[keep, None])
    proj_res = np.linalg.norm(mat @ (u0 - delta) - rhs)
    if proj_res > 1e-8 * (1.0 + np.linalg.norm(rhs)):
        raise ValueError(
            f"equality system appears inconsistent: projected residual {proj_res:.3e}"
        )
    return float(np.linalg.norm(delta))
