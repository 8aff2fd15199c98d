"""Randomized Kaczmarz iterations for matrix and tensor feasibility problems.

Three solvers share one skeleton: sample a row slice (or a row block) with
probability proportional to its squared Frobenius norm, project the iterate
toward the sampled constraint with a step size, and log the residual every
``log_stride`` iterations.

* :func:`bmrk_solve` - block iteration for matrix problems with a row
  paving; inequality blocks only correct the entries that violate them.
* :func:`trkl_solve` - tensor iteration for mixed equality/inequality row
  slices under the t-product.
* :func:`trklb_solve` - tensor iteration for equality row slices plus
  entrywise bounds, enforced exactly by min/max clipping after every step.

Randomness comes from a seeded numpy ``PCG64`` generator and every
categorical draw consumes exactly one uniform variate (inverse-CDF
sampling), so a run is reproducible bit for bit given its configuration.
Per-row Fourier data of the operator is computed once up front; each tensor
step then works in the Fourier domain of the sampled row slice only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .feasibility import (
    FeasibilityProblem,
    residual_eq_bound,
    residual_matrix,
    residual_tensor,
    step_bounds,
)
from .tensor import Tensor3, dft_tubes, real_part_checked, t_transpose, tprod

# Step-coefficient defaults: alpha scales each row's theoretical limit,
# t = alpha * bound / 2, so alpha < 2 keeps every step strictly admissible.
DEFAULT_ALPHA_TENSOR = 1.8
DEFAULT_ALPHA_BLOCK = 1.0


class SamplingWeights:
    """Categorical distribution over rows or blocks, sampled by inverse CDF."""

    __slots__ = ("weights", "cdf")

    def __init__(self, sq_norms):
        w = np.asarray(sq_norms, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        w = w / w.sum()
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights do not sum to one")
        self.weights = w
        self.cdf = np.cumsum(w)

    def __len__(self) -> int:
        return self.weights.size


def sample_index(weights: SamplingWeights, rng: np.random.Generator) -> int:
    """One categorical draw from one uniform variate."""
    u = rng.random()
    idx = int(np.searchsorted(weights.cdf, u, side="right"))
    return min(idx, len(weights) - 1)


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budget, stopping rule, seed and step-size policy.

    ``residual_tol = 0`` disables early stopping (run exactly
    ``max_iters``).  The step sizes come either from ``steps`` (explicit
    per-row or per-block values) or from the coefficient ``alpha`` applied
    as ``t = alpha * bound / 2``; supplying both is an error, supplying
    neither picks the solver's default coefficient.
    """

    max_iters: int
    residual_tol: float = 0.0
    seed: int = 0
    log_stride: int = 10
    alpha: float | None = None
    steps: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.residual_tol < 0.0:
            raise ValueError("residual_tol must be nonnegative")
        if self.log_stride < 1:
            raise ValueError("log_stride must be positive")
        if self.alpha is not None and self.steps is not None:
            raise ValueError("supply either alpha or explicit steps, not both")
        if self.steps is not None:
            object.__setattr__(self, "steps", tuple(float(t) for t in self.steps))


@dataclass
class RunTrace:
    """Logged (iteration, elapsed_seconds, residual) rows plus metadata."""

    rows: list[tuple[int, float, float]]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.rows or self.rows[0][0] != 0:
            raise ValueError("trace must start at iteration 0")
        its = [r[0] for r in self.rows]
        if any(b <= a for a, b in zip(its, its[1:])):
            raise ValueError("trace iterations must be strictly increasing")

    def iterations(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows], dtype=np.int64)

    def residuals(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows], dtype=np.float64)

    def final_residual(self) -> float:
        return self.rows[-1][2]


def _resolve_steps(bounds: np.ndarray, config: SolverConfig, default_alpha: float):
    """Per-index step sizes plus the indices where t >= bound (flagged, not fatal)."""
    if config.steps is not None:
        t = np.asarray(config.steps, dtype=np.float64)
        if t.shape != bounds.shape:
            raise ValueError(f"expected {bounds.size} step sizes, got {t.size}")
        if np.any(t <= 0.0):
            raise ValueError("step sizes must be positive")
    else:
        alpha = config.alpha if config.alpha is not None else default_alpha
        if alpha <= 0.0:
            raise ValueError("step coefficient must be positive")
        t = alpha * bounds / 2.0
    violated = np.flatnonzero(t >= bounds)
    return t, violated


def _format_steps(t: np.ndarray) -> str:
    return ",".join(f"{v:.17g}" for v in t)


def _base_metadata(
    solver: str,
    problem: FeasibilityProblem,
    config: SolverConfig,
    t: np.ndarray,
    violated: np.ndarray,
) -> dict[str, str]:
    meta = {
        "solver": solver,
        "op_dims": "x".join(str(d) for d in problem.op.dims),
        "rhs_dims": "x".join(str(d) for d in problem.rhs.dims),
        "seed": str(config.seed),
        "max_iters": str(config.max_iters),
        "log_stride": str(config.log_stride),
        "residual_tol": f"{config.residual_tol:g}",
        "step_mode": "explicit" if config.steps is not None else "alpha",
        "steps": _format_steps(t),
    }
    if config.steps is None:
        alpha = config.alpha
        if alpha is None:
            alpha = DEFAULT_ALPHA_BLOCK if solver == "bmrk" else DEFAULT_ALPHA_TENSOR
        meta["alpha"] = f"{alpha:g}"
    if violated.size:
        meta["step_warning"] = (
            "step size meets or exceeds its bound for indices "
            + ",".join(str(int(i)) for i in violated[:20])
            + ("..." if violated.size > 20 else "")
        )
    return meta


def _run_loop(x, config, weights, step_fn, residual_fn, wrap, metadata, on_log):
    """Shared sampling / stepping / logging loop.

    ``step_fn(x, idx)`` returns the next iterate in the same layout as
    ``x``; ``wrap`` converts that layout back to a :class:`Tensor3`.
    Residuals are evaluated only at log points (iteration 0, every
    ``log_stride``-th iteration and the final one), and early stopping is
    checked there too.
    """
    rng = np.random.default_rng(config.seed)
    rows: list[tuple[int, float, float]] = []
    start = time.perf_counter()

    res = residual_fn(wrap(x))
    rows.append((0, time.perf_counter() - start, res))
    if on_log is not None:
        on_log(0, wrap(np.array(x, copy=True)))
    stop = config.residual_tol > 0.0 and res <= config.residual_tol

    last_iter = 0
    if not stop:
        for k in range(1, config.max_iters + 1):
            idx = sample_index(weights, rng)
            x = step_fn(x, idx)
            if k % config.log_stride == 0 or k == config.max_iters:
                res = residual_fn(wrap(x))
                rows.append((k, time.perf_counter() - start, res))
                if on_log is not None:
                    on_log(k, wrap(np.array(x, copy=True)))
                last_iter = k
                if config.residual_tol > 0.0 and res <= config.residual_tol:
                    break

    metadata = dict(metadata)
    metadata["iterations_run"] = str(last_iter)
    return wrap(x), RunTrace(rows=rows, metadata=metadata)


# ---------------------------------------------------------------------------
# Single-step updates (public, one sampled constraint at a time)
# ---------------------------------------------------------------------------


def bmrk_step(problem: FeasibilityProblem, x: Tensor3, block_index: int, step_size: float) -> Tensor3:
    """One block update ``X - t * A_blk^T c(A_blk X - B_blk) / ||A_blk||_F^2``.

    ``c`` clips at zero from below for inequality blocks and is the
    identity for equality blocks; a satisfied inequality block therefore
    leaves the iterate unchanged.
    """
    if problem.paving is None or not problem.is_matrix:
        raise ValueError("bmrk_step requires a matrix problem with a row paving")
    if not 0 <= block_index < len(problem.paving):
        raise IndexError(f"block {block_index} out of range")
    rows = list(problem.paving.blocks[block_index])
    a_blk = problem.op.data[rows, :, 0]
    b_blk = problem.rhs.data[rows, :, 0]
    r = a_blk @ x.data[:, :, 0] - b_blk
    if block_index < problem.paving.ineq_block_count:
        r = np.maximum(r, 0.0)
    sq = float(np.sum(a_blk * a_blk))
    new = x.data[:, :, 0] - (step_size / sq) * (a_blk.T @ r)
    return Tensor3(new[:, :, None])


def trkl_step(problem: FeasibilityProblem, x: Tensor3, row_index: int, step_size: float) -> Tensor3:
    """One row-slice update under the t-product.

    ``X - t * A_i^T * c(A_i * X - B_i) / ||A_i||_F^2`` with the violation
    clipped at zero for inequality rows.  At ``n == 1`` this reduces
    exactly to :func:`bmrk_step` on a singleton block.
    """
    if not 0 <= row_index < problem.m:
        raise IndexError(f"row {row_index} out of range")
    row = problem.op.row_slice(row_index)
    r = tprod(row, x).data - problem.rhs.data[row_index : row_index + 1]
    if row_index in problem.partition.ineq_rows:
        r = np.maximum(r, 0.0)
    sq = float(np.sum(problem.op.data[row_index] ** 2))
    upd = tprod(t_transpose(row), Tensor3(r, copy=False))
    return Tensor3(x.data - (step_size / sq) * upd.data)


def trklb_step(problem: FeasibilityProblem, x: Tensor3, row_index: int, step_size: float) -> Tensor3:
    """Equality row-slice update followed by exact clipping to the bounds."""
    if problem.partition.ineq_rows:
        raise ValueError("trklb_step requires an equality-only partition")
    if not problem.has_bounds:
        raise ValueError("trklb_step requires at least one bound tensor")
    if not 0 <= row_index < problem.m:
        raise IndexError(f"row {row_index} out of range")
    row = problem.op.row_slice(row_index)
    r = tprod(row, x).data - problem.rhs.data[row_index : row_index + 1]
    sq = float(np.sum(problem.op.data[row_index] ** 2))
    upd = tprod(t_transpose(row), Tensor3(r, copy=False))
    z = x.data - (step_size / sq) * upd.data
    if problem.upper_bound is not None:
        np.minimum(z, problem.upper_bound.data, out=z)
    if problem.lower_bound is not None:
        np.maximum(z, problem.lower_bound.data, out=z)
    return Tensor3(z, copy=False)


# ---------------------------------------------------------------------------
# Full solver loops
# ---------------------------------------------------------------------------


def bmrk_solve(problem: FeasibilityProblem, x0: Tensor3, config: SolverConfig, on_log=None):
    """Block randomized iteration on a paved matrix problem.

    Returns ``(final iterate, trace)``.  ``on_log(iteration, x)`` is
    invoked with a copy of the iterate at every log point.
    """
    if problem.paving is None or not problem.is_matrix:
        raise ValueError("bmrk_solve requires a matrix problem with a row paving")
    if x0.dims != problem.iterate_dims():
        raise ValueError(f"x0 dims {x0.dims} do not match {problem.iterate_dims()}")

    paving = problem.paving
    sub_a = [np.ascontiguousarray(problem.op.data[list(b), :, 0]) for b in paving.blocks]
    sub_b = [np.ascontiguousarray(problem.rhs.data[list(b), :, 0]) for b in paving.blocks]
    block_sq = np.array([float(np.sum(a * a)) for a in sub_a])
    bounds = np.full(len(paving), 2.0)
    t, violated = _resolve_steps(bounds, config, DEFAULT_ALPHA_BLOCK)
    coeff = t / block_sq
    n_ineq_blocks = paving.ineq_block_count

    def step(x2, j):
        r = sub_a[j] @ x2 - sub_b[j]
        if j < n_ineq_blocks:
            np.maximum(r, 0.0, out=r)
        return x2 - coeff[j] * (sub_a[j].T @ r)

    meta = _base_metadata("bmrk", problem, config, t, violated)
    meta["blocks"] = str(len(paving))
    return _run_loop(
        np.array(x0.data[:, :, 0], copy=True),
        config,
        SamplingWeights(block_sq),
        step,
        lambda xt: residual_matrix(problem, xt),
        lambda x2: Tensor3(x2[:, :, None]),
        meta,
        on_log,
    )


def _tensor_row_kernel(problem: FeasibilityProblem, coeff: np.ndarray):
    """Per-iteration row update working on the sampled row's Fourier data."""
    b = problem.rhs.data
    ineq = problem.partition.ineq_mask()
    n = problem.n
    if n == 1:
        a2 = problem.op.data[:, :, 0]
        b2 = b[:, :, 0]

        def step(x, i):
            r = a2[i : i + 1] @ x[:, :, 0] - b2[i : i + 1]
            if ineq[i]:
                np.maximum(r, 0.0, out=r)
            return x - (coeff[i] * (a2[i : i + 1].T @ r))[:, :, None]

        return step

    a_hat = dft_tubes(problem.op).data

    def step(x, i):
        x_hat = np.fft.fft(x, axis=2)
        y_hat = np.einsum("lj,lpj->pj", a_hat[i], x_hat)
        r = real_part_checked(np.fft.ifft(y_hat, axis=-1), "row product") - b[i]
        if ineq[i]:
            np.maximum(r, 0.0, out=r)
        r_hat = np.fft.fft(r, axis=-1)
        u_hat = a_hat[i].conj()[:, None, :] * r_hat[None, :, :]
        u = real_part_checked(np.fft.ifft(u_hat, axis=2), "row update")
        return x - coeff[i] * u

    return step


def trkl_solve(problem: FeasibilityProblem, x0: Tensor3, config: SolverConfig, on_log=None):
    """Row-slice randomized iteration for mixed tensor constraints."""
    if problem.has_bounds:
        raise ValueError("trkl_solve does not handle bound constraints; use trklb_solve")
    if x0.dims != problem.iterate_dims():
        raise ValueError(f"x0 dims {x0.dims} do not match {problem.iterate_dims()}")
    bounds = step_bounds(dft_tubes(problem.op)).per_row
    t, violated = _resolve_steps(bounds, config, DEFAULT_ALPHA_TENSOR)
    coeff = t / problem.row_sq_norms
    meta = _base_metadata("trkl", problem, config, t, violated)
    return _run_loop(
        np.array(x0.data, copy=True),
        config,
        SamplingWeights(problem.row_sq_norms),
        _tensor_row_kernel(problem, coeff),
        lambda xt: residual_tensor(problem, xt),
        lambda x: Tensor3(x, copy=False),
        meta,
        on_log,
    )


def trklb_solve(problem: FeasibilityProblem, x0: Tensor3, config: SolverConfig, on_log=None):
    """Equality iteration with exact bound clipping after every step.

    The start iterate is clipped to the bounds before iteration 0, so every
    logged iterate satisfies them exactly.
    """
    if problem.partition.ineq_rows:
        raise ValueError("trklb_solve requires an equality-only partition")
    if not problem.has_bounds:
        raise ValueError("trklb_solve requires at least one bound tensor")
    if x0.dims != problem.iterate_dims():
        raise ValueError(f"x0 dims {x0.dims} do not match {problem.iterate_dims()}")

    bounds = step_bounds(dft_tubes(problem.op)).per_row
    t, violated = _resolve_steps(bounds, config, DEFAULT_ALPHA_TENSOR)
    coeff = t / problem.row_sq_norms
    eq_step = _tensor_row_kernel(problem, coeff)
    ub = None if problem.upper_bound is None else problem.upper_bound.data
    lb = None if problem.lower_bound is None else problem.lower_bound.data

    def clip(x):
        if ub is not None:
            np.minimum(x, ub, out=x)
        if lb is not None:
            np.maximum(x, lb, out=x)
        return x

    def step(x, i):
        return clip(eq_step(x, i))

    meta = _base_metadata("trklb", problem, config, t, violated)
    return _run_loop(
        clip(np.array(x0.data, copy=True)),
        config,
        SamplingWeights(problem.row_sq_norms),
        step,
        lambda xt: residual_eq_bound(problem, xt),
        lambda x: Tensor3(x, copy=False),
        meta,
        on_log,
    )
