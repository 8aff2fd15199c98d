"""Seeded construction of benchmark feasibility problems.

Every generator is a pure function of its arguments and seed, and每 builds a
problem whose feasible region is nonempty by construction; the witness that
certifies this is returned alongside the problem and its residual is
asserted to vanish before the problem is handed out.

Families:

* ``matrix_gaussian``  - dense Gaussian matrix system, mixed constraints,
  consecutive row paving for block iterations.
* ``classification``   - halfspace system from random linearly separable
  binary labels.
* ``tensor_gaussian``  - Gaussian tensor system under the t-product.
* ``eq_bound``         - Gaussian tensor equality system with an entrywise
  upper bound on the variables.
* ``deblur``           - separable Gaussian blur of an image stack, either
  as an equality system with nonnegativity (exact observation) or as an
  interval inequality system (noisy observation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feasibility import (
    ConstraintPartition,
    FeasibilityProblem,
    RowPaving,
    residual_eq_bound,
    residual_matrix,
    residual_tensor,
)
from .tensor import Tensor3, t_identity, tprod

# Rows of a classification system whose margin falls below this are
# redrawn, so the scaled weight vector stays strictly feasible.
CLASSIFICATION_MARGIN = 1e-4

# Witness residuals are asserted below these levels at generation time.
WITNESS_TOL_MATRIX = 1e-12
WITNESS_TOL_TENSOR = 1e-10


@dataclass(frozen=True)
class GenSpec:
    """Family name plus the sizes, counts and knobs the family needs."""

    family: str
    seed: int = 0
    m_eq: int = 0
    m_ineq: int = 0
    m: int = 0
    l: int = 0
    p: int = 1
    n: int = 1
    block_size: int | None = None
    height: int = 0
    width: int = 0
    frames: int = 1
    kernel_size: int = 5
    kernel_sigma: float = 2.0
    noisy: bool = False
    epsilon: float = 0.2

    FAMILIES = ("matrix_gaussian", "classification", "tensor_gaussian", "eq_bound", "deblur")

    def __post_init__(self):
        if self.family not in self.FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {self.FAMILIES}")


def generate(spec: GenSpec) -> tuple[FeasibilityProblem, Tensor3]:
    """Dispatch a :class:`GenSpec` to its family generator."""
    if spec.family == "matrix_gaussian":
        return gen_matrix_gaussian(
            spec.m_eq, spec.m_ineq, spec.l, spec.p, seed=spec.seed, block_size=spec.block_size
        )
    if spec.family == "classification":
        return gen_classification(spec.m, spec.l, seed=spec.seed, block_size=spec.block_size)
    if spec.family == "tensor_gaussian":
        return gen_tensor_gaussian(spec.m_eq, spec.m_ineq, spec.l, spec.p, spec.n, seed=spec.seed)
    if spec.family == "eq_bound":
        return gen_eq_bound(spec.m, spec.l, spec.p, spec.n, seed=spec.seed)
    stack = gen_phantom_stack(spec.height, spec.width, spec.frames)
    kernel = gaussian_kernel(spec.kernel_size, spec.kernel_sigma)
    problem = gen_deblur_problem(stack, kernel, noisy=spec.noisy, epsilon=spec.epsilon, seed=spec.seed)
    return problem, stack


def gen_matrix_gaussian(
    m_eq: int, m_ineq: int, l: int, p: int, seed: int = 0, block_size: int | None = None
) -> tuple[FeasibilityProblem, Tensor3]:
    """Gaussian matrix system with the inequality rows listed first.

    ``B = A X*`` with the inequality rows of ``B`` shifted up entrywise by
    the absolute value of standard normals, so ``X*`` stays feasible.  When
    ``block_size`` is given, a paving of consecutive rows within each
    constraint kind is attached (final block of a kind may be smaller).
    """
    m = m_eq + m_ineq
    if m < 1 or l < 1 or p < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, l))
    x_star = rng.standard_normal((l, p))
    b = a @ x_star
    if m_ineq:
        b[:m_ineq] += np.abs(rng.standard_normal((m_ineq, p)))
    partition = ConstraintPartition.leading_inequalities(m, m_ineq)
    paving = None if block_size is None else RowPaving.consecutive(partition, block_size)
    problem = FeasibilityProblem(Tensor3.from_matrix(a), Tensor3.from_matrix(b), partition, paving)
    witness = Tensor3.from_matrix(x_star)
    assert residual_matrix(problem, witness) <= WITNESS_TOL_MATRIX
    return problem, witness


def gen_classification(
    m: int, n_features: int, seed: int = 0, block_size: int | None = None
) -> tuple[FeasibilityProblem, Tensor3]:
    """Halfspace system ``-diag(y) X_D w <= -1e-5`` from separable labels.

    Labels are the signs of ``X_D w*`` for Gaussian data and weights; data
    rows whose margin ``|X_D(i,:) w*|`` falls below ``1e-4`` are redrawn so
    the weight vector itself is a strictly feasible witness.
    """
    if m < 1 or n_features < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    x_data = rng.standard_normal((m, n_features))
    w = rng.standard_normal(n_features)
    margins = x_data @ w
    while True:
        weak = np.flatnonzero(np.abs(margins) < CLASSIFICATION_MARGIN)
        if weak.size == 0:
            break
        x_data[weak] = rng.standard_normal((weak.size, n_features))
        margins[weak] = x_data[weak] @ w
    y = np.sign(margins)
    a = -y[:, None] * x_data
    b = np.full((m, 1), -1e-5)
    partition = ConstraintPartition.all_inequalities(m)
    paving = None if block_size is None else RowPaving.consecutive(partition, block_size)
    problem = FeasibilityProblem(Tensor3.from_matrix(a), Tensor3.from_matrix(b), partition, paving)
    witness = Tensor3.from_matrix(w[:, None])
    assert residual_matrix(problem, witness) <= WITNESS_TOL_MATRIX
    return problem, witness


def gen_tensor_gaussian(
    m_eq: int, m_ineq: int, l: int, p: int, n: int, seed: int = 0
) -> tuple[FeasibilityProblem, Tensor3]:
    """Tensor analogue of :func:`gen_matrix_gaussian` under the t-product."""
    m = m_eq + m_ineq
    if m < 1 or l < 1 or p < 1 or n < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    a = Tensor3(rng.standard_normal((m, l, n)), copy=False)
    x_star = Tensor3(rng.standard_normal((l, p, n)), copy=False)
    b = tprod(a, x_star)
    if m_ineq:
        b.data[:m_ineq] += np.abs(rng.standard_normal((m_ineq, p, n)))
    partition = ConstraintPartition.leading_inequalities(m, m_ineq)
    problem = FeasibilityProblem(a, b, partition)
    assert residual_tensor(problem, x_star) <= WITNESS_TOL_TENSOR
    return problem, x_star


def gen_eq_bound(m: int, l: int, p: int, n: int, seed: int = 0) -> tuple[FeasibilityProblem, Tensor3]:
    """Tensor equality system with an entrywise upper bound ``X* + |noise|``."""
    if m < 1 or l < 1 or p < 1 or n < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    a = Tensor3(rng.standard_normal((m, l, n)), copy=False)
    x_star = Tensor3(rng.standard_normal((l, p, n)), copy=False)
    b = tprod(a, x_star)
    upper = Tensor3(x_star.data + np.abs(rng.standard_normal((l, p, n))), copy=False)
    problem = FeasibilityProblem(a, b, ConstraintPartition.all_equalities(m), upper_bound=upper)
    assert residual_eq_bound(problem, x_star) <= WITNESS_TOL_TENSOR
    return problem, x_star


def mixed_form(problem: FeasibilityProblem) -> FeasibilityProblem:
    """Rewrite an equality-plus-bounds problem as mixed rows for TRK-L.

    Appends identity row slices ``X <= upper`` and/or ``-X <= -lower``
    below the equality rows.  The residual of the mixed system equals the
    bound-aware residual of the original problem at every point.
    """
    if problem.partition.ineq_rows or not problem.has_bounds:
        raise ValueError("mixed_form expects an equality-only problem with bounds")
    l, p, n = problem.iterate_dims()
    ident = t_identity(l, n)
    ops = [problem.op.data]
    rhs = [problem.rhs.data]
    if problem.upper_bound is not None:
        ops.append(ident.data)
        rhs.append(problem.upper_bound.data)
    if problem.lower_bound is not None:
        ops.append(-ident.data)
        rhs.append(-problem.lower_bound.data)
    op = np.concatenate(ops, axis=0)
    m = problem.m
    partition = ConstraintPartition(op.shape[0], tuple(range(m, op.shape[0])), tuple(range(m)))
    return FeasibilityProblem(Tensor3(op, copy=False), Tensor3(np.concatenate(rhs, axis=0), copy=False), partition)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Odd-length 1-d Gaussian taps normalized to sum 1."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.arange(size) - size // 2
    g = np.exp(-(d.astype(np.float64) ** 2) / (2.0 * sigma**2))
    return g / g.sum()


def build_blur_operator(height: int, width: int, kernel: np.ndarray) -> Tensor3:
    """Separable 2-d blur as a t-product operator of dims ``height x height x width``.

    Vertical blur is a banded Toeplitz matrix with zero boundary; horizontal
    blur is circular, carried by the tube (width) dimension, where the taps
    are placed circulantly: offset 0 at tube 0, offset +d at tube d and
    offset -d at tube width-d.  Applying the operator to a stack whose
    lateral slices are height-by-width images blurs each frame.
    """
    g = np.asarray(kernel, dtype=np.float64)
    if g.ndim != 1 or g.size % 2 == 0:
        raise ValueError("kernel must be a 1-d array of odd length")
    radius = g.size // 2
    if g.size > min(height, width):
        raise ValueError(f"kernel of size {g.size} too large for {height}x{width} images")
    toeplitz = np.zeros((height, height))
    for off in range(-radius, radius + 1):
        idx = np.arange(max(0, -off), height - max(0, off))
        toeplitz[idx + max(0, off), idx + max(0, -off)] = g[radius + off] if off >= 0 else g[radius + off]
    wrap = np.zeros(width)
    wrap[0] = g[radius]
    for d in range(1, radius + 1):
        wrap[d] = g[radius + d]
        wrap[width - d] = g[radius - d]
    return Tensor3(toeplitz[:, :, None] * wrap[None, None, :])


def gen_phantom_stack(height: int, width: int, frames: int) -> Tensor3:
    """Deterministic grayscale test stack of nested shapes, entries in [0, 255].

    Lateral slice ``stack[:, q, :]`` is frame ``q`` as a height-by-width
    image; intensities and the small ellipse position vary per frame.
    """
    if height < 1 or width < 1 or frames < 1:
        raise ValueError("dimensions must be positive")
    yy = (np.arange(height) - (height - 1) / 2.0) / (height / 2.0)
    xx = (np.arange(width) - (width - 1) / 2.0) / (width / 2.0)
    yg, xg = np.meshgrid(yy, xx, indexing="ij")
    stack = np.zeros((height, frames, width))
    for q in range(frames):
        img = np.zeros((height, width))
        outer = (yg / 0.92) ** 2 + (xg / 0.82) ** 2 <= 1.0
        img[outer] = 64.0 + 12.0 * (q % 5)
        band = (np.abs(yg) <= 0.48) & (np.abs(xg) <= 0.30)
        img[band] = 148.0 + 9.0 * (q % 6)
        drift = -0.40 + 0.80 * (q / max(frames - 1, 1))
        blob = ((yg - 0.15) / 0.18) ** 2 + ((xg - drift) / 0.14) ** 2 <= 1.0
        img[blob] = 232.0
        stack[:, q, :] = img
    return Tensor3(stack, copy=False)


def gen_deblur_problem(
    image_stack: Tensor3,
    kernel: np.ndarray,
    noisy: bool = False,
    epsilon: float = 0.2,
    seed: int = 0,
) -> FeasibilityProblem:
    """Deblurring system whose ground truth is ``image_stack``.

    Exact mode: equality system ``A * X = blur(stack)`` with a zero lower
    bound (nonnegative pixels).  Noisy mode: the observation is perturbed
    by uniform noise on ``[-epsilon, epsilon]`` and the system becomes the
    all-inequality rows ``A * X <= obs + epsilon``, ``-A * X <= -(obs -
    epsilon)`` and ``-X <= 0``; the true stack satisfies all of them.
    """
    l, p, n = image_stack.dims
    if np.any(image_stack.data < 0):
        raise ValueError("image stack entries must be nonnegative")
    op = build_blur_operator(l, n, kernel)
    blurred = tprod(op, image_stack)
    if not noisy:
        return FeasibilityProblem(
            op,
            blurred,
            ConstraintPartition.all_equalities(l),
            lower_bound=Tensor3.zeros(l, p, n),
        )
    if epsilon <= 0:
        raise ValueError("epsilon must be positive in noisy mode")
    rng = np.random.default_rng(seed)
    obs = blurred.data + rng.uniform(-epsilon, epsilon, size=blurred.dims)
    ident = t_identity(l, n)
    stacked_op = np.concatenate([op.data, -op.data, -ident.data], axis=0)
    stacked_rhs = np.concatenate(
        [obs + epsilon, -(obs - epsilon), np.zeros((l, p, n))], axis=0
    )
    return FeasibilityProblem(
        Tensor3(stacked_op, copy=False),
        Tensor3(stacked_rhs, copy=False),
        ConstraintPartition.all_inequalities(3 * l),
    )
