"""Third-order tensor algebra under the t-product.

A real ``m x l x n`` tensor acts on an ``l x p x n`` tensor through its
``(mn) x (ln)`` block-circulant matrix applied to the vertically unfolded
operand.  Taking the DFT along the third (tube) axis block-diagonalizes the
circulant structure, so the same product can be evaluated frequency by
frequency.  Both routes are provided: :func:`tprod_naive` builds the dense
block-circulant matrix and serves as the reference oracle, while
:func:`tprod_fft` is the fast path used everywhere else.

Data layout, fixed repo-wide: tensors are C-ordered ``float64`` arrays of
shape ``(m, l, n)``, so entry ``(i, j, k)`` sits at linear offset
``(i*l + j)*n + k``.  Tube fibers ``t[i, j, :]`` are contiguous, which is
the axis the DFT runs along.  File serialization uses the same ordering.

Matrices are the ``n == 1`` special case, where every operation reduces to
its ordinary matrix counterpart.
"""

from __future__ import annotations

import math

import numpy as np

# Fourier-domain results are truncated to their real part only after the
# imaginary residue passes this relative bound; a violation raises instead
# of being silently dropped.
RESIDUE_REL_TOL = 1e-10


class FourierResidueError(ArithmeticError):
    """Imaginary residue of a Fourier-domain result exceeded its bound."""


class Tensor3:
    """Dense real third-order tensor (rows x columns x tubes).

    Thin wrapper around a C-ordered ``float64`` array of shape
    ``(m, l, n)``.  Indices are 0-based; out-of-range access through
    :meth:`entry` raises instead of wrapping.
    """

    __slots__ = ("data",)

    def __init__(self, data, copy: bool = True):
        arr = np.array(data, dtype=np.float64, copy=copy, order="C")
        if arr.ndim != 3:
            raise ValueError(f"expected a 3-d array, got {arr.ndim}-d")
        if min(arr.shape) < 1:
            raise ValueError(f"all dimensions must be positive, got {arr.shape}")
        self.data = arr

    @classmethod
    def from_matrix(cls, mat) -> "Tensor3":
        """Embed an ``m x l`` matrix as the single-tube tensor ``m x l x 1``."""
        arr = np.asarray(mat, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-d array, got {arr.ndim}-d")
        return cls(arr[:, :, None])

    @classmethod
    def zeros(cls, m: int, l: int, n: int) -> "Tensor3":
        return cls(np.zeros((m, l, n)), copy=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def entry(self, i: int, j: int, k: int) -> float:
        """Entry ``(i, j, k)`` with strict bounds checking (no wrapping)."""
        m, l, n = self.data.shape
        if not (0 <= i < m and 0 <= j < l and 0 <= k < n):
            raise IndexError(
                f"entry ({i}, {j}, {k}) out of range for dims ({m}, {l}, {n})"
            )
        return float(self.data[i, j, k])

    def row_slice(self, i: int) -> "Tensor3":
        """The ``1 x l x n`` row slice at row ``i``."""
        m = self.data.shape[0]
        if not 0 <= i < m:
            raise IndexError(f"row {i} out of range for {m} rows")
        return Tensor3(self.data[i : i + 1], copy=False)

    def frontal_slice(self, k: int) -> np.ndarray:
        """The ``m x l`` frontal slice at tube index ``k`` (a view)."""
        n = self.data.shape[2]
        if not 0 <= k < n:
            raise IndexError(f"frontal slice {k} out of range for {n} tubes")
        return self.data[:, :, k]

    def copy(self) -> "Tensor3":
        return Tensor3(self.data, copy=True)

    def __repr__(self) -> str:
        m, l, n = self.data.shape
        return f"Tensor3(dims=({m}, {l}, {n}))"


class FourierTensor3:
    """Tube-wise DFT of a :class:`Tensor3` with cached per-slice norms.

    ``slice_sq_norms[k]`` holds the squared Frobenius norm of the k-th
    frontal slice of the transformed tensor; the solvers' step-size bounds
    and the t-product norm bound are both read off these numbers.
    """

    __slots__ = ("data", "slice_sq_norms")

    def __init__(self, data):
        arr = np.array(data, dtype=np.complex128, order="C")
        if arr.ndim != 3:
            raise ValueError(f"expected a 3-d array, got {arr.ndim}-d")
        if min(arr.shape) < 1:
            raise ValueError(f"all dimensions must be positive, got {arr.shape}")
        self.data = arr
        self.slice_sq_norms = np.sum(arr.real**2 + arr.imag**2, axis=(0, 1))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        m, l, n = self.data.shape
        return f"FourierTensor3(dims=({m}, {l}, {n}))"


def real_part_checked(z: np.ndarray, context: str = "result") -> np.ndarray:
    """Real part of ``z`` after asserting its imaginary residue is noise.

    Raises :class:`FourierResidueError` if the imaginary Frobenius norm
    exceeds ``RESIDUE_REL_TOL * (1 + ||Re z||_F)``; anything that large
    signals numerical corruption rather than round-off.
    """
    imag = math.sqrt(float(np.sum(z.imag**2)))
    real = math.sqrt(float(np.sum(z.real**2)))
    if imag > RESIDUE_REL_TOL * (1.0 + real):
        raise FourierResidueError(
            f"imaginary residue {imag:.3e} of {context} exceeds "
            f"{RESIDUE_REL_TOL:g} * (1 + {real:.3e})"
        )
    return np.ascontiguousarray(z.real)


def unfold(t: Tensor3) -> np.ndarray:
    """Stack the frontal slices vertically into an ``(mn) x l`` matrix."""
    m, l, n = t.dims
    return np.ascontiguousarray(t.data.transpose(2, 0, 1).reshape(m * n, l))


def fold(mat: np.ndarray, n: int) -> Tensor3:
    """Inverse of :func:`unfold`; ``mat`` has ``n`` stacked frontal slices."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"expected a 2-d array, got {mat.ndim}-d")
    rows, l = mat.shape
    if n < 1 or rows % n != 0:
        raise ValueError(f"cannot fold {rows} rows into {n} frontal slices")
    m = rows // n
    return Tensor3(mat.reshape(n, m, l).transpose(1, 2, 0))


def bcirc(t: Tensor3) -> np.ndarray:
    """Block-circulant matrix of ``t``: block ``(r, c)`` is slice ``(r-c) mod n``."""
    m, l, n = t.dims
    out = np.empty((m * n, l * n))
    for r in range(n):
        for c in range(n):
            out[r * m : (r + 1) * m, c * l : (c + 1) * l] = t.data[:, :, (r - c) % n]
    return out


def t_transpose(t: Tensor3) -> Tensor3:
    """Tensor transpose: transpose each slice and reverse slices 2..n.

    Satisfies ``bcirc(t_transpose(t)) == bcirc(t).T`` exactly.
    """
    m, l, n = t.dims
    out = np.empty((l, m, n))
    out[:, :, 0] = t.data[:, :, 0].T
    for k in range(1, n):
        out[:, :, k] = t.data[:, :, n - k].T
    return Tensor3(out, copy=False)


def t_identity(l: int, n: int) -> Tensor3:
    """Neutral element of the t-product: identity first slice, zeros after."""
    out = np.zeros((l, l, n))
    out[:, :, 0] = np.eye(l)
    return Tensor3(out, copy=False)


def inner(a: Tensor3, b: Tensor3) -> float:
    """Entrywise inner product; dims must match."""
    if a.dims != b.dims:
        raise ValueError(f"dims mismatch: {a.dims} vs {b.dims}")
    return float(np.vdot(a.data, b.data))


def frob_norm(t: Tensor3) -> float:
    return math.sqrt(inner(t, t))


def positive_part(t: Tensor3) -> Tensor3:
    """Entrywise ``max(., 0)``."""
    return Tensor3(np.maximum(t.data, 0.0), copy=False)


def _check_product_dims(a_dims, x_dims) -> None:
    ma, la, na = a_dims
    lx, px, nx = x_dims
    if la != lx or na != nx:
        raise ValueError(
            f"cannot multiply {ma}x{la}x{na} with {lx}x{px}x{nx}: "
            "inner dims and tube counts must match"
        )


def tprod_naive(a: Tensor3, x: Tensor3) -> Tensor3:
    """t-product through the explicit block-circulant matrix (reference path)."""
    _check_product_dims(a.dims, x.dims)
    return fold(bcirc(a) @ unfold(x), a.dims[2])


def dft_tubes(t: Tensor3) -> FourierTensor3:
    """DFT along every tube fiber (plain, unnormalized forward transform)."""
    return FourierTensor3(np.fft.fft(t.data, axis=2))


def idft_tubes(f: FourierTensor3) -> Tensor3:
    """Inverse of :func:`dft_tubes`; result must be real up to round-off."""
    z = np.fft.ifft(f.data, axis=2)
    return Tensor3(real_part_checked(z, "inverse tube DFT"), copy=False)


def tprod_fft(a_hat: FourierTensor3, x: Tensor3) -> Tensor3:
    """t-product evaluated slice-wise in the Fourier domain.

    ``a_hat`` is the tube-wise DFT of the left operand.  For ``n == 1`` the
    transforms are the identity and the product is evaluated directly in the
    spatial domain, so the matrix case stays in exact real arithmetic.
    """
    _check_product_dims(a_hat.dims, x.dims)
    n = a_hat.dims[2]
    if n == 1:
        prod = a_hat.data[:, :, 0].real @ x.data[:, :, 0]
        return Tensor3(prod[:, :, None])
    x_hat = np.fft.fft(x.data, axis=2)
    y_hat = np.matmul(np.moveaxis(a_hat.data, 2, 0), np.moveaxis(x_hat, 2, 0))
    y = np.fft.ifft(np.moveaxis(y_hat, 0, 2), axis=2)
    return Tensor3(real_part_checked(y, "t-product"), copy=False)


def tprod(a: Tensor3, x: Tensor3) -> Tensor3:
    """t-product ``a * x`` through the Fourier fast path."""
    return tprod_fft(dft_tubes(a), x)


def spectral_norm(mat: np.ndarray, rel_tol: float = 1e-10, max_iters: int = 20000) -> float:
    """Largest singular value by power iteration on the Gram matrix.

    Stops when the Rayleigh-quotient estimate changes by less than
    ``rel_tol`` relatively.  On a single-row matrix this is the vector
    2-norm and the iteration converges immediately.
    """
    a = np.atleast_2d(np.asarray(mat))
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got {a.ndim}-d")
    if not np.any(a):
        return 0.0
    rng = np.random.default_rng(0)
    v = rng.standard_normal(a.shape[1])
    if np.iscomplexobj(a):
        v = v + 1j * rng.standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iters):
        w = a.conj().T @ (a @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        prev, est = est, math.sqrt(float(np.real(np.vdot(v, w))))
        v = w / nw
        if abs(est - prev) <= rel_tol * est:
            break
    return est


def fourier_spectral_bound(a_hat: FourierTensor3) -> float:
    """``max_k sigma_max(a_hat[:, :, k])``, an upper bound factor on
    ``||a * x||_F / ||x||_F`` that is tighter than ``sqrt(n) ||a||_F``."""
    return max(spectral_norm(a_hat.data[:, :, k]) for k in range(a_hat.dims[2]))
