"""Dense linear-algebra primitives and the convex-analysis kernel.

The objective throughout is ``f(x) = lam * ||x||_1 + 0.5 * ||x||^2``, whose
conjugate gradient is the soft shrinkage operator.
"""

import itertools
import logging

import numpy as np

from .exceptions import (
    DimensionMismatch,
    NoConvergence,
    SubgradientMismatch,
    TooLarge,
    ZeroRhs,
    ZeroRow,
)

logger = logging.getLogger(__name__)

SUBGRADIENT_TOL = 1e-9


class DenseMatrix:
    """Immutable dense matrix with cached row norms and Frobenius norm.

    Solver kernels index ``values`` row-wise and read ``row_norms_sq`` to
    normalise the Kaczmarz projections; the cache is never recomputed.
    """

    __slots__ = ("values", "row_norms", "row_norms_sq", "frob_norm", "frob_norm_sq")

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D matrix, got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix entries must be finite")
        arr.setflags(write=False)
        row_norms_sq = np.einsum("ij,ij->i", arr, arr)
        row_norms_sq.setflags(write=False)
        row_norms = np.sqrt(row_norms_sq)
        row_norms.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "row_norms_sq", row_norms_sq)
        object.__setattr__(self, "row_norms", row_norms)
        object.__setattr__(self, "frob_norm_sq", float(row_norms_sq.sum()))
        object.__setattr__(self, "frob_norm", float(np.sqrt(self.frob_norm_sq)))

    def __setattr__(self, name, value):
        raise AttributeError("DenseMatrix is immutable")

    @property
    def shape(self):
        return self.values.shape

    @property
    def m(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __repr__(self):
        return f"DenseMatrix(m={self.m}, n={self.n}, frob_norm={self.frob_norm:.6g})"

    def require_nonzero_rows(self):
        zero = np.flatnonzero(self.row_norms_sq == 0.0)
        if zero.size:
            raise ZeroRow(f"rows {zero.tolist()} are zero; Kaczmarz steps need nonzero rows")
        return self


def as_matrix(A):
    """Return ``A`` as a :class:`DenseMatrix` (no copy if it already is one)."""
    if isinstance(A, DenseMatrix):
        return A
    return DenseMatrix(A)


def _vec(x, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {x.shape}")
    return x


def soft_shrinkage(x, lam):
    """Componentwise ``max(|x| - lam, 0) * sign(x)``."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def f_value(x, lam):
    x = _vec(x)
    return float(lam * np.abs(x).sum() + 0.5 * x.dot(x))


def f_conj_value(xstar, lam):
    s = soft_shrinkage(_vec(xstar, "xstar"), lam)
    return float(0.5 * s.dot(s))


def check_subgradient(x, xstar, lam, tol=SUBGRADIENT_TOL):
    """Raise :class:`SubgradientMismatch` unless ``xstar`` is in the subdifferential of f at ``x``.

    For this f, ``xstar`` is a subgradient at ``x`` exactly when
    ``S_lam(xstar) == x``; the comparison is done in the sup-norm.
    """
    gap = np.max(np.abs(soft_shrinkage(xstar, lam) - x), initial=0.0)
    if gap > tol:
        raise SubgradientMismatch(
            f"||S_lam(xstar) - x||_inf = {gap:.3e} exceeds {tol:.1e}"
        )


def bregman_distance(x, xstar, y, lam, check=True):
    """Bregman distance ``D_f^{xstar}(x, y)`` in Fenchel form.

    Parameters
    ----------
    x, xstar : ndarray
        Base point and a subgradient of f at it.
    y : ndarray
        Second argument.
    lam : float
        Sparsity weight of f.
    check : bool
        Verify the subgradient pairing before evaluating.
    """
    x, xstar, y = _vec(x), _vec(xstar, "xstar"), _vec(y, "y")
    if not (x.shape == xstar.shape == y.shape):
        raise DimensionMismatch("x, xstar and y must have equal length")
    if check:
        check_subgradient(x, xstar, lam)
    return f_conj_value(xstar, lam) - float(xstar.dot(y)) + f_value(y, lam)


def _gram_smaller(A):
    return A.T @ A if A.shape[1] <= A.shape[0] else A @ A.T


def spectral_norm(A, tol=1e-12, max_power_iters=20000, seed=0):
    """Largest singular value of ``A`` by power iteration on its smaller Gram matrix.

    Iteration starts from the normalised all-ones vector so the result is
    reproducible; if the residual ``||G v - rho v|| / rho`` stagnates above
    ``tol``, it restarts once from a vector drawn with ``seed``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.asarray(A, dtype=np.float64)
    if not np.any(A):
        raise ValueError("spectral norm of the zero matrix requested")
    G = _gram_smaller(A)
    k = G.shape[0]
    v = np.full(k, 1.0 / np.sqrt(k))
    restarted = False
    best_resid = np.inf
    stalled = 0
    for _ in range(max_power_iters):
        w = G @ v
        rho = float(v.dot(w))
        wn = np.linalg.norm(w)
        if wn == 0.0 or stalled > 200:
            if restarted:
                break
            restarted = True
            v = np.random.default_rng(seed).standard_normal(k)
            v /= np.linalg.norm(v)
            best_resid, stalled = np.inf, 0
            continue
        resid = np.linalg.norm(w - rho * v)
        if resid <= tol * rho:
            return float(np.sqrt(rho))
        if resid < best_resid * (1 - 1e-3):
            best_resid, stalled = resid, 0
        else:
            stalled += 1
        v = w / wn
    raise NoConvergence(
        f"power iteration did not reach tol={tol:g} in {max_power_iters} iterations"
    )


def smallest_singular_value(M, rcond=None):
    """Smallest *nonzero* singular value of ``M``; 0.0 if ``M`` is zero."""
    s = np.linalg.svd(np.asarray(M, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0.0
    if rcond is None:
        rcond = max(M.shape) * np.finfo(np.float64).eps
    s = s[s > rcond * s[0]]
    return float(s[-1])


def min_singular_over_column_subsets(A, max_cols=16):
    """Minimum over nonzero column submatrices ``A_J`` of the smallest nonzero singular value.

    All ``2**n - 1`` subsets are enumerated, grouped by size so the
    eigenvalues of the principal Gram submatrices ``(A^T A)_JJ`` are computed
    in one batched call per size.
    """
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    if n > max_cols:
        raise TooLarge(f"n={n} columns exceeds max_cols={max_cols}; supply gamma externally")
    G = A.T @ A
    eps = np.finfo(np.float64).eps
    best = np.inf
    for size in range(1, n + 1):
        subsets = np.array(list(itertools.combinations(range(n), size)), dtype=np.intp)
        blocks = G[subsets[:, :, None], subsets[:, None, :]]
        ev = np.linalg.eigvalsh(blocks)
        top = ev[:, -1]
        nonzero = top > 0.0
        if not np.any(nonzero):
            continue
        ev, top = ev[nonzero], top[nonzero]
        thresh = 10.0 * max(m, size) * eps * top
        masked = np.where(ev > thresh[:, None], ev, np.inf)
        best = min(best, float(masked.min()))
    if not np.isfinite(best):
        raise ValueError("every column of A is zero")
    return float(np.sqrt(best))


def sigma_tilde_min(A, max_cols=16):
    """The column-subset singular value, with an exact shortcut for tall full-rank ``A``.

    When ``A`` has full column rank, every column submatrix ``A_J`` satisfies
    ``sigma_min(A_J) >= sigma_min(A)`` (a minimum over a smaller subspace),
    so the subset minimum is attained by ``A`` itself and no enumeration is
    needed.
    """
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    if n > max_cols and m >= n:
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] > max(m, n) * np.finfo(np.float64).eps * s[0]:
            return float(s[-1])
    return min_singular_over_column_subsets(A, max_cols=max_cols)


def dual_objective(y, A, b, lam):
    """``0.5 * ||S_lam(A^T y)||^2 - <b, y>``."""
    A = np.asarray(A, dtype=np.float64)
    y, b = _vec(y, "y"), _vec(b, "b")
    if y.shape[0] != A.shape[0] or b.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"y and b must have length m={A.shape[0]}")
    return f_conj_value(A.T @ y, lam) - float(b.dot(y))


def dual_gradient(y, A, b, lam):
    A = np.asarray(A, dtype=np.float64)
    return A @ soft_shrinkage(A.T @ _vec(y, "y"), lam) - _vec(b, "b")


def residual_norms(A, x, b, relative=True):
    """Return ``(||Ax - b||, ||Ax - b|| / ||b||)``.

    With ``relative=False`` the second entry is ``nan`` and a zero ``b`` is
    accepted.
    """
    A = np.asarray(A, dtype=np.float64)
    x, b = _vec(x), _vec(b, "b")
    if A.shape != (b.shape[0], x.shape[0]):
        raise DimensionMismatch(
            f"A has shape {A.shape} but x has {x.shape[0]} and b has {b.shape[0]} entries"
        )
    res = float(np.linalg.norm(A @ x - b))
    if not relative:
        return res, float("nan")
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        raise ZeroRhs("relative residual undefined for b = 0")
    return res, res / bn
