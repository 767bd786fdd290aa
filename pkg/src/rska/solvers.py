"""Step kernels and the iteration loop for RK, RSK, RSKA and linearized Bregman.

Every kernel is a pure function ``state -> state``.  The primal iterate is
always ``x = S_lam(xstar)``; for plain RK (no shrinkage) ``xstar`` tracks ``x``.
"""

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .core import as_matrix, soft_shrinkage, spectral_norm
from .exceptions import DimensionMismatch, InvalidEta
from .sampling import build_variant, coupled_uniform_scheme, sample_batch

METHODS = ("RK", "RSK", "RSKA", "LinBreg")
STATUSES = ("Converged", "MaxIters", "Diverged")
TRACE_COLUMNS = ("k", "row_accesses", "rel_residual", "rel_error", "wall_ns")


@dataclass(frozen=True)
class SolverState:
    x: np.ndarray
    xstar: np.ndarray
    k: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def _check_dims(state, A, b):
    if b.shape[0] != A.m or state.x.shape[0] != A.n or state.xstar.shape[0] != A.n:
        raise DimensionMismatch(
            f"A is {A.m}x{A.n}, b has {b.shape[0]} entries, x has {state.x.shape[0]}"
        )


def _averaged_correction(A, b, x, rows, weights):
    # Shared by RK/RSK/RSKA so that eta=1 paths agree bit for bit.
    res = A.values[rows] @ x - b[rows]
    coef = weights * (res / A.row_norms_sq[rows])
    terms = coef[:, None] * A.values[rows]
    # Reduction over axis 0 of a C-ordered array accumulates rows in batch order.
    return np.add.reduce(terms, axis=0) / rows.shape[0]


def rska_step(state, A, b, batch, scheme, lam):
    """One averaged sparse Kaczmarz step over the row indices in ``batch``."""
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    _check_dims(state, A, b)
    batch = np.asarray(batch, dtype=np.intp)
    if batch.ndim != 1 or batch.size == 0:
        raise DimensionMismatch("batch must be a nonempty 1-D index array")
    if scheme.m != A.m:
        raise DimensionMismatch(f"scheme has {scheme.m} rows, A has {A.m}")
    delta = _averaged_correction(A, b, state.x, batch, scheme.weights[batch])
    xstar = state.xstar - delta
    return SolverState(soft_shrinkage(xstar, lam), xstar, state.k + 1)


def rsk_step(state, A, b, row, w, lam):
    """Relaxed sparse Kaczmarz step on a single row with weight ``w``."""
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    _check_dims(state, A, b)
    rows = np.array([row], dtype=np.intp)
    delta = _averaged_correction(A, b, state.x, rows, np.array([w], dtype=np.float64))
    xstar = state.xstar - delta
    return SolverState(soft_shrinkage(xstar, lam), xstar, state.k + 1)


def rk_step(state, A, b, row, w=1.0):
    """Relaxed Kaczmarz projection step (no shrinkage)."""
    return rsk_step(state, A, b, row, w, 0.0)


def linearized_bregman_step(state, A, b, lam, spec_norm=None):
    """Full-gradient step ``xstar - A^T (A x - b) / sigma_max(A)^2`` followed by shrinkage."""
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    _check_dims(state, A, b)
    if spec_norm is None:
        spec_norm = spectral_norm(A.values)
    xstar = state.xstar - A.values.T @ (A.values @ state.x - b) / spec_norm**2
    return SolverState(soft_shrinkage(xstar, lam), xstar, state.k + 1)


@dataclass
class SolverConfig:
    """Inputs of :func:`run`.

    ``scheme`` defaults per method: RK and RSK use unit weights with
    probabilities proportional to squared row norms; RSKA builds ``variant``
    with batch size ``eta``.  ``alpha`` overrides the scheme with uniform
    weights ``alpha * I`` (coupled).  Runs stop when the relative residual
    drops to ``residual_tol``, after ``max_iters`` iterations, or when it
    exceeds ``divergence_factor`` times its initial value.
    """

    method: str = "RSKA"
    lam: float = 1.0
    eta: int = 1
    max_iters: int = 1000
    residual_tol: float = 0.0
    seed: int = 0
    variant: str = "v1"
    alpha: float = None
    scheme: object = None
    record_every: int = 1
    divergence_factor: float = 1e3
    spec_norm: float = None
    use_noisy: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.eta < 1:
            raise InvalidEta("eta must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.residual_tol < 0:
            raise ValueError("residual_tol must be >= 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.method in ("RK", "RSK") and self.eta != 1:
            raise InvalidEta(f"{self.method} uses one row per iteration; eta must be 1")

    def resolve_scheme(self, A):
        if self.method == "LinBreg":
            return None
        if self.scheme is not None:
            return self.scheme
        if self.alpha is not None:
            return coupled_uniform_scheme(A, self.alpha, variant="alpha", seed=self.seed)
        if self.method in ("RK", "RSK"):
            return build_variant(A, "v1", 1, self.seed)
        return build_variant(A, self.variant, self.eta, self.seed)

    def rows_per_iteration(self, m):
        return {"RK": 1, "RSK": 1, "RSKA": self.eta, "LinBreg": m}[self.method]


@dataclass
class RunTrace:
    """Per-iteration records of one run."""

    k: list = field(default_factory=list)
    row_accesses: list = field(default_factory=list)
    rel_residual: list = field(default_factory=list)
    rel_error: list = field(default_factory=list)
    wall_ns: list = field(default_factory=list)
    status: str = "MaxIters"
    x: np.ndarray = None
    xstar: np.ndarray = None

    def append(self, k, rows, res, err, wall):
        self.k.append(k)
        self.row_accesses.append(rows)
        self.rel_residual.append(res)
        self.rel_error.append(err)
        self.wall_ns.append(wall)

    def __len__(self):
        return len(self.k)

    @property
    def n_iter(self):
        return self.k[-1] if self.k else 0

    def as_arrays(self):
        return {
            "k": np.asarray(self.k, dtype=np.int64),
            "row_accesses": np.asarray(self.row_accesses, dtype=np.int64),
            "rel_residual": np.asarray(self.rel_residual, dtype=np.float64),
            "rel_error": np.asarray(self.rel_error, dtype=np.float64),
            "wall_ns": np.asarray(self.wall_ns, dtype=np.int64),
        }

    def to_csv(self, path_or_buf=None, include_timing=True):
        """Write ``k,row_accesses,rel_residual,rel_error,wall_ns``; returns the text if no target."""
        cols = TRACE_COLUMNS if include_timing else TRACE_COLUMNS[:-1]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for i in range(len(self)):
            row = [self.k[i], self.row_accesses[i], repr(self.rel_residual[i]), repr(self.rel_error[i])]
            if include_timing:
                row.append(self.wall_ns[i])
            writer.writerow(row)
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return text


def run(config, problem):
    """Iterate ``config.method`` on ``problem`` from ``x = xstar = 0``.

    ``problem`` needs ``A`` and ``b`` attributes, and optionally ``b_noisy``
    (used when ``config.use_noisy``) and ``xhat`` for the error column.
    The row sampler draws from ``numpy.random.default_rng(config.seed)``, so
    the trace depends only on ``(config, problem)``.
    """
    A = as_matrix(problem.A).require_nonzero_rows()
    b_clean = np.asarray(problem.b, dtype=np.float64)
    b_noisy = getattr(problem, "b_noisy", None)
    b = np.asarray(b_noisy, dtype=np.float64) if (config.use_noisy and b_noisy is not None) else b_clean
    xhat = getattr(problem, "xhat", None)
    if b.shape[0] != A.m:
        raise DimensionMismatch(f"b has {b.shape[0]} entries, A has {A.m} rows")

    scheme = config.resolve_scheme(A)
    rng = np.random.default_rng(config.seed)
    spec_norm = config.spec_norm
    if config.method == "LinBreg" and spec_norm is None:
        spec_norm = spectral_norm(A.values)
    rows_per_iter = config.rows_per_iteration(A.m)
    b_norm = float(np.linalg.norm(b))
    xhat_norm = None if xhat is None else float(np.linalg.norm(xhat))

    def measure(x):
        res = float(np.linalg.norm(A.values @ x - b)) / b_norm
        if xhat is None:
            return res, float("nan")
        diff = float(np.linalg.norm(x - xhat))
        return res, diff / xhat_norm if xhat_norm > 0 else diff

    trace = RunTrace()
    state = SolverState.zeros(A.n)
    t0 = time.perf_counter_ns()
    res0, err0 = measure(state.x)
    trace.append(0, 0, res0, err0, 0)
    if res0 <= config.residual_tol:
        trace.status = "Converged"
    else:
        lam = config.lam
        for k in range(1, config.max_iters + 1):
            if config.method == "RSKA":
                state = rska_step(state, A, b, sample_batch(scheme, config.eta, rng), scheme, lam)
            elif config.method == "LinBreg":
                state = linearized_bregman_step(state, A, b, lam, spec_norm)
            else:
                row = int(sample_batch(scheme, 1, rng)[0])
                w = float(scheme.weights[row])
                if config.method == "RK":
                    state = rk_step(state, A, b, row, w)
                else:
                    state = rsk_step(state, A, b, row, w, lam)
            last = k == config.max_iters
            if k % config.record_every and not last:
                continue
            res, err = measure(state.x)
            trace.append(k, k * rows_per_iter, res, err, time.perf_counter_ns() - t0)
            if res <= config.residual_tol:
                trace.status = "Converged"
                break
            if not np.isfinite(res) or res > config.divergence_factor * res0:
                trace.status = "Diverged"
                break
    trace.x, trace.xstar = state.x, state.xstar
    return trace
