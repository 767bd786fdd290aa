"""Closed-form convergence certificates for averaged sparse Kaczmarz.

Notation: ``frob`` is ``||A||_F``, ``smax`` is ``sigma_max(A)``,
``sigma_w`` is ``sigma_max(W)`` (the largest weight) and ``eta`` the batch
size.  The uniform-weight regime means ``W = alpha * I``.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import as_matrix, f_value, sigma_tilde_min, spectral_norm
from .exceptions import InvalidEta, OutOfRange, ZeroVector

REGIMES = ("uniform", "general")


@dataclass(frozen=True)
class RateCertificate:
    alpha_star: float
    L_star: float
    q: float
    gamma: float
    sigma_T_lower: float
    sigma_T_upper: float
    eta: int
    regime: str
    extrapolated: bool = False
    alpha: float = None
    L: float = None

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class NoisyCertificate:
    a: float
    c: float
    epsilon: float
    delta: float
    horizon: float
    sigma_T: float
    sigma_T_shifted: float

    def to_dict(self):
        return asdict(self)


def _regime(regime):
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
    return regime


def t_matrix(W, A, alpha, eta):
    """``T = W / (2 eta) + (alpha/2) (1 - 1/eta) A A^T / ||A||_F^2``.

    ``W`` may be a scalar, a weight vector or a diagonal matrix.
    """
    if eta < 1:
        raise InvalidEta("eta must be >= 1")
    if alpha <= 0:
        raise OutOfRange("alpha must be positive")
    A = as_matrix(A)
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 0:
        W = np.full(A.m, float(W))
    if W.ndim == 1:
        W = np.diag(W)
    AAt = A.values @ A.values.T
    return W / (2.0 * eta) + 0.5 * alpha * (1.0 - 1.0 / eta) * AAt / A.frob_norm_sq


def sigma_T_bounds(sigma_w, alpha, eta, smax, frob, scalar_weights=False):
    """Scalar form of :func:`sigma_max_T` from precomputed spectral data."""
    if eta < 1:
        raise InvalidEta("eta must be >= 1")
    spread = alpha / frob**2 * (eta - 1) * smax**2
    if scalar_weights:
        exact = (sigma_w + spread) / (2.0 * eta)
        return exact, exact
    return (sigma_w - spread) / (2.0 * eta), (sigma_w + spread) / (2.0 * eta)


def sigma_max_T(W, A, alpha, eta, smax=None):
    """Bounds ``(lower, upper)`` on the largest singular value of :func:`t_matrix`.

    When ``W`` is a multiple of the identity both entries equal the exact value.
    """
    A = as_matrix(A)
    if smax is None:
        smax = spectral_norm(A.values)
    w = np.asarray(W, dtype=np.float64)
    if w.ndim == 2:
        w = np.diag(w)
    scalar = w.ndim == 0 or bool(np.all(w == w.flat[0]))
    return sigma_T_bounds(float(w.max()), alpha, eta, smax, A.frob_norm, scalar_weights=scalar)


def rate_L(alpha, eta, smax, frob, sigma_w):
    """``L(alpha) = alpha - alpha/(2 eta) * (alpha (eta-1) smax^2 / frob^2 + sigma_w)``.

    Pass ``sigma_w=alpha`` for uniform weights.
    """
    if eta < 1:
        raise InvalidEta("eta must be >= 1")
    return alpha - alpha / (2.0 * eta) * (alpha / frob**2 * (eta - 1) * smax**2 + sigma_w)


def optimal_alpha(regime, eta, smax, frob, sigma_w=None):
    """The relaxation maximising ``L`` and the maximum, as ``(alpha_star, L_star)``."""
    regime = _regime(regime)
    ratio = smax**2 / frob**2
    if regime == "uniform":
        if eta < 1:
            raise InvalidEta("eta must be >= 1")
        alpha_star = eta / (1.0 + (eta - 1) * ratio)
        return alpha_star, eta / (2.0 + 2.0 * (eta - 1) * ratio)
    if sigma_w is None:
        raise ValueError("general regime needs sigma_w")
    if not eta > max(1.0, sigma_w / 2.0):
        raise InvalidEta(f"general regime needs eta > max(1, sigma_w/2) = {max(1.0, sigma_w / 2):g}")
    alpha_star = (eta - sigma_w / 2.0) / (ratio * (eta - 1))
    L_star = (2 * eta - sigma_w) ** 2 / (8.0 * ratio * eta * (eta - 1))
    return alpha_star, L_star


def alpha_upper_bound(eta, smax, frob, sigma_w=None, epsilon=0.0):
    """Supremum of admissible relaxations (``inf`` when the bound is vacuous).

    Without ``sigma_w`` (uniform weights) the bound is solved for ``alpha``
    appearing on both sides, giving ``2 (1-eps) eta / (1 + (eta-1) smax^2/frob^2)``.
    """
    ratio = smax**2 / frob**2
    if sigma_w is None:
        return 2.0 * (1.0 - epsilon) * eta / (1.0 + (eta - 1) * ratio)
    if eta == 1:
        return math.inf if (1.0 - epsilon) - sigma_w / 2.0 > 0 else 0.0
    return max(2.0 * ((1.0 - epsilon) * eta - sigma_w / 2.0) / (ratio * (eta - 1)), 0.0)


def contraction_q(gamma, L, frob):
    """``q = 1 - L / (gamma ||A||_F^2)``; raises :class:`OutOfRange` outside (0, 1)."""
    if not gamma > 0:
        raise OutOfRange("gamma must be positive")
    q = 1.0 - L / (gamma * frob**2)
    if not 0.0 < q < 1.0:
        raise OutOfRange(f"q = {q:.6g} not in (0, 1); alpha outside the admissible interval")
    return q


def abs_min(x):
    """Smallest nonzero magnitude of ``x``."""
    nz = np.abs(np.asarray(x, dtype=np.float64))
    nz = nz[nz > 0]
    if nz.size == 0:
        raise ZeroVector("x has no nonzero entries")
    return float(nz.min())


def gamma_bound(A, xhat, lam, max_cols=16, sigma_tilde=None):
    """Error-bound constant ``(|xhat|_min + 2 lam) / (|xhat|_min * sigma_tilde_min(A)^2)``."""
    xmin = abs_min(xhat)
    if sigma_tilde is None:
        sigma_tilde = sigma_tilde_min(np.asarray(A, dtype=np.float64), max_cols=max_cols)
    return (xmin + 2.0 * lam) / (xmin * sigma_tilde**2)


def shifted_sigma_uniform(A, alpha, eta):
    """Exact ``sigma_max(T - I/2)`` for ``W = alpha I`` from the spectrum of ``A A^T``."""
    A = as_matrix(A)
    s = np.linalg.svd(A.values, compute_uv=False)
    mu = s**2
    if A.m > s.size:
        mu = np.append(mu, 0.0)
    t = alpha / (2.0 * eta) + 0.5 * alpha * (1.0 - 1.0 / eta) * mu / A.frob_norm_sq
    return float(np.max(np.abs(t - 0.5)))


def noisy_rate(alpha, eta, W, A, gamma, epsilon=None, delta=0.0, smax=None):
    """Contraction ``a``, noise constant ``c`` and horizon ``c delta^2 / (1 - a)``.

    ``W`` is a weight vector (or scalar for uniform weights).  Uniform weights
    use the exact ``sigma_max(T)``; general weights use its upper bound and the
    triangle-inequality bound on ``sigma_max(T - I/2)``.  ``epsilon`` defaults
    to ``(1 - sigma_max(T)) / 2``.
    """
    A = as_matrix(A)
    if smax is None:
        smax = spectral_norm(A.values)
    w = np.asarray(W, dtype=np.float64)
    uniform = w.ndim == 0 or bool(np.all(w == w.flat[0]))
    frob = A.frob_norm
    if uniform:
        wval = float(w.flat[0])
        if not math.isclose(wval, alpha, rel_tol=1e-12):
            raise ValueError("uniform weights must equal alpha (W = alpha I)")
        sigma_T, _ = sigma_T_bounds(alpha, alpha, eta, smax, frob, scalar_weights=True)
        sigma_shift = shifted_sigma_uniform(A, alpha, eta)
    else:
        sigma_w = float(w.max())
        _, sigma_T = sigma_T_bounds(sigma_w, alpha, eta, smax, frob)
        sigma_shift = float(np.max(np.abs(w / (2.0 * eta) - 0.5))) + 0.5 * alpha * (
            1.0 - 1.0 / eta
        ) * smax**2 / frob**2
    if epsilon is None:
        epsilon = (1.0 - sigma_T) / 2.0
    if not (epsilon > 0 and 1.0 - epsilon - sigma_T > 0):
        raise OutOfRange(
            f"need 0 < epsilon < 1 - sigma_max(T); got epsilon={epsilon:g}, sigma_max(T)={sigma_T:g}"
        )
    if not gamma > 0:
        raise OutOfRange("gamma must be positive")
    a = 1.0 - alpha / gamma * (1.0 - epsilon - sigma_T) / frob**2
    if not 0.0 < a < 1.0:
        raise OutOfRange(f"a = {a:.6g} not in (0, 1)")
    c = alpha / frob**2 * (sigma_T + sigma_shift**2 / epsilon)
    horizon = c * delta**2 / (1.0 - a)
    return NoisyCertificate(a, c, float(epsilon), float(delta), horizon, sigma_T, sigma_shift)


def batch_guidance(A, eta, smax=None):
    A = as_matrix(A)
    if smax is None:
        smax = spectral_norm(A.values)
    ratio = smax**2 / A.frob_norm_sq
    cap = 1.0 / ratio
    return {
        "H_eta": 2.0 / eta + 2.0 * (1.0 - 1.0 / eta) * ratio,
        "H_1": 2.0,
        "H_inf": 2.0 * ratio,
        "speedup_cap": cap,
        "recommended_eta_cap": int(math.ceil(cap - 1e-12)),
    }


def complexity_table(A, gamma, eta, eps_target, smax=None):
    """Iteration complexities and per-iteration costs of RSK, RSKA (uniform ``alpha*``) and linearized Bregman."""
    A = as_matrix(A)
    if smax is None:
        smax = spectral_norm(A.values)
    if not (gamma > 0 and eta >= 1 and 0 < eps_target < 1):
        raise ValueError("need gamma > 0, eta >= 1 and 0 < eps_target < 1")
    log_term = math.log(1.0 / eps_target)
    _, L_star = optimal_alpha("uniform", eta, smax, A.frob_norm)
    return {
        "iterations": {
            "RSK": 2.0 * gamma * A.frob_norm_sq * log_term,
            "RSKA": gamma * A.frob_norm_sq / L_star * log_term,
            "LinBreg": 2.0 * gamma * smax**2 * log_term,
        },
        "row_accesses_per_iteration": {"RSK": 1, "RSKA": int(eta), "LinBreg": A.m},
        "flops_per_iteration": {"RSK": A.n, "RSKA": int(eta) * A.n, "LinBreg": A.m * A.n},
    }


def certify(A, eta, xhat=None, lam=0.0, weights=None, alpha=None, gamma=None, max_cols=16):
    """Assemble a :class:`RateCertificate` for ``A``.

    ``weights=None`` selects the uniform regime with ``alpha*``.  Otherwise
    the general regime is used with ``sigma_w = max(weights)``; ``alpha``
    (the coupling constant of the scheme) is then required for ``q``.
    ``gamma`` is computed from ``xhat`` unless given; if neither is
    available the certificate carries ``nan`` for ``gamma`` and ``q``.
    """
    A = as_matrix(A)
    smax = spectral_norm(A.values)
    frob = A.frob_norm
    if gamma is None and xhat is not None:
        gamma = gamma_bound(A.values, xhat, lam, max_cols=max_cols)
    if weights is None:
        alpha_star, L_star = optimal_alpha("uniform", eta, smax, frob)
        use_alpha = alpha_star if alpha is None else alpha
        L = rate_L(use_alpha, eta, smax, frob, use_alpha)
        lo, hi = sigma_T_bounds(use_alpha, use_alpha, eta, smax, frob, scalar_weights=True)
        regime, extrapolated = "uniform", False
    else:
        sigma_w = float(np.max(weights))
        if eta > max(1.0, sigma_w / 2.0):
            alpha_star, L_star = optimal_alpha("general", eta, smax, frob, sigma_w)
        else:
            alpha_star, L_star = float("nan"), float("nan")
        use_alpha = alpha if alpha is not None else alpha_star
        L = rate_L(use_alpha, eta, smax, frob, sigma_w)
        lo, hi = sigma_T_bounds(sigma_w, use_alpha, eta, smax, frob)
        regime, extrapolated = "general", eta == 1
    q = float("nan")
    if gamma is not None:
        q = contraction_q(gamma, L, frob)
    return RateCertificate(
        alpha_star=alpha_star,
        L_star=L_star,
        q=q,
        gamma=float("nan") if gamma is None else float(gamma),
        sigma_T_lower=lo,
        sigma_T_upper=hi,
        eta=int(eta),
        regime=regime,
        extrapolated=extrapolated,
        alpha=use_alpha,
        L=L,
    )


def noiseless_bound(q, k, xhat, lam):
    """``2 q^k f(xhat)``, the bound on the expected squared error after ``k`` steps."""
    return 2.0 * q**k * f_value(xhat, lam)
