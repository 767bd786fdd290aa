"""Row-sampling distributions, weight schemes and their moment formulas."""

from dataclasses import dataclass, field

import numpy as np

from .core import as_matrix
from .exceptions import DimensionMismatch, InvalidEta

VARIANTS = ("v1", "v2", "v3", "v4")

# Floor for uniform(0, 1) weights in v3/v4; w -> 0 makes v4 probabilities degenerate.
WEIGHT_FLOOR = 1e-3


@dataclass(frozen=True)
class SamplingScheme:
    """Probabilities ``p``, weights ``w`` and the relaxation ``alpha`` tying them.

    ``coupled`` records whether ``p_i w_i / ||a_i||^2 == alpha / ||A||_F^2``
    holds for every row.  ``variant`` and ``seed`` are provenance only.
    """

    probabilities: np.ndarray
    weights: np.ndarray
    alpha: float
    coupled: bool
    variant: str = "custom"
    seed: int = None
    cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=np.float64)
        w = np.array(self.weights, dtype=np.float64)
        if p.ndim != 1 or p.shape != w.shape:
            raise DimensionMismatch("probabilities and weights must be 1-D of equal length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        cdf = np.cumsum(p)
        cdf /= cdf[-1]
        cdf[-1] = 1.0
        for arr in (p, w, cdf):
            arr.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "cdf", cdf)

    @property
    def m(self):
        return self.probabilities.shape[0]

    @property
    def uniform_weights(self):
        return bool(np.all(self.weights == self.weights[0]))

    def to_record(self):
        return {
            "variant": self.variant,
            "alpha": self.alpha,
            "seed": self.seed,
            "coupled": self.coupled,
        }


def standard_probabilities(A):
    """``p_i = ||a_i||^2 / ||A||_F^2``."""
    A = as_matrix(A)
    return A.row_norms_sq / A.frob_norm_sq


def coupled_uniform_scheme(A, alpha, variant="custom", seed=None):
    """Weights ``alpha * I`` with standard probabilities; coupled by construction."""
    A = as_matrix(A).require_nonzero_rows()
    return SamplingScheme(
        probabilities=standard_probabilities(A),
        weights=np.full(A.m, float(alpha)),
        alpha=alpha,
        coupled=True,
        variant=variant,
        seed=seed,
    )


def weight_rng(seed):
    # Kept separate from the per-trial sampling stream, which is default_rng(seed).
    return np.random.default_rng([int(seed), 0x5EED])


def random_weights(m, seed):
    return np.maximum(weight_rng(seed).uniform(0.0, 1.0, size=m), WEIGHT_FLOOR)


def build_variant(A, variant, eta=1, seed=0):
    """Construct one of the four RSKA schemes.

    ``v1`` unit weights; ``v2`` uniform weights at the optimal relaxation for
    batch size ``eta``; ``v3`` random weights with standard probabilities
    (uncoupled); ``v4`` random weights with ``p_i`` proportional to
    ``||a_i||^2 / w_i``.

    For ``v4`` the returned ``alpha`` is ``||A||_F^2 / sum_j ||a_j||^2 / w_j``,
    the value for which ``p_i w_i / ||a_i||^2 = alpha / ||A||_F^2``.
    """
    from .theory import optimal_alpha

    A = as_matrix(A).require_nonzero_rows()
    if eta < 1:
        raise InvalidEta("eta must be >= 1")
    if variant == "v1":
        return coupled_uniform_scheme(A, 1.0, variant="v1", seed=seed)
    if variant == "v2":
        from .core import spectral_norm

        alpha_star, _ = optimal_alpha(
            "uniform", eta, spectral_norm(A.values), A.frob_norm
        )
        return coupled_uniform_scheme(A, alpha_star, variant="v2", seed=seed)
    if variant == "v3":
        w = random_weights(A.m, seed)
        p = standard_probabilities(A)
        # No single alpha couples these; report the mean ratio for reference.
        ratio = p * w / A.row_norms_sq * A.frob_norm_sq
        return SamplingScheme(p, w, float(ratio.mean()), coupled=False, variant="v3", seed=seed)
    if variant == "v4":
        w = random_weights(A.m, seed)
        scores = A.row_norms_sq / w
        total = scores.sum()
        p = scores / total
        return SamplingScheme(p, w, A.frob_norm_sq / total, coupled=True, variant="v4", seed=seed)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def verify_coupling(scheme, A, tol=1e-10):
    """True iff ``max_i |p_i w_i / ||a_i||^2 - alpha/||A||_F^2| <= tol * alpha/||A||_F^2``."""
    A = as_matrix(A)
    if scheme.m != A.m:
        raise DimensionMismatch(f"scheme has {scheme.m} rows, A has {A.m}")
    target = scheme.alpha / A.frob_norm_sq
    lhs = scheme.probabilities * scheme.weights / A.row_norms_sq
    return bool(np.max(np.abs(lhs - target)) <= tol * target)


def sample_batch(scheme, eta, rng):
    """Draw ``eta`` row indices i.i.d. from ``scheme.probabilities`` (with replacement).

    Inverse-CDF sampling: exactly ``eta`` uniforms are consumed from ``rng``.
    """
    if eta < 1:
        raise InvalidEta("eta must be >= 1")
    u = rng.random(eta)
    return np.searchsorted(scheme.cdf, u, side="right")


def expected_sampling_matrix(scheme, A):
    """Diagonal ``P W D^-2``, the mean of the weighted sampling matrix."""
    A = as_matrix(A)
    if scheme.m != A.m:
        raise DimensionMismatch(f"scheme has {scheme.m} rows, A has {A.m}")
    return np.diag(scheme.probabilities * scheme.weights / A.row_norms_sq)


def second_moment_matrix(scheme, A, eta):
    """``E[(A^T M)^T (A^T M)] = (1/eta) P W^2 D^-2 + (1 - 1/eta) PWD^-2 A A^T PWD^-2``."""
    if eta < 1:
        raise InvalidEta("eta must be >= 1")
    A = as_matrix(A)
    if scheme.m != A.m:
        raise DimensionMismatch(f"scheme has {scheme.m} rows, A has {A.m}")
    pw = scheme.probabilities * scheme.weights / A.row_norms_sq
    first = np.diag(pw * scheme.weights) / eta
    AAt = A.values @ A.values.T
    return first + (1.0 - 1.0 / eta) * (pw[:, None] * AAt * pw[None, :])


def sampling_matrix(scheme, A, batch):
    """The realised ``M_k = (1/eta) sum_{i in batch} w_i e_i e_i^T / ||a_i||^2`` (dense)."""
    A = as_matrix(A)
    batch = np.asarray(batch)
    M = np.zeros((A.m, A.m))
    np.add.at(M, (batch, batch), scheme.weights[batch] / A.row_norms_sq[batch])
    return M / batch.size
