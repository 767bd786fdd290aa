"""scikit-learn style wrapper: ``fit(X, y)`` solves ``X coef = y`` for a sparse ``coef``."""

from types import SimpleNamespace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ZeroRhs
from .problems import default_eta
from .sampling import VARIANTS
from .solvers import METHODS, SolverConfig, run
from .validation import check_choice, check_int, check_scalar


class SparseKaczmarzRegressor(RegressorMixin, BaseEstimator):
    """Sparse solution of a linear system by (averaged) randomized Kaczmarz.

    Approximates ``argmin lam*||w||_1 + 0.5*||w||^2  s.t.  X w = y``.
    ``eta=None`` picks ``1 + min(m, n) // 10`` for RSKA.  No intercept is
    fitted; center the data first if one is needed.

    Attributes set by ``fit``: ``coef_``, ``dual_coef_`` (the unshrunk
    iterate), ``n_iter_``, ``status_``, ``trace_``, ``eta_``.
    """

    def __init__(
        self,
        method="RSKA",
        variant="v2",
        lam=1.0,
        eta=None,
        alpha=None,
        max_iter=1000,
        tol=1e-6,
        random_state=0,
        record_every=1,
    ):
        self.method = method
        self.variant = variant
        self.lam = lam
        self.eta = eta
        self.alpha = alpha
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.record_every = record_every

    def _config(self, m, n):
        check_choice(self.method, METHODS, "method")
        check_choice(self.variant, VARIANTS, "variant")
        lam = check_scalar(self.lam, "lam", minimum=0.0)
        eta = check_int(self.eta, "eta", minimum=1, allow_none=True)
        if eta is None:
            eta = default_eta(m, n) if self.method == "RSKA" else 1
        seed = check_int(self.random_state, "random_state", minimum=0)
        return SolverConfig(
            method=self.method,
            lam=lam,
            eta=eta,
            variant=self.variant,
            alpha=check_scalar(self.alpha, "alpha", minimum=0.0, strict=True, allow_none=True),
            max_iters=check_int(self.max_iter, "max_iter", minimum=1),
            residual_tol=check_scalar(self.tol, "tol", minimum=0.0),
            seed=seed,
            record_every=check_int(self.record_every, "record_every", minimum=1),
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if not np.any(y):
            raise ZeroRhs("y is identically zero; the minimum-norm solution is 0")
        config = self._config(*X.shape)
        self.trace_ = run(config, SimpleNamespace(A=X, b=y))
        self.coef_ = self.trace_.x
        self.dual_coef_ = self.trace_.xstar
        self.n_iter_ = self.trace_.n_iter
        self.status_ = self.trace_.status
        self.eta_ = config.eta
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_
