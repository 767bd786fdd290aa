import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rska.estimator import SparseKaczmarzRegressor
from rska.exceptions import ZeroRhs
from rska.problems import generate_gaussian


@pytest.fixture
def data():
    p = generate_gaussian(80, 20, 5, seed=0)
    return p.A.values, p.b, p.xhat


def test_fit_predict(data):
    X, y, xhat = data
    est = SparseKaczmarzRegressor(lam=0.5, max_iter=5000, tol=1e-10).fit(X, y)
    assert est.status_ == "Converged"
    np.testing.assert_allclose(est.coef_, xhat, atol=1e-8)
    np.testing.assert_allclose(est.predict(X), y, atol=1e-7)
    assert est.score(X, y) > 0.999999
    assert est.eta_ == 3


def test_params_roundtrip():
    est = SparseKaczmarzRegressor(method="RSK", lam=2.0, random_state=4)
    params = clone(est).get_params()
    assert params["method"] == "RSK" and params["lam"] == 2.0 and params["random_state"] == 4
    est.set_params(eta=5)
    assert est.eta == 5


def test_matches_solver(data):
    from rska.solvers import SolverConfig, run
    from types import SimpleNamespace

    X, y, _ = data
    est = SparseKaczmarzRegressor(method="RSKA", variant="v4", eta=4, lam=1.0, max_iter=300, tol=0.0, random_state=2).fit(X, y)
    tr = run(SolverConfig(method="RSKA", variant="v4", eta=4, lam=1.0, max_iters=300, seed=2), SimpleNamespace(A=X, b=y))
    np.testing.assert_array_equal(est.coef_, tr.x)


def test_errors(data):
    X, y, _ = data
    with pytest.raises(NotFittedError):
        SparseKaczmarzRegressor().predict(X)
    with pytest.raises(ValueError):
        SparseKaczmarzRegressor(method="nope").fit(X, y)
    with pytest.raises(ValueError):
        SparseKaczmarzRegressor(lam=-1).fit(X, y)
    with pytest.raises(TypeError):
        SparseKaczmarzRegressor(eta=2.5).fit(X, y)
    with pytest.raises(ZeroRhs):
        SparseKaczmarzRegressor().fit(X, np.zeros_like(y))
    with pytest.raises(ValueError):
        SparseKaczmarzRegressor().fit(X, y[:-1])
    est = SparseKaczmarzRegressor(max_iter=5).fit(X, y)
    with pytest.raises(ValueError):
        est.predict(X[:, :3])
