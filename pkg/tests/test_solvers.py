import io

import numpy as np
import pytest

from rska.core import soft_shrinkage, spectral_norm
from rska.exceptions import DimensionMismatch, InvalidEta, ZeroRow
from rska.problems import Problem, add_sphere_noise, generate_gaussian
from rska.core import DenseMatrix
from rska.sampling import build_variant
from rska.solvers import (
    SolverConfig,
    SolverState,
    linearized_bregman_step,
    rk_step,
    rsk_step,
    rska_step,
    run,
)


def _arrays(trace):
    a = trace.as_arrays()
    return [a[c] for c in ("k", "row_accesses", "rel_residual", "rel_error")] + [trace.x, trace.xstar]


def assert_same_trace(t1, t2):
    for u, v in zip(_arrays(t1), _arrays(t2)):
        np.testing.assert_array_equal(u, v)


def test_rk_step_projects_onto_row(small_problem):
    p = small_problem
    state = SolverState.zeros(p.n)
    nxt = rk_step(state, p.A, p.b, 4)
    assert p.A.values[4] @ nxt.x == pytest.approx(p.b[4], rel=1e-12)


def test_rsk_step_keeps_primal_dual_pair(small_problem):
    p = small_problem
    state = SolverState.zeros(p.n)
    for i in range(5):
        state = rsk_step(state, p.A, p.b, i, 1.0, 0.5)
    np.testing.assert_array_equal(state.x, soft_shrinkage(state.xstar, 0.5))
    assert state.k == 5


def test_rska_step_averages_rows(small_problem):
    p = small_problem
    sc = build_variant(p.A, "v1")
    state = SolverState(np.zeros(p.n), np.zeros(p.n))
    batch = np.array([1, 7, 7])
    nxt = rska_step(state, p.A, p.b, batch, sc, 0.0)
    A = p.A.values
    expected = sum(p.b[i] / (A[i] @ A[i]) * A[i] for i in batch) / 3
    np.testing.assert_allclose(nxt.xstar, expected, rtol=1e-13)


def test_step_dimension_errors(small_problem):
    p = small_problem
    sc = build_variant(p.A, "v1")
    with pytest.raises(DimensionMismatch):
        rska_step(SolverState.zeros(p.n + 1), p.A, p.b, np.array([0]), sc, 1.0)
    with pytest.raises(DimensionMismatch):
        rska_step(SolverState.zeros(p.n), p.A, p.b, np.array([], dtype=int), sc, 1.0)


def test_specialization_chain(small_problem):
    common = dict(max_iters=150, seed=4)
    rska = run(SolverConfig(method="RSKA", variant="v1", eta=1, lam=0.8, **common), small_problem)
    rsk = run(SolverConfig(method="RSK", lam=0.8, **common), small_problem)
    assert_same_trace(rska, rsk)
    rsk0 = run(SolverConfig(method="RSK", lam=0.0, **common), small_problem)
    rk = run(SolverConfig(method="RK", **common), small_problem)
    assert_same_trace(rsk0, rk)


def test_run_is_deterministic(small_problem):
    cfg = SolverConfig(method="RSKA", variant="v4", eta=4, lam=1.0, max_iters=100, seed=9)
    assert_same_trace(run(cfg, small_problem), run(cfg, small_problem))


def test_linearized_bregman_converges(small_problem):
    trace = run(SolverConfig(method="LinBreg", lam=0.5, max_iters=20000, residual_tol=1e-8), small_problem)
    assert trace.status == "Converged"
    assert trace.row_accesses[-1] == trace.k[-1] * small_problem.m


def test_lin_breg_step_formula(small_problem):
    p = small_problem
    s = spectral_norm(p.A.values)
    nxt = linearized_bregman_step(SolverState.zeros(p.n), p.A, p.b, 0.3, s)
    np.testing.assert_allclose(nxt.xstar, p.A.values.T @ p.b / s**2, rtol=1e-13)


@pytest.mark.parametrize("method", ["RK", "RSK", "RSKA"])
def test_methods_converge_on_tall_system(method):
    p = generate_gaussian(60, 15, 5, seed=2)
    cfg = SolverConfig(method=method, lam=0.5 if method != "RK" else 0.0, eta=1 if method != "RSKA" else 6,
                       variant="v2", max_iters=20000, residual_tol=1e-10, seed=1)
    trace = run(cfg, p)
    assert trace.status == "Converged"
    np.testing.assert_allclose(trace.x, p.xhat, atol=1e-7)


def test_record_every_and_last_iteration(small_problem):
    trace = run(SolverConfig(method="RSK", max_iters=23, record_every=5), small_problem)
    assert trace.k == [0, 5, 10, 15, 20, 23]
    assert trace.status == "MaxIters"


def test_divergence_status(small_problem):
    trace = run(SolverConfig(method="RSKA", eta=4, alpha=60.0, max_iters=5000, lam=0.1), small_problem)
    assert trace.status == "Diverged"
    assert trace.rel_residual[-1] > 1e3 * trace.rel_residual[0] or not np.isfinite(trace.rel_residual[-1])


def test_noisy_rhs_is_used():
    p = add_sphere_noise(generate_gaussian(40, 10, 3, seed=0), 0.5, seed=0)
    t_noisy = run(SolverConfig(method="RK", max_iters=3000), p)
    t_clean = run(SolverConfig(method="RK", max_iters=3000, use_noisy=False), p)
    assert t_clean.rel_residual[-1] < 1e-8 < t_noisy.rel_residual[-1]


def test_config_validation():
    with pytest.raises(InvalidEta):
        SolverConfig(method="RSK", eta=3)
    with pytest.raises(InvalidEta):
        SolverConfig(eta=0)
    with pytest.raises(ValueError):
        SolverConfig(method="CG")
    with pytest.raises(ValueError):
        SolverConfig(lam=-1.0)


def test_zero_row_rejected():
    A = DenseMatrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ZeroRow):
        run(SolverConfig(method="RK"), Problem(A=A, b=np.array([1.0, 0.0])))


def test_trace_csv(small_problem):
    trace = run(SolverConfig(method="RSK", max_iters=3), small_problem)
    text = trace.to_csv(include_timing=False)
    lines = text.splitlines()
    assert lines[0] == "k,row_accesses,rel_residual,rel_error"
    assert len(lines) == 5
    assert float(lines[2].split(",")[2]) == trace.rel_residual[1]
    buf = io.StringIO()
    trace.to_csv(buf)
    assert buf.getvalue().splitlines()[0].endswith("wall_ns")
