"""Self-checks of the theory against brute force, run by ``rska verify``.

Each check returns a :class:`CheckResult`; none of them raise on a failed
comparison, so a caller can report every violation at once.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .core import as_matrix, bregman_distance, f_value, sigma_tilde_min, soft_shrinkage, spectral_norm
from .problems import generate_gaussian
from .sampling import (
    build_variant,
    expected_sampling_matrix,
    sample_batch,
    sampling_matrix,
    second_moment_matrix,
)
from .solvers import SolverConfig, SolverState, rska_step, rsk_step, run
from .theory import gamma_bound, optimal_alpha, sigma_max_T, t_matrix


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _all_batches(m, eta):
    return itertools.product(range(m), repeat=eta)


def enumerate_moments(scheme, A, eta):
    """Exact ``E[M]`` and ``E[M^T A A^T M]`` by summing over all ``m**eta`` batches."""
    A_ = np.asarray(A, dtype=np.float64)
    AAt = A_ @ A_.T
    m = A_.shape[0]
    EM = np.zeros((m, m))
    EM2 = np.zeros((m, m))
    for batch in _all_batches(m, eta):
        batch = np.array(batch)
        prob = float(np.prod(scheme.probabilities[batch]))
        M = sampling_matrix(scheme, A, batch)
        EM += prob * M
        EM2 += prob * (M.T @ AAt @ M)
    return EM, EM2


def check_moments(seed=0, m=4, n=3, eta=2, draws=100_000, tol=1e-12, mc_tol=1e-2):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    A_dm = as_matrix(A)
    AAt = A @ A.T
    worst_exact, worst_mc = 0.0, 0.0
    for variant in ("v1", "v2", "v3", "v4"):
        scheme = build_variant(A, variant, eta, seed)
        EM, EM2 = enumerate_moments(scheme, A, eta)
        closed1 = expected_sampling_matrix(scheme, A)
        closed2 = second_moment_matrix(scheme, A, eta)
        worst_exact = max(worst_exact, np.abs(EM - closed1).max(), np.abs(EM2 - closed2).max())
        if draws:
            # One call draws the same uniforms as ``draws`` calls of size eta.
            batches = sample_batch(scheme, eta * draws, np.random.default_rng(seed)).reshape(draws, eta)
            d = np.zeros((draws, m))
            scale = scheme.weights / A_dm.row_norms_sq / eta
            for j in range(eta):
                np.add.at(d, (np.arange(draws), batches[:, j]), scale[batches[:, j]])
            # Each realised M is diagonal with entries d[k].
            S1 = np.diag(d.mean(axis=0))
            S2 = (d.T @ d) / draws * AAt
            rel = max(
                np.linalg.norm(S1 - closed1) / np.linalg.norm(closed1),
                np.linalg.norm(S2 - closed2) / np.linalg.norm(closed2),
            )
            worst_mc = max(worst_mc, rel)
    ok = worst_exact <= tol and (not draws or worst_mc <= mc_tol)
    return CheckResult(
        "moment formulas",
        bool(ok),
        f"max enumeration error {worst_exact:.2e} (tol {tol:g}), Monte-Carlo relative error {worst_mc:.2e} (tol {mc_tol:g})",
    )


def _trace_key(trace):
    arrs = trace.as_arrays()
    return (arrs["k"], arrs["row_accesses"], arrs["rel_residual"], arrs["rel_error"], trace.x, trace.xstar)


def _same(t1, t2):
    return all(np.array_equal(a, b) for a, b in zip(_trace_key(t1), _trace_key(t2)))


def check_specialization(n_instances=10, iters=200, m=30, n=20, s=5, lam=1.0):
    bad = []
    for seed in range(n_instances):
        problem = generate_gaussian(m, n, s, seed)
        common = dict(max_iters=iters, seed=seed)
        rska = run(SolverConfig(method="RSKA", variant="v1", eta=1, lam=lam, **common), problem)
        rsk = run(SolverConfig(method="RSK", lam=lam, **common), problem)
        rska0 = run(SolverConfig(method="RSKA", variant="v1", eta=1, lam=0.0, **common), problem)
        rsk0 = run(SolverConfig(method="RSK", lam=0.0, **common), problem)
        rk = run(SolverConfig(method="RK", lam=0.0, **common), problem)
        if not (_same(rska, rsk) and _same(rska0, rsk0) and _same(rsk0, rk)):
            bad.append(seed)
    return CheckResult(
        "specialization chain",
        not bad,
        f"RSKA(eta=1,v1) == RSK and RSK(lam=0) == RK bit-for-bit on {n_instances} instances x {iters} iterations"
        + (f"; mismatching seeds {bad}" if bad else ""),
    )


def check_sigma_T(n_cases=50, seed=0, tol=1e-10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        m, n = rng.integers(2, 12, size=2)
        A = rng.standard_normal((m, n))
        eta = int(rng.integers(1, 20))
        alpha = float(rng.uniform(0.1, 2.0 * eta))
        closed, _ = sigma_max_T(alpha, A, alpha, eta)
        svd = np.linalg.svd(t_matrix(alpha, A, alpha, eta), compute_uv=False)[0]
        worst = max(worst, abs(closed - svd))
    return CheckResult("exact sigma_max(T)", worst <= tol, f"max |closed form - SVD| {worst:.2e} over {n_cases} cases (tol {tol:g})")


def expected_next_bregman(state, A, b, scheme, eta, lam, y):
    """Exact ``E_k[D(x_{k+1}, y)]`` over all batches."""
    total = 0.0
    for batch in _all_batches(scheme.m, eta):
        batch = np.array(batch)
        prob = float(np.prod(scheme.probabilities[batch]))
        nxt = rska_step(state, A, b, batch, scheme, lam)
        total += prob * bregman_distance(nxt.x, nxt.xstar, y, lam)
    return total


def check_expected_descent(n_states=20, seed=0, m=4, n=3, eta=2, lam=0.5, tol=1e-10):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    count = 0
    for variant in ("v1", "v2", "v4"):
        for i in range(n_states):
            problem = generate_gaussian(m, n, n, seed + 100 * i)
            A = problem.A
            scheme = build_variant(A, variant, eta, seed + i)
            alpha = scheme.alpha
            sig = np.linalg.svd(t_matrix(scheme.weights, A, alpha, eta), compute_uv=False)[0]
            xstar = rng.standard_normal(n) * 2.0
            state = SolverState(soft_shrinkage(xstar, lam), xstar)
            lhs = expected_next_bregman(state, A, problem.b, scheme, eta, lam, problem.xhat)
            r = A.values @ state.x - problem.b
            rhs = bregman_distance(state.x, xstar, problem.xhat, lam) - alpha / A.frob_norm_sq * (1.0 - sig) * (r @ r)
            worst = max(worst, lhs - rhs)
            count += 1
    return CheckResult(
        "expected descent",
        worst <= tol,
        f"max E[D_next] - bound {worst:.2e} over {count} states (tol {tol:g})",
    )


def check_gamma_trajectories(n_instances=5, iters=300, m=8, n=5, lam=1.0, eta=3, seed=0, rtol=1e-9):
    worst = -np.inf
    for i in range(n_instances):
        problem = generate_gaussian(m, n, n, seed + i)
        A, b, xhat = problem.A, problem.b, problem.xhat
        gamma = gamma_bound(A.values, xhat, lam, sigma_tilde=sigma_tilde_min(A.values))
        floor = 64 * np.finfo(float).eps * f_value(xhat, lam)
        for method in ("RSK", "RSKA"):
            scheme = build_variant(A, "v1" if method == "RSK" else "v2", eta if method == "RSKA" else 1, i)
            rng = np.random.default_rng(i)
            state = SolverState.zeros(n)
            for _ in range(iters):
                if method == "RSK":
                    row = int(sample_batch(scheme, 1, rng)[0])
                    state = rsk_step(state, A, b, row, scheme.weights[row], lam)
                else:
                    state = rska_step(state, A, b, sample_batch(scheme, eta, rng), scheme, lam)
                r = A.values @ state.x - b
                D = bregman_distance(state.x, state.xstar, xhat, lam)
                bound = gamma * (r @ r)
                # The Fenchel-form distance carries roundoff of order eps * f(xhat).
                slack = rtol * bound + floor
                worst = max(worst, (D - bound) / slack)
    return CheckResult(
        "gamma certificate along trajectories",
        worst <= 1.0,
        f"max (D - gamma*||r||^2) / (rtol*gamma*||r||^2 + 64 eps f(xhat)) = {worst:.2e} over {n_instances} instances (rtol {rtol:g}, must be <= 1)",
    )


def check_optimal_alpha(seed=0, n_cases=20):
    rng = np.random.default_rng(seed)
    from .theory import rate_L

    worst = -np.inf
    for _ in range(n_cases):
        A = rng.standard_normal(tuple(rng.integers(3, 30, size=2)))
        smax, frob = spectral_norm(A), np.linalg.norm(A)
        eta = int(rng.integers(1, 40))
        a_star, L_star = optimal_alpha("uniform", eta, smax, frob)
        grid = np.linspace(1e-3, 2 * a_star, 2001)
        L = rate_L(grid, eta, smax, frob, grid)
        worst = max(worst, float(L.max() - L_star))
    return CheckResult("alpha* maximises L", worst <= 1e-12, f"max grid L - L* {worst:.2e}")


def run_all(quick=False):
    """Run every check; ``quick`` shrinks Monte-Carlo and instance counts."""
    return [
        check_moments(draws=10_000 if quick else 100_000, mc_tol=3e-2 if quick else 1e-2),
        check_specialization(n_instances=3 if quick else 10, iters=100 if quick else 200),
        check_sigma_T(n_cases=20 if quick else 50),
        check_expected_descent(n_states=5 if quick else 20),
        check_gamma_trajectories(n_instances=2 if quick else 5, iters=100 if quick else 300),
        check_optimal_alpha(),
    ]


def noiseless_mc_bound_ratio(q, means, xhat, lam):
    """Largest ratio of a Monte-Carlo mean Bregman curve to ``q^k f(xhat)``."""
    k = np.arange(means.size)
    return float(np.max(means / (q**k * f_value(xhat, lam))))
