import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rska.checks import enumerate_moments
from rska.core import spectral_norm
from rska.exceptions import DimensionMismatch, InvalidEta
from rska.sampling import (
    WEIGHT_FLOOR,
    SamplingScheme,
    build_variant,
    expected_sampling_matrix,
    sample_batch,
    sampling_matrix,
    second_moment_matrix,
    verify_coupling,
)
from rska.theory import optimal_alpha


@pytest.fixture
def A(rng):
    return rng.standard_normal((6, 4))


def test_v1_standard_probabilities(A):
    sc = build_variant(A, "v1")
    np.testing.assert_allclose(sc.probabilities, (A**2).sum(1) / (A**2).sum(), rtol=1e-14)
    assert sc.alpha == 1.0 and sc.uniform_weights
    assert verify_coupling(sc, A)


def test_v2_uses_alpha_star(A):
    sc = build_variant(A, "v2", eta=3)
    a_star, _ = optimal_alpha("uniform", 3, spectral_norm(A), np.linalg.norm(A))
    assert sc.alpha == pytest.approx(a_star, rel=1e-14)
    np.testing.assert_array_equal(sc.weights, np.full(6, sc.alpha))
    assert verify_coupling(sc, A)


def test_v4_coupling_alpha(A):
    sc = build_variant(A, "v4", seed=5)
    rn = (A**2).sum(1)
    expected = (A**2).sum() / np.sum(rn / sc.weights)
    assert sc.alpha == pytest.approx(expected, rel=1e-13)
    assert verify_coupling(sc, A)


def test_v3_is_uncoupled(A):
    sc = build_variant(A, "v3", seed=5)
    assert not sc.coupled
    assert not verify_coupling(sc, A)
    assert np.all(sc.weights >= WEIGHT_FLOOR)


def test_weights_depend_only_on_seed(A):
    np.testing.assert_array_equal(build_variant(A, "v4", seed=2).weights, build_variant(A, "v3", seed=2).weights)
    assert not np.array_equal(build_variant(A, "v4", seed=2).weights, build_variant(A, "v4", seed=3).weights)


def test_scheme_validation():
    with pytest.raises(ValueError):
        SamplingScheme([0.5, 0.6], [1.0, 1.0], 1.0, True)
    with pytest.raises(ValueError):
        SamplingScheme([0.5, 0.5], [1.0, 0.0], 1.0, True)
    with pytest.raises(DimensionMismatch):
        SamplingScheme([0.5, 0.5], [1.0], 1.0, True)
    with pytest.raises(ValueError):
        build_variant(np.eye(2), "v9")
    with pytest.raises(InvalidEta):
        build_variant(np.eye(2), "v1", eta=0)


def test_sample_batch_is_reproducible(A):
    sc = build_variant(A, "v1")
    a = sample_batch(sc, 7, np.random.default_rng(1))
    b = sample_batch(sc, 7, np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)
    assert a.shape == (7,) and a.min() >= 0 and a.max() < 6


def test_sample_batch_frequencies(A):
    sc = build_variant(A, "v4", seed=1)
    draws = sample_batch(sc, 200_000, np.random.default_rng(0))
    freq = np.bincount(draws, minlength=6) / draws.size
    np.testing.assert_allclose(freq, sc.probabilities, atol=4 * np.sqrt(0.25 / draws.size))


def test_zero_probability_row_never_drawn():
    sc = SamplingScheme([0.5, 0.0, 0.5], [1.0, 1.0, 1.0], 1.0, False)
    draws = sample_batch(sc, 10_000, np.random.default_rng(0))
    assert not np.any(draws == 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(1, 4), st.integers(1, 3), st.sampled_from(["v1", "v2", "v3", "v4"]), st.integers(0, 1000))
def test_moments_match_enumeration(m, n, eta, variant, seed):
    A = np.random.default_rng(seed).standard_normal((m, n))
    sc = build_variant(A, variant, eta, seed)
    EM, EM2 = enumerate_moments(sc, A, eta)
    np.testing.assert_allclose(EM, expected_sampling_matrix(sc, A), atol=1e-12)
    np.testing.assert_allclose(EM2, second_moment_matrix(sc, A, eta), atol=1e-12)


def test_coupled_mean_is_scaled_identity(A):
    # Under coupling E[M] = PWD^-2 = (alpha/||A||_F^2) I.
    sc = build_variant(A, "v4", seed=0)
    np.testing.assert_allclose(expected_sampling_matrix(sc, A), sc.alpha / (A**2).sum() * np.eye(6), rtol=1e-12)


def test_sampling_matrix_counts_repeats(A):
    sc = build_variant(A, "v1")
    M = sampling_matrix(sc, A, np.array([2, 2, 0]))
    rn = (A**2).sum(1)
    assert M[2, 2] == pytest.approx(2 / 3 / rn[2]) and M[0, 0] == pytest.approx(1 / 3 / rn[0])
    assert np.count_nonzero(M) == 2
