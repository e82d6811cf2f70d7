import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from costaware_bo.gp import (
    NOISE,
    Dataset,
    GPError,
    GPFitError,
    GridTooLargeError,
    KernelSpec,
    estimate_U,
    fit_hyperparameters,
    posterior,
    sample_posterior_paths,
    sample_prior_function,
)


def matern52_direct(r, ls, var):
    # textbook form, written out independently of the library
    a = math.sqrt(5.0) * r / ls
    return var * (1.0 + a + a * a / 3.0) * math.exp(-a)


def test_kernel_matches_textbook_formula():
    k = KernelSpec(0.3, 2.0, 0.0)
    x = np.array([[0.0], [0.1], [0.55]])
    K = k(x)
    for i in range(3):
        for j in range(3):
            assert K[i, j] == pytest.approx(matern52_direct(abs(x[i, 0] - x[j, 0]), 0.3, 2.0), rel=1e-12)


def test_kernel_rejects_bad_parameters():
    with pytest.raises(ValueError):
        KernelSpec(0.0, 1.0)
    with pytest.raises(ValueError):
        KernelSpec(0.1, -1.0)


def test_empty_data_gives_prior():
    k = KernelSpec(0.2, 1.5, 0.3)
    cands = np.linspace(0, 1, 7).reshape(-1, 1)
    st_ = posterior(Dataset(np.zeros((0, 1)), []), k, cands)
    np.testing.assert_allclose(st_.mean, 0.3)
    np.testing.assert_allclose(st_.std, math.sqrt(1.5))


def test_two_point_conditioning_matches_hand_rolled_oracle():
    k = KernelSpec(0.25, 1.3, 0.2)
    x1, x2, xs = 0.1, 0.6, 0.35
    y = np.array([0.5, -0.4])
    kern = lambda a, b: matern52_direct(abs(a - b), 0.25, 1.3)
    K = np.array([[kern(x1, x1) + NOISE, kern(x1, x2)], [kern(x2, x1), kern(x2, x2) + NOISE]])
    ks = np.array([kern(xs, x1), kern(xs, x2)])
    det = K[0, 0] * K[1, 1] - K[0, 1] * K[1, 0]
    Kinv = np.array([[K[1, 1], -K[0, 1]], [-K[1, 0], K[0, 0]]]) / det
    mean = 0.2 + ks @ Kinv @ (y - 0.2)
    var = kern(xs, xs) - ks @ Kinv @ ks
    st_ = posterior(Dataset([[x1], [x2]], y), k, np.array([[xs]]))
    assert abs(st_.mean[0] - mean) <= 1e-8
    assert abs(st_.std[0] - math.sqrt(var)) <= 1e-8


def test_interpolation_at_observed_points():
    rng = np.random.default_rng(0)
    # stratified, so points are separated relative to the lengthscale
    x = ((np.arange(15) + rng.uniform(0.2, 0.8, 15)) / 15).reshape(-1, 1)
    y = rng.normal(size=15)
    cands = np.vstack([x, rng.uniform(size=(50, 1))])
    st_ = posterior(Dataset(x, y), KernelSpec(0.1), cands)
    assert np.max(np.abs(st_.mean[:15] - y)) <= 1e-4
    assert np.max(st_.std[:15]) <= 1e-2
    assert np.all(st_.evaluated[:15]) and st_.incumbent == y.min()


def test_near_duplicate_points_survive_via_jitter():
    x = np.array([[0.3], [0.3 + 1e-9], [0.7]])
    st_ = posterior(Dataset(x, [0.1, 0.1, 0.5]), KernelSpec(0.2), np.linspace(0, 1, 11).reshape(-1, 1))
    assert np.all(np.isfinite(st_.mean)) and np.all(st_.std >= 0)


def test_cholesky_failure_reports_condition_estimate():
    x = np.array([[0.5], [0.5], [0.5]])
    with pytest.raises(GPError, match="condition"):
        # the jitter is lost to rounding next to a huge output scale
        posterior(Dataset(x, [0.0, 1.0, -1.0]), KernelSpec(1.0, 1e14), x)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6, unique=True), st.integers(0, 1000))
def test_std_nonnegative_and_finite(xs, seed):
    x = np.array(xs).reshape(-1, 1)
    if len(x) > 1 and np.min(np.diff(np.sort(x[:, 0]))) < 1e-3:
        return
    y = np.random.default_rng(seed).normal(size=len(x))
    st_ = posterior(Dataset(x, y), KernelSpec(0.2), np.linspace(0, 1, 41).reshape(-1, 1))
    assert np.all(st_.std >= 0) and not np.any(np.isnan(st_.std))


def test_fit_needs_two_points():
    with pytest.raises(GPFitError):
        fit_hyperparameters(Dataset([[0.5]], [1.0]))


def test_fit_zero_data_gives_zero_mean():
    k = fit_hyperparameters(Dataset([[0.0], [1.0]], [0.0, 0.0]))
    assert abs(k.mean_const) < 1e-8


def test_fit_is_deterministic():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(20, 1))
    y = np.sin(6 * x[:, 0])
    assert fit_hyperparameters(Dataset(x, y), seed=3) == fit_hyperparameters(Dataset(x, y), seed=3)


@pytest.mark.slow
def test_fit_recovers_lengthscale():
    grid = np.linspace(0, 1, 2001).reshape(-1, 1)
    hits = 0
    for s in range(50):
        f = sample_prior_function(KernelSpec(0.1), grid, s)
        idx = np.random.default_rng(1000 + s).choice(len(grid), 200, replace=False)
        k = fit_hyperparameters(Dataset(grid[idx], f[idx]), seed=s)
        hits += 0.05 <= k.lengthscale <= 0.2
    assert hits >= 45


def test_prior_draw_determinism_and_size_limit():
    grid = np.linspace(0, 1, 101).reshape(-1, 1)
    k = KernelSpec(0.1)
    np.testing.assert_array_equal(sample_prior_function(k, grid, 5), sample_prior_function(k, grid, 5))
    assert not np.array_equal(sample_prior_function(k, grid, 5), sample_prior_function(k, grid, 6))
    with pytest.raises(GridTooLargeError):
        sample_prior_function(k, np.random.default_rng(0).uniform(size=(20001, 2)), 0)


def test_prior_single_point_moments():
    k = KernelSpec(0.1, 4.0, 1.0)
    draws = np.array([sample_prior_function(k, [[0.3]], s)[0] for s in range(4000)])
    se = 2.0 / math.sqrt(len(draws))
    assert abs(draws.mean() - 1.0) <= 4 * se
    assert abs(draws.std() - 2.0) <= 0.1


def test_prior_draw_variance_on_dense_grid():
    grid = np.linspace(0, 1, 10001).reshape(-1, 1)
    k = KernelSpec(0.1)
    v = [np.var(sample_prior_function(k, grid, s)) for s in range(50)]
    assert 0.5 <= np.mean(v) <= 1.5


def test_state_space_draws_match_dense_covariance():
    # the 1-d sampler must reproduce the kernel's covariance
    grid = np.array([0.0, 0.03, 0.1, 0.4]).reshape(-1, 1)
    k = KernelSpec(0.1, 1.0)
    draws = sample_posterior_paths(Dataset(np.zeros((0, 1)), []), k, grid, 40000, 0)
    emp = np.cov(draws.T)
    np.testing.assert_allclose(emp, k(grid), atol=0.03)


def test_posterior_paths_interpolate_and_match_marginals():
    rng = np.random.default_rng(2)
    x = rng.uniform(size=(6, 1))
    y = np.cos(5 * x[:, 0])
    cands = np.vstack([x, np.linspace(0, 1, 60).reshape(-1, 1)])
    data = Dataset(x, y)
    k = KernelSpec(0.15)
    paths = sample_posterior_paths(data, k, cands, 10000, 11)
    assert np.max(np.abs(paths[:, :6] - y)) <= 3e-2
    st_ = posterior(data, k, cands)
    se = np.maximum(st_.std, 1e-12) / math.sqrt(10000)
    z = np.abs(paths.mean(axis=0) - st_.mean) / se
    assert np.all(z[6:] <= 4.0)
    assert np.allclose(paths.std(axis=0)[6:], st_.std[6:], rtol=0.05)


def test_zero_observation_paths_are_prior_draws():
    grid = np.linspace(0, 1, 5).reshape(-1, 1)
    k = KernelSpec(0.3, 1.0, 0.5)
    paths = sample_posterior_paths(Dataset(np.zeros((0, 1)), []), k, grid, 20000, 0)
    assert abs(paths.mean() - 0.5) < 0.03
    np.testing.assert_allclose(paths.var(axis=0), 1.0, atol=0.05)


def test_estimate_U_degenerate_cases():
    U, se = estimate_U(KernelSpec(0.1, 1.0, 0.0), [[0.5]], 200, seed=0)
    assert U == 0.0
    U, _ = estimate_U(KernelSpec(0.1, 1e-12, 0.0), np.linspace(0, 1, 101).reshape(-1, 1), 200, seed=0)
    assert abs(U) < 1e-4
    with pytest.raises(ValueError):
        estimate_U(KernelSpec(0.1), [[0.5]], 50)


def test_estimate_U_reproducible_across_seeds():
    grid = np.linspace(0, 1, 1001).reshape(-1, 1)
    a, sa = estimate_U(KernelSpec(0.1), grid, 2000, seed=1)
    b, sb = estimate_U(KernelSpec(0.1), grid, 2000, seed=2)
    assert abs(a - b) <= 3 * math.hypot(sa, sb)
    assert 1.0 < a < 2.5
