import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from costaware_bo.acquisition import (
    PBGIDState,
    beta_t,
    ei,
    lcb,
    log_ei,
    log_eipc,
    pbgi,
    pbgi_d_step,
    pbgi_index,
    thompson,
)
from costaware_bo.gp import Dataset, KernelSpec, PosteriorState

PHI0 = 1.0 / math.sqrt(2.0 * math.pi)


def make_state(mean, std, incumbent, evaluated=None, observed=None):
    n = len(mean)
    return PosteriorState(np.zeros((n, 1)), mean, std, incumbent, 1, evaluated, observed)


def mp_log_ei(mu, sigma, y):
    mpmath.mp.dps = 60
    z = mpmath.mpf(y - mu) / sigma
    pdf = mpmath.npdf(z)
    cdf = mpmath.ncdf(z)
    return float(mpmath.log(sigma * (z * cdf + pdf)))


def test_ei_degenerate_and_pinned_values():
    assert ei(1.0, 0.0, 1.5) == 0.5
    assert ei(1.0, 0.0, 0.5) == 0.0
    assert ei(0.0, 1.0, 0.0) == pytest.approx(PHI0, abs=1e-15)
    assert ei(10.0, 1.0, 0.0) < 1e-20


def test_ei_matches_monte_carlo():
    rng = np.random.default_rng(0)
    samples = np.maximum(0.0 - rng.standard_normal(10_000_000), 0.0)
    se = samples.std() / math.sqrt(len(samples))
    assert abs(samples.mean() - ei(0.0, 1.0, 0.0)) <= 4 * se


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(1e-3, 5), st.floats(-5, 5), st.floats(1e-3, 1))
def test_ei_strictly_increasing_in_threshold(mu, sigma, y, dy):
    # EI itself underflows deep in the tail, its log does not
    assert ei(mu, sigma, y + dy) >= ei(mu, sigma, y)
    assert log_ei(mu, sigma, y + dy) > log_ei(mu, sigma, y)


@pytest.mark.parametrize("z", [3.0, 0.0, -3.0, -5.9, -6.1, -8.0, -11.9, -12.1, -20.0, -40.0])
def test_log_ei_against_high_precision(z):
    assert log_ei(0.3, 0.7, 0.3 + 0.7 * z) == pytest.approx(mp_log_ei(0.3, 0.7, 0.3 + 0.7 * z), rel=1e-10, abs=1e-10)


def test_log_ei_zero_ei_is_minus_inf():
    assert log_ei(1.0, 0.0, 0.5) == -math.inf


def test_log_eipc_values():
    state = make_state([0.0, 0.0, 2.0], [1.0, 1.0, 0.0], 0.0)
    score = log_eipc(state, [1.0, math.e, 1.0])
    assert score.values[0] == pytest.approx(math.log(PHI0), abs=1e-12)
    assert score.values[0] - score.values[1] == pytest.approx(1.0, abs=1e-12)
    assert score.values[2] == -math.inf
    assert score.best_index == 0


def test_log_eipc_all_zero_ei():
    state = make_state([1.0, 2.0], [0.0, 0.0], 0.5)
    score = log_eipc(state, [1.0, 1.0])
    assert np.all(score.values == -math.inf) and score.best_index == 0


def test_log_eipc_uniform_cost_selects_max_ei():
    rng = np.random.default_rng(3)
    for _ in range(100):
        m, s = rng.normal(size=20), rng.uniform(0.01, 2, 20)
        state = make_state(m, s, float(rng.normal()))
        assert log_eipc(state, 0.37).best_index == int(np.argmax(ei(m, s, state.incumbent)))


def test_pbgi_index_pinned():
    assert abs(pbgi_index(0.0, 1.0, PHI0)) <= 1e-8
    assert pbgi_index(1.0, 0.0, 0.5) == 1.5


def test_pbgi_uses_observed_value_at_evaluated_points():
    state = make_state([0.7, 0.0], [0.0, 1.0], 0.7, evaluated=[True, False], observed=[0.7, np.nan])
    score = pbgi(state, [0.1, 0.1])
    assert score.values[0] == 0.7
    assert score.best_index == 1


def test_pbgi_root_accuracy_random():
    rng = np.random.default_rng(7)
    mu = rng.normal(0, 3, 1000)
    sigma = 10 ** rng.uniform(-3, 1, 1000)
    c = 10 ** rng.uniform(-4, 1, 1000)
    g = pbgi_index(mu, sigma, c)
    assert np.all(np.abs(ei(mu, sigma, g) - c) <= 1e-9 * np.maximum(1.0, c))


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(1e-2, 3), st.floats(1e-3, 1), st.floats(-50, 50))
def test_pbgi_shift_equivariance(mu, sigma, c, a):
    assert pbgi_index(mu + a, sigma, c) == pytest.approx(a + pbgi_index(mu, sigma, c), abs=1e-8)


def test_pbgi_rejects_nonpositive_cost():
    with pytest.raises(ValueError):
        pbgi_index(0.0, 1.0, 0.0)


def test_pbgi_ties_break_to_lowest_index():
    state = make_state([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0)
    assert pbgi(state, 0.1).best_index == 0
    state = make_state([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0, evaluated=[True, False, False], observed=[-5, np.nan, np.nan])
    assert pbgi(state, 0.1).best_index == 1


def test_pbgi_d_halving():
    s = PBGIDState(0.1)
    assert pbgi_d_step(s, True).lambda_current == pytest.approx(0.05)
    assert pbgi_d_step(s, False).lambda_current == pytest.approx(0.1)
    s = PBGIDState(0.4)
    for _ in range(3):
        s = pbgi_d_step(s, True)
    assert s.lambda_current == pytest.approx(0.05)


def test_beta_and_lcb():
    assert beta_t(1, 1, 0.1) == pytest.approx(2 * math.log(math.pi**2 / 0.6), rel=1e-12)
    assert beta_t(1, 1, 0.1) == pytest.approx(5.601, abs=1e-3)
    state = make_state([0.3, -0.2], [0.0, 0.0], 0.0)
    np.testing.assert_array_equal(lcb(state, 3, 1).values, state.mean)
    state = make_state([0.3, -0.2], [0.5, 1.0], 0.0)
    prev = lcb(state, 1, 2).values
    for t in range(2, 20):
        cur = lcb(state, t, 2).values
        assert np.all(cur <= prev)
        prev = cur
    width = math.sqrt(beta_t(4, 2)) / 5
    np.testing.assert_allclose(lcb(state, 4, 2).values, state.mean - width * state.std)


def test_thompson():
    k = KernelSpec(0.2)
    empty = Dataset(np.zeros((0, 1)), [])
    assert thompson(empty, k, [[0.4]], seed=0).best_index == 0
    cands = np.linspace(0, 1, 30).reshape(-1, 1)
    data = Dataset([[0.1], [0.8]], [0.5, -0.5])
    a = thompson(data, k, cands, seed=4)
    b = thompson(data, k, cands, seed=4)
    assert a.best_index == b.best_index
    np.testing.assert_array_equal(a.values, b.values)
    ev = np.zeros(30, bool)
    ev[a.best_index] = True
    assert thompson(data, k, cands, seed=4, evaluated=ev).best_index != a.best_index
