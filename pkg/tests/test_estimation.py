import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptoadjust.demand_models import LinearDemand, LinearTwoParamDemand, LogLinearDemand, PowerLawDemand, UnsupportedModelError
from ptoadjust.estimation import (
    Dataset,
    SingularDesignError,
    fit,
    ols_known_intercept,
    ols_log_linear,
    ols_two_param,
    truncate_estimate,
)
from ptoadjust.rng import substream


def _random_linear(n, seed, a=60.0, theta=3.0, noise=10.0):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.1, 6, n)
    return Dataset(p, a - theta * p + math.sqrt(noise) * rng.standard_normal(n))


# --- Dataset -------------------------------------------------------------------


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset([1.0], [2.0])
    with pytest.raises(ValueError):
        Dataset([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        Dataset([1.0, -2.0], [1.0, 2.0])
    with pytest.raises(SingularDesignError):
        Dataset([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    assert Dataset([1, 2, 3], [4, 5, 6]).n == 3


# --- known-intercept OLS -------------------------------------------------------------


def test_known_intercept_padded_example():
    r = ols_known_intercept(Dataset([1, 2], [58, 56]), 60)
    assert r.theta == pytest.approx(2.0, rel=1e-15)


@pytest.mark.parametrize("grid", [np.linspace(0.1, 6, 10), np.linspace(0.1, 6, 37), np.array([0.3, 1.7, 2.2, 5.9])])
def test_known_intercept_noise_free_recovery(grid):
    r = ols_known_intercept(Dataset(grid, 60 - 3 * grid), 60)
    # Exact up to rounding of the generated demands.
    assert r.theta == pytest.approx(3.0, rel=1e-14)
    np.testing.assert_allclose(r.residuals, 0, atol=1e-12)


def test_known_intercept_matches_normal_equations():
    data = _random_linear(20, 1)
    r = ols_known_intercept(data, 60)
    X = -data.prices[:, None]
    oracle = np.linalg.solve(X.T @ X, X.T @ (data.demands - 60))[0]
    assert r.theta == pytest.approx(oracle, abs=1e-10)
    resid = data.demands - 60 + oracle * data.prices
    assert r.sigma_eps_hat_sq == pytest.approx(resid @ resid / 19, rel=1e-10)
    assert r.sigma_hat_sq == pytest.approx(r.sigma_eps_hat_sq * 20 / (data.prices @ data.prices), rel=1e-12)
    assert r.dof == 19 and r.n == 20


def test_residual_orthogonality():
    data = _random_linear(50, 2)
    r = ols_known_intercept(data, 60)
    assert abs(data.prices @ r.residuals) < 1e-9


# --- log-linear ---------------------------------------------------------------------


def test_log_linear_noise_free():
    p = np.linspace(0.05, 1, 25)
    r = ols_log_linear(Dataset(p, np.exp(8 - 5 * p)), 8)
    assert r.theta == pytest.approx(5.0, rel=1e-13)


def test_log_linear_single_pair_padded():
    # (1, e^3) gives theta = 5 with a = 8; the second point (2, e^-2) lies on
    # the same curve, so the fit is unchanged.
    r = ols_log_linear(Dataset([1, 2], [math.exp(3), math.exp(-2)]), 8)
    assert r.theta == pytest.approx(5.0, rel=1e-14)


def test_log_linear_equals_linear_on_logs():
    rng = np.random.default_rng(3)
    p = np.linspace(0.05, 1, 30)
    d = np.exp(8 - 4 * p + rng.standard_normal(30))
    a = ols_log_linear(Dataset(p, d), 8)
    b = ols_known_intercept(Dataset(p, np.log(d)), 8)
    assert a.theta == b.theta
    assert a.sigma_hat_sq == b.sigma_hat_sq
    np.testing.assert_array_equal(a.residuals, b.residuals)


def test_log_linear_rejects_nonpositive_demand():
    with pytest.raises(ValueError):
        ols_log_linear(Dataset([1, 2], [1.0, 0.0]), 8)


# --- two-parameter ---------------------------------------------------------------------


def test_two_param_noise_free():
    p = np.linspace(0.1, 6, 15)
    r = ols_two_param(Dataset(p, 60 - 3 * p))
    np.testing.assert_allclose(r.theta_hat, [60, 3], rtol=1e-13)
    np.testing.assert_allclose(r.residuals, 0, atol=1e-11)


def test_two_param_interpolates_two_points():
    r = ols_two_param(Dataset([1, 2], [57, 54]))
    np.testing.assert_allclose(r.theta_hat, [60, 3], rtol=1e-14)
    assert r.dof == 0
    assert r.sigma_eps_hat_sq == 0
    np.testing.assert_array_equal(r.covariance, np.zeros((2, 2)))


def test_two_param_matches_normal_equations():
    data = _random_linear(30, 4)
    r = ols_two_param(data)
    X = np.column_stack([np.ones(30), -data.prices])
    beta, *_ = np.linalg.lstsq(X, data.demands, rcond=None)
    resid = data.demands - X @ beta
    s2 = resid @ resid / 28
    cov = 30 * s2 * np.linalg.inv(X.T @ X)
    np.testing.assert_allclose(r.theta_hat, beta, rtol=1e-9)
    np.testing.assert_allclose(r.covariance, cov, rtol=1e-9)
    assert np.allclose(r.covariance, r.covariance.T)
    assert np.all(np.linalg.eigvalsh(r.covariance) >= 0)


def test_two_param_reduces_to_known_intercept_without_noise():
    p = np.linspace(0.1, 6, 12)
    data = Dataset(p, 60 - 3 * p)
    assert ols_two_param(data).theta_hat[1] == pytest.approx(ols_known_intercept(data, 60).theta, rel=1e-13)


def test_fit_dispatch():
    data = _random_linear(10, 5)
    assert fit(LinearDemand(60), data).theta == ols_known_intercept(data, 60).theta
    assert fit(LinearTwoParamDemand(), data).theta_hat.size == 2
    with pytest.raises(UnsupportedModelError):
        fit(PowerLawDemand(1, 2), data)


# --- truncation ----------------------------------------------------------------------------


def _report(theta):
    return ols_known_intercept(Dataset([1, 2], [60 - theta, 60 - 2 * theta]), 60)


@pytest.mark.parametrize("theta, expected, fired", [(3, 3, False), (0.01, 0.05, True), (-2, 0.05, True)])
def test_truncate_examples(theta, expected, fired):
    r = truncate_estimate(_report(theta), 0.05)
    assert r.theta == pytest.approx(expected, rel=1e-14)
    assert r.truncated is fired


def test_truncate_only_floors_slope():
    # Demand rising with price gives a negative slope estimate.
    r = ols_two_param(Dataset([1, 2, 3], [1, 1.5, 2.5]))
    assert r.theta_hat[1] < 0
    t = truncate_estimate(r, 1e-3)
    assert t.theta_hat[0] == r.theta_hat[0]
    assert t.theta_hat[1] == 1e-3 and t.truncated


def test_truncate_rejects_bad_floor():
    with pytest.raises(ValueError):
        truncate_estimate(_report(3), 0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-10, 10), st.floats(1e-4, 1.0))
def test_truncate_property(theta, floor):
    r = truncate_estimate(_report(theta), floor)
    assert r.theta >= floor
    assert r.truncated == (_report(theta).theta < floor)


# --- statistical properties --------------------------------------------------------------


def test_unbiased_and_variance_consistent():
    # 1e5 datasets, linear theta=3, sigma^2=10, n=50, vectorised OLS.
    n, reps = 50, 100_000
    p = np.linspace(0.1, 6, n)
    rng = substream(11, 0)
    eps = math.sqrt(10) * rng.standard_normal((reps, n))
    d = 60 - 3 * p + eps
    spp = p @ p
    theta_hat = -((d - 60) @ p) / spp
    resid = d - 60 + theta_hat[:, None] * p
    sigma_hat = (resid**2).sum(axis=1) / (n - 1) * n / spp
    se = theta_hat.std(ddof=1) / math.sqrt(reps)
    assert abs(theta_hat.mean() - 3) < 3 * se
    assert n * theta_hat.var(ddof=1) == pytest.approx(sigma_hat.mean(), rel=0.05)
    # The vectorised oracle agrees with the library on a sample row.
    row = ols_known_intercept(Dataset(p, d[0]), 60)
    assert row.theta == pytest.approx(theta_hat[0], rel=1e-12)
    assert row.sigma_hat_sq == pytest.approx(sigma_hat[0], rel=1e-12)


def test_variance_estimator_asymptotically_uncorrelated():
    p_small, p_large = np.linspace(0.1, 6, 10), np.linspace(0.1, 6, 200)
    corr = []
    for p in (p_small, p_large):
        n = p.size
        rng = substream(12, n)
        d = 60 - 3 * p + math.sqrt(10) * rng.standard_normal((20_000, n))
        theta_hat = -((d - 60) @ p) / (p @ p)
        resid = d - 60 + theta_hat[:, None] * p
        s2 = (resid**2).sum(axis=1) / (n - 1)
        corr.append(abs(np.corrcoef(theta_hat, s2)[0, 1]))
    # Gaussian noise: the two are independent, so both correlations are noise.
    assert max(corr) < 0.05
