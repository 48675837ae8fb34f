"""Least-squares demand estimators and their asymptotic variances.

Variance convention: ``EstimateReport.sigma_hat_sq`` is *n-scaled*, i.e.
``Var(theta_hat) ~= sigma_hat_sq / n``. Every adjustment formula consumes
this convention.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .demand_models import (
    DemandModel,
    LinearDemand,
    LinearTwoParamDemand,
    LogLinearDemand,
    UnsupportedModelError,
)

DEFAULT_FLOOR = 1e-3


class SingularDesignError(ValueError):
    """The price design does not identify the parameters."""


@dataclass(frozen=True)
class Dataset:
    """Paired price/demand observations.

    Demands are raw quantities for every model; log-linear fits take the
    logarithm internally.
    """

    prices: np.ndarray
    demands: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float).reshape(-1)
        demands = np.asarray(self.demands, dtype=float).reshape(-1)
        if prices.shape != demands.shape:
            raise ValueError(f"{prices.size} prices but {demands.size} demands")
        if prices.size < 2:
            raise ValueError("need at least two observations")
        if not np.all(prices > 0):
            raise ValueError("prices must be positive")
        if np.ptp(prices) == 0:
            raise SingularDesignError("need at least two distinct prices")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "demands", demands)

    @property
    def n(self) -> int:
        return self.prices.size


@dataclass(frozen=True)
class EstimateReport:
    """Output of an estimator.

    ``sigma_hat_sq`` is a float for single-parameter fits and the n-scaled
    2x2 covariance of ``(intercept, slope)`` for the two-parameter fit.
    Residuals live in the space the regression was run in (log space for
    log-linear demand).
    """

    theta_hat: np.ndarray
    sigma_hat_sq: float | np.ndarray
    residuals: np.ndarray
    sigma_eps_hat_sq: float
    dof: int
    truncated: bool = False

    @property
    def theta(self):
        """Scalar estimate for single-parameter fits, the vector otherwise."""
        return float(self.theta_hat[0]) if self.theta_hat.size == 1 else self.theta_hat

    @property
    def covariance(self) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.sigma_hat_sq, dtype=float))

    @property
    def n(self) -> int:
        return self.residuals.size


def _known_intercept(prices: np.ndarray, y: np.ndarray, a: float) -> EstimateReport:
    n = prices.size
    spp = prices @ prices
    if spp == 0:
        raise SingularDesignError("all prices are zero")
    theta = -(prices @ (y - a)) / spp
    resid = y - a + theta * prices
    dof = n - 1
    s2 = float(resid @ resid) / dof
    return EstimateReport(
        theta_hat=np.array([theta]),
        sigma_hat_sq=s2 * n / spp,
        residuals=resid,
        sigma_eps_hat_sq=s2,
        dof=dof,
    )


def ols_known_intercept(data: Dataset, a: float) -> EstimateReport:
    """Slope of ``d = a - theta p + eps`` with ``a`` known."""
    return _known_intercept(data.prices, data.demands, a)


def ols_log_linear(data: Dataset, a: float) -> EstimateReport:
    """Slope of ``log d = a - theta p + eps`` with ``a`` known."""
    if not np.all(data.demands > 0):
        raise ValueError("log-linear fit needs strictly positive demands")
    return _known_intercept(data.prices, np.log(data.demands), a)


def ols_two_param(data: Dataset) -> EstimateReport:
    """Intercept and slope of ``d = theta1 - theta2 p + eps``.

    With two observations the line interpolates and the residual variance
    is defined as zero.
    """
    p, d = data.prices, data.demands
    n = p.size
    X = np.column_stack([np.ones(n), -p])
    xtx = X.T @ X
    det = xtx[0, 0] * xtx[1, 1] - xtx[0, 1] ** 2
    if det <= 1e-12 * xtx[1, 1] * n:
        raise SingularDesignError("price design is singular")
    xtx_inv = np.linalg.inv(xtx)
    theta = xtx_inv @ (X.T @ d)
    resid = d - X @ theta
    dof = n - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    return EstimateReport(
        theta_hat=theta,
        sigma_hat_sq=n * s2 * xtx_inv,
        residuals=resid,
        sigma_eps_hat_sq=s2,
        dof=dof,
    )


def fit(model: DemandModel, data: Dataset) -> EstimateReport:
    """Run the estimator matching ``model``."""
    if isinstance(model, LinearDemand):
        return ols_known_intercept(data, model.a)
    if isinstance(model, LogLinearDemand):
        return ols_log_linear(data, model.a)
    if isinstance(model, LinearTwoParamDemand):
        return ols_two_param(data)
    raise UnsupportedModelError(f"no estimator for {model.kind} demand")


def truncate_estimate(report: EstimateReport, floor: float = DEFAULT_FLOOR) -> EstimateReport:
    """Floor the slope at ``floor``; negative slopes become ``+floor``."""
    if not floor > 0:
        raise ValueError("floor must be positive")
    theta = report.theta_hat.copy()
    fired = bool(theta[-1] < floor)
    if fired:
        theta[-1] = floor
    return dataclasses.replace(report, theta_hat=theta, truncated=report.truncated or fired)
