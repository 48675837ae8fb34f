"""Demand families used for pricing, their optimal prices and surrogate rewards.

Every model maps a parameter vector to a revenue-maximising price. The
*surrogate reward* ``R_theta(theta_hat)`` is the true revenue earned at the
price computed from ``theta_hat``; it is maximised at ``theta_hat == theta``.

Single-parameter models (:class:`LinearDemand`, :class:`LogLinearDemand`,
:class:`PowerLawDemand`) take a scalar price sensitivity. Their methods
broadcast over numpy arrays of estimates, which the Monte Carlo code relies
on. :class:`LinearTwoParamDemand` takes ``(intercept, slope)`` along the last
axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .numdiff import central_difference, default_step, partial_difference

THETA_MIN = 1e-12


class InvalidParameterError(ValueError):
    """Parameter outside the domain of the decision map."""


class UnsupportedModelError(ValueError):
    """Operation not defined for this demand family."""


def _check_positive(theta, what: str = "theta"):
    arr = np.asarray(theta, dtype=float)
    if np.any(np.isnan(arr)):
        raise InvalidParameterError(f"{what} is NaN")
    if np.any(arr <= THETA_MIN):
        raise InvalidParameterError(f"{what} must exceed {THETA_MIN:g}, got {theta!r}")


def _scalar(params):
    """Single-parameter value: a float stays a float, arrays broadcast."""
    if np.ndim(params) == 0:
        return float(params)
    arr = np.asarray(params, dtype=float)
    if arr.shape == (1,):
        return float(arr[0])
    return arr


def _pair(params):
    arr = np.asarray(params, dtype=float)
    if arr.shape[-1:] != (2,):
        raise InvalidParameterError(f"expected (intercept, slope), got shape {arr.shape}")
    return arr[..., 0], arr[..., 1]


def _check_price(price):
    p = np.asarray(price, dtype=float)
    if np.any(np.isnan(p)):
        raise ValueError("price is NaN")
    if np.any(p < 0):
        raise ValueError(f"price must be nonnegative, got {price!r}")


@dataclass(frozen=True)
class DemandModel:
    """Base class. Subclasses implement the closed forms."""

    kind: ClassVar[str] = ""
    n_params: ClassVar[int] = 1

    def demand(self, params, price):
        raise NotImplementedError

    def optimal_decision(self, params):
        raise NotImplementedError

    def surrogate_reward(self, true_params, est_params):
        raise NotImplementedError

    def realized_reward(self, true_params, price):
        _check_price(price)
        return price * np.maximum(self.demand(true_params, price), 0.0)

    @property
    def ratio_constant(self) -> float:
        raise UnsupportedModelError(f"{self.kind} has no single-parameter ratio constant")

    def _analytic_derivative(self, theta, x, order: int):
        raise NotImplementedError

    def reward_derivative(self, true_params, at, order: int):
        """``order``-th derivative of the surrogate reward in the estimate.

        Orders 1-3 are closed forms. Orders 4 and 5 difference the analytic
        third derivative once or twice.
        """
        if order not in (1, 2, 3, 4, 5):
            raise ValueError(f"order must be in 1..5, got {order}")
        theta = _scalar(true_params)
        x = _scalar(at)
        _check_positive(theta)
        _check_positive(x, "estimate")
        if order <= 3:
            return self._analytic_derivative(theta, x, order)
        third = lambda y: self._analytic_derivative(theta, y, 3)  # noqa: E731
        return float(central_difference(third, x, order - 3, default_step(x)))


@dataclass(frozen=True)
class LinearDemand(DemandModel):
    """``d(p) = a - theta p`` with known intercept ``a``."""

    a: float
    kind: ClassVar[str] = "linear"

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidParameterError(f"a must be positive, got {self.a}")

    def demand(self, params, price):
        return self.a - _scalar(params) * np.asarray(price, dtype=float)

    def optimal_decision(self, params):
        theta = _scalar(params)
        _check_positive(theta)
        return self.a / (2 * theta)

    def surrogate_reward(self, true_params, est_params):
        theta, x = _scalar(true_params), _scalar(est_params)
        _check_positive(x, "estimate")
        a2 = self.a**2
        return a2 / (2 * x) - a2 * theta / (4 * x**2)

    @property
    def ratio_constant(self) -> float:
        return -6.0

    def _analytic_derivative(self, theta, x, order):
        a2 = self.a**2
        if order == 1:
            return a2 * (theta - x) / (2 * x**3)
        if order == 2:
            return a2 * (x - 1.5 * theta) / x**4
        return 3 * a2 * (2 * theta - x) / x**5


@dataclass(frozen=True)
class LogLinearDemand(DemandModel):
    """``d(p) = exp(a - theta p)`` with known ``a``."""

    a: float
    kind: ClassVar[str] = "loglinear"

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidParameterError(f"a must be positive, got {self.a}")

    def demand(self, params, price):
        return np.exp(self.a - _scalar(params) * np.asarray(price, dtype=float))

    def optimal_decision(self, params):
        theta = _scalar(params)
        _check_positive(theta)
        return 1.0 / theta

    def surrogate_reward(self, true_params, est_params):
        theta, x = _scalar(true_params), _scalar(est_params)
        _check_positive(x, "estimate")
        return np.exp(self.a - theta / x) / x

    def realized_reward(self, true_params, price):
        _check_price(price)
        return price * self.demand(true_params, price)

    @property
    def ratio_constant(self) -> float:
        return -4.0

    def _analytic_derivative(self, theta, x, order):
        e = math.exp(self.a - theta / x)
        if order == 1:
            return (theta - x) * e / x**3
        if order == 2:
            return (theta**2 - 4 * theta * x + 2 * x**2) * e / x**5
        return (theta**3 - 9 * theta**2 * x + 18 * theta * x**2 - 6 * x**3) * e / x**7


@dataclass(frozen=True)
class PowerLawDemand(DemandModel):
    """``d(p) = max(a - theta p, 0) ** gamma`` with known ``a`` and ``gamma``."""

    a: float
    gamma: float
    kind: ClassVar[str] = "powerlaw"

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidParameterError(f"a must be positive, got {self.a}")
        if not self.gamma > 0:
            raise InvalidParameterError(f"gamma must be positive, got {self.gamma}")

    def demand(self, params, price):
        base = self.a - _scalar(params) * np.asarray(price, dtype=float)
        return np.maximum(base, 0.0) ** self.gamma

    def optimal_decision(self, params):
        theta = _scalar(params)
        _check_positive(theta)
        return self.a / (theta * (1 + self.gamma))

    def surrogate_reward(self, true_params, est_params):
        # Unclamped; the base 1 - theta/(k x) is negative once the plug-in
        # price overshoots the demand intercept, which yields NaN for
        # non-integer gamma. Scalars raise in that case.
        theta, x = _scalar(true_params), _scalar(est_params)
        _check_positive(x, "estimate")
        k = 1 + self.gamma
        base = 1 - theta / (k * x)
        if np.ndim(base) == 0 and base < 0:
            raise InvalidParameterError(
                f"estimate {x} prices above the demand intercept for theta={theta}"
            )
        with np.errstate(invalid="ignore"):
            body = np.where(np.asarray(base) >= 0, np.abs(base) ** self.gamma, np.nan)
        out = self.a ** (self.gamma + 1) / (k * x) * body
        return float(out) if np.ndim(out) == 0 else out

    @property
    def ratio_constant(self) -> float:
        return -2 * (1 + 2 * self.gamma) / self.gamma

    def _analytic_derivative(self, theta, x, order):
        # Differentiate c*y*(1 - beta*y)**gamma in y = 1/x, then chain rule.
        g = self.gamma
        k = 1 + g
        c = self.a ** (g + 1) / k
        beta = theta / k
        y = 1.0 / x
        u = 1 - beta * y
        kby = k * beta * y
        f1 = c * u ** (g - 1) * (1 - kby)
        if order == 1:
            return -(y**2) * f1
        f2 = c * beta * g * u ** (g - 2) * (kby - 2)
        if order == 2:
            return 2 * y**3 * f1 + y**4 * f2
        f3 = -c * beta**2 * g * (g - 1) * u ** (g - 3) * (kby - 3)
        return -6 * y**4 * f1 - 6 * y**5 * f2 - y**6 * f3


@dataclass(frozen=True)
class LinearTwoParamDemand(DemandModel):
    """``d(p) = theta1 - theta2 p`` with both intercept and slope unknown."""

    kind: ClassVar[str] = "linear2"
    n_params: ClassVar[int] = 2

    def demand(self, params, price):
        t1, t2 = _pair(params)
        return t1 - t2 * np.asarray(price, dtype=float)

    def optimal_decision(self, params):
        # Revenue is nonpositive for every p >= 0 once the intercept is, so
        # the constrained optimum is then p = 0.
        t1, t2 = _pair(params)
        _check_positive(t2, "slope")
        out = np.maximum(t1, 0.0) / (2 * t2)
        return float(out) if np.ndim(out) == 0 else out

    def surrogate_reward(self, true_params, est_params):
        t1, t2 = _pair(true_params)
        x1, x2 = _pair(est_params)
        _check_positive(x2, "slope estimate")
        out = t1 * x1 / (2 * x2) - t2 * x1**2 / (4 * x2**2)
        return float(out) if np.ndim(out) == 0 else out

    def gradient(self, true_params, at):
        t1, t2 = _pair(true_params)
        x1, x2 = _pair(at)
        return np.array([(t1 * x2 - t2 * x1) / (2 * x2**2), x1 * (t2 * x1 - t1 * x2) / (2 * x2**3)])

    def hessian(self, true_params, at=None):
        t1, t2 = _pair(true_params)
        x1, x2 = _pair(true_params if at is None else at)
        off = (2 * t2 * x1 - t1 * x2) / (2 * x2**3)
        return np.array(
            [
                [-t2 / (2 * x2**2), off],
                [off, -x1 * (3 * t2 * x1 - 2 * t1 * x2) / (2 * x2**4)],
            ]
        )

    def third_derivative(self, true_params, at=None):
        t1, t2 = _pair(true_params)
        x1, x2 = _pair(true_params if at is None else at)
        t = np.empty((2, 2, 2))
        t[0, 0, 0] = 0.0
        t[0, 0, 1] = t[0, 1, 0] = t[1, 0, 0] = t2 / x2**3
        t[0, 1, 1] = t[1, 0, 1] = t[1, 1, 0] = (t1 * x2 - 3 * t2 * x1) / x2**4
        t[1, 1, 1] = 3 * x1 * (2 * t2 * x1 - t1 * x2) / x2**5
        return t

    def third_derivative_fd(self, true_params, at=None):
        """Third-derivative tensor by differencing the analytic Hessian."""
        x = np.asarray(true_params if at is None else at, dtype=float)
        t = np.empty((2, 2, 2))
        for k in range(2):
            t[:, :, k] = partial_difference(lambda y: self.hessian(true_params, y), x, k)
        return t

    def reward_derivative(self, true_params, at, order: int):
        _check_positive(_pair(at)[1], "slope estimate")
        if order == 1:
            return self.gradient(true_params, at)
        if order == 2:
            return self.hessian(true_params, at)
        if order == 3:
            return self.third_derivative(true_params, at)
        raise UnsupportedModelError("two-parameter derivatives are provided up to order 3")


# Functional front end mirroring the method names.


def demand(model: DemandModel, params, price):
    return model.demand(params, price)


def optimal_decision(model: DemandModel, params):
    return model.optimal_decision(params)


def surrogate_reward(model: DemandModel, true_params, est_params):
    return model.surrogate_reward(true_params, est_params)


def realized_reward(model: DemandModel, true_params, price):
    return model.realized_reward(true_params, price)


def derivative_ratio_constant(model: DemandModel) -> float:
    """Constant ``C`` with ``R'''(theta) / R''(theta) = C / theta``."""
    return model.ratio_constant


def reward_derivative(model: DemandModel, true_params, at, order: int):
    return model.reward_derivative(true_params, at, order)


def optimal_reward(model: DemandModel, true_params) -> float:
    return float(model.realized_reward(true_params, model.optimal_decision(true_params)))
