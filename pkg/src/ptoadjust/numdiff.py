"""Central finite differences with one level of Richardson extrapolation."""

from __future__ import annotations

from typing import Callable

import numpy as np

# Step used when differencing an analytic lower-order derivative.
REL_STEP = 1e-4
# Step used when differencing the raw function up to third order; a smaller
# step drowns the h**-3 stencil in round-off.
RAW_REL_STEP = 1e-3


def default_step(x: float, rel: float = REL_STEP) -> float:
    return max(rel, rel * abs(x))


def _stencil(f: Callable, x: float, order: int, h: float):
    if order == 1:
        return (f(x + h) - f(x - h)) / (2 * h)
    if order == 2:
        return (f(x + h) - 2 * f(x) + f(x - h)) / h**2
    if order == 3:
        return (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) / (2 * h**3)
    raise ValueError(f"unsupported difference order {order}")


def central_difference(f: Callable, x: float, order: int = 1, step: float | None = None):
    """Derivative of ``f`` at ``x`` of the given order (1-3).

    Every stencil is second-order accurate, so one Richardson step
    ``(4 D(h/2) - D(h)) / 3`` leaves an O(h**4) truncation error. ``f`` may
    return arrays; the result has the same shape.
    """
    h = default_step(x) if step is None else step
    coarse = np.asarray(_stencil(f, x, order, h), dtype=float)
    fine = np.asarray(_stencil(f, x, order, h / 2), dtype=float)
    return (4 * fine - coarse) / 3


def partial_difference(f: Callable, x, axis: int, step: float | None = None):
    """First partial derivative of a vector-argument ``f`` along ``axis``."""
    x = np.asarray(x, dtype=float)
    h = default_step(x[axis]) if step is None else step
    e = np.zeros_like(x)
    e[axis] = 1.0
    return central_difference(lambda t: f(x + (t - x[axis]) * e), float(x[axis]), 1, h)
