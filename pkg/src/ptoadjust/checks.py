"""Self-check suites: ratio constants, quadratic gaps, multi-parameter solve.

Each suite returns a list of :class:`Check` records; the CLI prints them and
the test-suite asserts on them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjustment import (
    MultiStructure,
    SolveStrategy,
    linear_two_param_lambda,
    multi_A_matrix,
    multi_b_vector,
    multi_oracle_lambda,
    oracle_gap_single,
    plugin_gap_single,
)
from .demand_models import LinearDemand, LinearTwoParamDemand, LogLinearDemand, PowerLawDemand
from .numdiff import RAW_REL_STEP, central_difference, default_step
from .rng import substream
from .simulation import synthetic_gap

SCOPES = ("constants", "gaps", "multi")

RATIO_RTOL = 1e-4
GAP_RTOL = 0.10
MULTI_TOL = 1e-6
RATIO_BAND = (3.4, 4.6)


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    expected: float | str
    tolerance: str
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured={self.measured:.10g} expected={self.expected} tol={self.tolerance}"


def _rel_ok(measured, expected, rtol):
    return abs(measured - expected) <= rtol * abs(expected)


def fd_ratio(model, theta: float) -> float:
    """``theta R'''(theta) / R''(theta)`` by differencing the surrogate reward itself."""
    f = lambda x: model.surrogate_reward(theta, x)  # noqa: E731
    h = default_step(theta, RAW_REL_STEP)
    r2 = central_difference(f, theta, 2, h)
    r3 = central_difference(f, theta, 3, h)
    return float(theta * r3 / r2)


RATIO_MODELS = (LinearDemand(60.0), LogLinearDemand(8.0), PowerLawDemand(10.0, 2.0))
RATIO_THETAS = (0.5, 1.0, 3.0, 5.0)
POWER_GAMMAS = (0.5, 1.0, 2.0, 5.0)


def constants_suite() -> list[Check]:
    checks = [
        Check("C linear", LinearDemand(1.0).ratio_constant, -6, "exact", LinearDemand(1.0).ratio_constant == -6),
        Check("C log-linear", LogLinearDemand(1.0).ratio_constant, -4, "exact", LogLinearDemand(1.0).ratio_constant == -4),
    ]
    for g in POWER_GAMMAS:
        c = PowerLawDemand(1.0, g).ratio_constant
        expected = -2 * (1 + 2 * g) / g
        checks.append(Check(f"C power-law gamma={g:g}", c, f"{expected:.10g}", "exact", c == expected))
    for model in RATIO_MODELS:
        for theta in RATIO_THETAS:
            measured = fd_ratio(model, theta)
            C = model.ratio_constant
            checks.append(
                Check(
                    f"finite-difference ratio {model.kind} theta={theta:g}",
                    measured,
                    f"{C:g}",
                    f"{RATIO_RTOL:g} rel",
                    _rel_ok(measured, C, RATIO_RTOL),
                )
            )
    return checks


def gaps_suite(draws: int = 1_000_000, n: int = 200, seed: int = 0) -> list[Check]:
    """Synthetic-estimator gaps for linear demand with ``a = theta = sigma = 1``."""
    model = LinearDemand(1.0)
    theta, sigma_sq = 1.0, 1.0
    r2 = model.reward_derivative(theta, theta, 2)
    C = model.ratio_constant
    exp_oracle = oracle_gap_single(C, sigma_sq, theta, r2)
    exp_plugin = plugin_gap_single(C, sigma_sq, theta, r2)
    gap = synthetic_gap(model, theta, sigma_sq, n, draws=draws, seed=seed)
    ratio = gap.plugin / gap.oracle
    return [
        Check(f"oracle gap n={n}", gap.oracle, f"{exp_oracle:g}", f"{GAP_RTOL:g} rel", _rel_ok(gap.oracle, exp_oracle, GAP_RTOL)),
        Check(f"plug-in gap n={n}", gap.plugin, f"{exp_plugin:g}", f"{GAP_RTOL:g} rel", _rel_ok(gap.plugin, exp_plugin, GAP_RTOL)),
        Check(
            "plug-in/oracle ratio",
            ratio,
            "4",
            f"[{RATIO_BAND[0]}, {RATIO_BAND[1]}]",
            RATIO_BAND[0] <= ratio <= RATIO_BAND[1],
        ),
    ]


def random_triples(count: int = 20, seed: int = 0):
    """Random ``(theta, Sigma)`` pairs with ``Sigma`` positive definite."""
    rng = substream(seed, 17)
    out = []
    for _ in range(count):
        theta = np.array([rng.uniform(5, 100), rng.uniform(0.5, 10)])
        L = rng.normal(size=(2, 2))
        sigma = L @ L.T + 0.1 * np.eye(2)
        out.append((theta, sigma))
    return out


def multi_residual(theta, sigma) -> float:
    """Max gap between the contraction-path pinned solve and the closed form."""
    model = LinearTwoParamDemand()
    struct = MultiStructure(
        hessian=model.hessian(theta),
        sigma=sigma,
        third_tensor=model.third_derivative_fd(theta),
        theta=theta,
    )
    lam = multi_oracle_lambda(multi_A_matrix(struct), multi_b_vector(struct), SolveStrategy.PIN_LAST)
    return float(np.max(np.abs(lam - linear_two_param_lambda(theta, sigma))))


def multi_suite(count: int = 20, seed: int = 0) -> list[Check]:
    checks = []
    for i, (theta, sigma) in enumerate(random_triples(count, seed)):
        r = multi_residual(theta, sigma)
        checks.append(Check(f"two-parameter pinned solve #{i}", r, "0", f"< {MULTI_TOL:g}", r < MULTI_TOL))
    return checks


def run_scope(scope: str) -> list[Check]:
    if scope == "all":
        return constants_suite() + gaps_suite() + multi_suite()
    suites = {"constants": constants_suite, "gaps": gaps_suite, "multi": multi_suite}
    if scope not in suites:
        raise ValueError(f"unknown scope {scope!r}")
    return suites[scope]()
