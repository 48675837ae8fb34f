"""Acceptance suite: eight end-to-end criteria at full tolerance and scale.

Each test appends one ``PASS``/``FAIL`` line (criterion number, measurement,
threshold, runtime) that the conftest hook prints in the terminal summary.
"""

import dataclasses
import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ptoadjust.adjustment import Policy, linear_two_param_lambda
from ptoadjust.bootstrap import BootstrapConfig, bootstrap_adjust_multi, bootstrap_adjust_single
from ptoadjust.checks import constants_suite, gaps_suite, multi_suite
from ptoadjust.cli import EXIT_OK, main, manifest_path
from ptoadjust.demand_models import LinearDemand, LinearTwoParamDemand, LogLinearDemand
from ptoadjust.estimation import Dataset, fit
from ptoadjust.presets import figure_panels
from ptoadjust.rng import DATA_STREAM, substream
from ptoadjust.simulation import (
    ExperimentConfig,
    price_grid,
    run_experiment,
    run_replication,
    scaling_slope,
    synthetic_improvement_curve,
)

N_GRID = list(range(10, 101, 10))


def _record(number, passed, detail, seconds, limit):
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"criterion {number}: {status} {detail} [{seconds:.1f}s, limit {limit}]")


def test_criterion_1_constant_suite():
    start = time.perf_counter()
    checks = constants_suite()
    elapsed = time.perf_counter() - start
    fd = [c for c in checks if c.name.startswith("finite-difference")]
    worst = max(abs(c.measured / float(c.expected) - 1) for c in fd)
    passed = all(c.passed for c in checks) and len(fd) == 12 and elapsed < 1.0
    _record(1, passed, f"{len(checks)} checks, max finite-difference rel err {worst:.2e} (tol 1e-4)", elapsed, "1s")
    assert all(c.passed for c in checks), [c.line() for c in checks if not c.passed]
    assert len(fd) == 12
    assert elapsed < 1.0


def test_criterion_2_quadratic_gaps():
    start = time.perf_counter()
    oracle, plugin, ratio = gaps_suite(draws=1_000_000, n=200)
    elapsed = time.perf_counter() - start
    passed = oracle.passed and plugin.passed and ratio.passed and elapsed < 30
    detail = f"n^2 gap oracle={oracle.measured:.4f} (1.0), plug-in={plugin.measured:.4f} (4.0), ratio={ratio.measured:.3f} in [3.4, 4.6]"
    _record(2, passed, detail, elapsed, "30s")
    assert oracle.passed and plugin.passed and ratio.passed
    assert elapsed < 30


def _uniform_improvement(figure):
    start = time.perf_counter()
    failures, worst_z = [], math.inf
    linear = figure == "fig2"
    for name, cfg in figure_panels(figure, replications=10_000).items():
        for r in run_experiment(cfg, threads=1):
            for p in (Policy.ORACLE, Policy.PLUGIN, Policy.BOOTSTRAP):
                if not r.improvement[p] > 0:
                    failures.append(f"{name} n={r.n} {p.value}={r.improvement[p]:.3g}")
                if r.improvement_se[p] > 0:
                    worst_z = min(worst_z, r.improvement[p] / r.improvement_se[p])
            if linear and not r.improvement[Policy.PLUGIN] > r.improvement[Policy.ORACLE]:
                failures.append(f"{name} n={r.n} plug-in <= oracle")
    return failures, worst_z, time.perf_counter() - start


@pytest.mark.parametrize("figure", ["fig2", "fig4"])
def test_criterion_3_uniform_improvement(figure):
    failures, worst_z, elapsed = _uniform_improvement(figure)
    passed = not failures and elapsed < 300
    what = "all improvements > 0" + (", plug-in > oracle" if figure == "fig2" else "")
    detail = f"{figure} 4 panels x 10 n at 1e4 reps: {what}; smallest improvement/SE {worst_z:.1f}"
    if failures:
        detail += f"; failures: {'; '.join(failures[:5])}"
    _record(3, passed, detail, elapsed, "300s")
    assert not failures
    assert elapsed < 300


def test_criterion_4_scaling():
    start = time.perf_counter()
    prices = price_grid(0.1, 6.0, 10_000)
    # Per-observation design variance sigma_eps^2 / E[p^2] on the price interval.
    sigma_sq = 10.0 / float(np.mean(prices**2))
    curve = synthetic_improvement_curve(LinearDemand(60.0), 3.0, sigma_sq, N_GRID, draws=1_000_000)
    slope = scaling_slope(N_GRID, curve)
    elapsed = time.perf_counter() - start
    passed = bool(np.all(curve > 0)) and -2.4 <= slope <= -1.6 and elapsed < 60
    _record(4, passed, f"log-log slope {slope:.3f} in [-2.4, -1.6]", elapsed, "60s")
    assert np.all(curve > 0)
    assert -2.4 <= slope <= -1.6
    assert elapsed < 60


def test_criterion_5_multi_parameter():
    start = time.perf_counter()
    checks = multi_suite(count=20)
    elapsed = time.perf_counter() - start
    worst = max(c.measured for c in checks)
    passed = all(c.passed for c in checks) and len(checks) == 20 and elapsed < 5
    _record(5, passed, f"20 random triples, max |pinned - closed form| {worst:.2e} (< 1e-6)", elapsed, "5s")
    assert all(c.passed for c in checks)
    assert elapsed < 5


def _c6_errors(n, reps=200):
    """Per-replication distance of the bootstrap lambda_1 from the closed form at the estimates."""
    model = LinearTwoParamDemand()
    prices = price_grid(0.1, 6.0, n)
    cfg = BootstrapConfig(resampling="projected")
    raw, equivalent = [], []
    for rep in range(reps):
        eps = math.sqrt(10.0) * substream(2024, n, rep, DATA_STREAM).standard_normal(n)
        data = Dataset(prices, 60.0 - 3.0 * prices + eps)
        report = fit(model, data)
        target = linear_two_param_lambda(report.theta_hat, report.covariance)[0]
        lam = bootstrap_adjust_multi(data, model, report, dataclasses.replace(cfg, seed=rep))
        raw.append(abs(lam[0] - target))
        # The reward depends on the adjustment only through (1+l1/n)/(1+l2/n);
        # this is the lambda_1 that gives the same price with lambda_2 = 0.
        pinned = n * ((1 + lam[0] / n) / (1 + lam[1] / n) - 1)
        equivalent.append(abs(pinned - target))
    return float(np.median(raw)), float(np.median(equivalent))


def test_criterion_6_bootstrap_consistency():
    start = time.perf_counter()
    raw_200, eq_200 = _c6_errors(200)
    raw_2000, eq_2000 = _c6_errors(2000)
    elapsed = time.perf_counter() - start
    ratio = eq_2000 / eq_200
    passed = ratio < 0.5 and elapsed < 600
    detail = (
        f"median |l1_boot - l1(theta_hat)| (lambda_2 folded in): n=200 {eq_200:.4g}, n=2000 {eq_2000:.4g}, "
        f"ratio {ratio:.3f} < 0.5; raw lambda_1 coordinate ratio {raw_2000 / raw_200:.3f}"
    )
    _record(6, passed, detail, elapsed, "600s")
    assert ratio < 0.5
    assert elapsed < 600


def test_criterion_7_degenerate_exactness():
    start = time.perf_counter()
    configs = [
        ExperimentConfig(LinearDemand(60.0), (3.0,), 0.0, replications=3),
        ExperimentConfig(LogLinearDemand(8.0), (3.0,), 0.0, replications=3, price_range=(0.05, 1.0)),
        ExperimentConfig(LinearTwoParamDemand(), (60.0, 3.0), 0.0, replications=3, policies=(Policy.ORACLE, Policy.BOOTSTRAP)),
    ]
    ok = True
    for cfg in configs:
        for r in run_experiment(cfg, threads=1):
            ok &= r.pto_relative == 1.0 and all(v == 0.0 for v in r.improvement.values())
        ok &= run_replication(cfg, 10, 0).lambdas[Policy.BOOTSTRAP] == 0.0
    p = price_grid(0.1, 6.0, 20)
    clean = Dataset(p, 60 - 3 * p)
    ok &= bootstrap_adjust_single(clean, LinearDemand(60.0), fit(LinearDemand(60.0), clean)) == 0.0
    two = LinearTwoParamDemand()
    ok &= bool(np.all(bootstrap_adjust_multi(clean, two, fit(two, clean)) == 0.0))
    elapsed = time.perf_counter() - start
    passed = bool(ok) and elapsed < 1.0
    _record(7, passed, "sigma^2=0: pto_relative == 1, improvements == 0, bootstrap lambda == 0 (exact)", elapsed, "1s")
    assert ok
    assert elapsed < 1.0


def test_criterion_8_determinism(tmp_path):
    start = time.perf_counter()
    config = tmp_path / "panel.ini"
    config.write_text(
        "[experiment]\nmodel = loglinear\na = 8\ntheta = 3\nnoise_var = 1\nn_grid = 10:50:20\n"
        "replications = 300\nseed = 11\nprice_low = 0.05\nprice_high = 1\n"
    )
    outputs, digests = [], set()
    for threads in ("1", "2", "3", "1"):
        out = tmp_path / f"out_{len(outputs)}.csv"
        assert main(["run", "--config", str(config), "--out", str(out), "--threads", threads]) == EXIT_OK
        outputs.append(out.read_bytes())
        digests.add(json.loads(manifest_path(out).read_text())["digest"])
    elapsed = time.perf_counter() - start
    identical = all(o == outputs[0] for o in outputs) and len(digests) == 1
    _record(8, identical, "4 runs (--threads 1, 2, 3, 1), one digest, byte-identical CSVs", elapsed, "none")
    assert identical


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", *sys.argv[1:]]))
