"""Monte Carlo comparison of pricing policies against plain predict-then-optimize.

Each replication draws one dataset on a uniform price grid, fits the model,
prices with every policy and records realized rewards. Per sample size the
replications are reduced (in replication order, so the result does not depend
on how work was split across processes) into a :class:`MetricsRecord`.
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adjustment import (
    Policy,
    apply_adjustment,
    linear_two_param_lambda,
    oracle_lambda_single,
    plugin_lambda_single,
)
from .bootstrap import BootstrapConfig, draw_estimates, search_multi, search_single
from .demand_models import (
    DemandModel,
    LinearDemand,
    LinearTwoParamDemand,
    LogLinearDemand,
)
from .estimation import DEFAULT_FLOOR, Dataset, SingularDesignError
from .rng import BOOTSTRAP_STREAM, DATA_STREAM, SYNTHETIC_STREAM, substream

THREADS_ENV = "PTOADJUST_THREADS"


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment panel.

    ``antithetic=True`` pairs replication ``2k+1`` with ``2k``: its noise
    vector is negated and it reuses the pair's bootstrap stream. Each member is
    still an ordinary replication of the protocol; the pairing only reduces
    the Monte Carlo error of the averages.
    """

    model: DemandModel
    true_params: tuple
    noise_var: float
    n_grid: tuple = tuple(range(10, 101, 10))
    replications: int = 10_000
    seed: int = 0
    policies: tuple = (Policy.ORACLE, Policy.PLUGIN, Policy.BOOTSTRAP)
    price_range: tuple = (0.1, 6.0)
    bootstrap: BootstrapConfig = BootstrapConfig(resampling="projected")
    floor: float = DEFAULT_FLOOR
    antithetic: bool = False

    def __post_init__(self):
        params = tuple(float(v) for v in np.atleast_1d(self.true_params))
        object.__setattr__(self, "true_params", params)
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "policies", tuple(Policy(p) for p in self.policies))
        object.__setattr__(self, "price_range", tuple(float(v) for v in self.price_range))
        if not isinstance(self.model, (LinearDemand, LogLinearDemand, LinearTwoParamDemand)):
            raise ValueError(f"no estimator available for {self.model.kind} demand")
        if len(params) != self.model.n_params:
            raise ValueError(f"{self.model.kind} demand takes {self.model.n_params} parameter(s)")
        if params[-1] <= 0:
            raise ValueError("true slope must be positive")
        if self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.n_grid or min(self.n_grid) < 2:
            raise ValueError("every sample size must be at least 2")
        low, high = self.price_range
        if not 0 < low < high:
            raise ValueError("price range needs 0 < low < high")
        if Policy.PTO in self.policies:
            raise ValueError("PTO is the baseline and is always evaluated")
        if self.model.n_params > 1 and Policy.PLUGIN in self.policies:
            raise ValueError("the plug-in policy exists only for single-parameter models")

    @property
    def theta(self):
        return self.true_params[0] if self.model.n_params == 1 else np.array(self.true_params)


@dataclass
class ReplicationResult:
    """Realized rewards of one replication."""

    valid: bool
    optimal_reward: float = float("nan")
    rewards: dict = field(default_factory=dict)
    lambdas: dict = field(default_factory=dict)
    truncated: bool = False
    boot_truncated: int = 0

    @property
    def pto_relative(self) -> float:
        return self.rewards[Policy.PTO] / self.optimal_reward

    def improvement(self, policy: Policy) -> float:
        base = self.rewards[Policy.PTO]
        return (self.rewards[policy] - base) / base


@dataclass
class MetricsRecord:
    """Aggregated metrics for one sample size.

    Improvements average the per-replication ratio ``(R_pi - R_pto) / R_pto``;
    replications whose PTO reward is zero are left out of that average and
    counted in ``zero_pto``.
    """

    n: int
    pto_relative: float
    pto_relative_se: float
    improvement: dict
    improvement_se: dict
    truncation_rate: float
    replications: int
    invalid: int = 0
    zero_pto: int = 0
    mean_lambda: dict = field(default_factory=dict)
    boot_truncation_rate: float = 0.0


def price_grid(low: float, high: float, n: int) -> np.ndarray:
    """``n`` equally spaced prices with both endpoints included."""
    return np.linspace(low, high, n)


def _noise(config: ExperimentConfig, n: int, rep: int) -> np.ndarray:
    if config.antithetic:
        z = substream(config.seed, n, rep // 2, DATA_STREAM).standard_normal(n)
        if rep % 2:
            z = -z
    else:
        z = substream(config.seed, n, rep, DATA_STREAM).standard_normal(n)
    return np.sqrt(config.noise_var) * z


def _demands(config: ExperimentConfig, prices: np.ndarray, eps: np.ndarray) -> np.ndarray:
    model, theta = config.model, config.true_params
    if isinstance(model, LinearTwoParamDemand):
        return theta[0] - theta[1] * prices + eps
    mean = model.a - theta[0] * prices
    if isinstance(model, LogLinearDemand):
        return np.exp(mean + eps)
    return mean + eps


def generate_dataset(config: ExperimentConfig, n: int, rng: np.random.Generator) -> Dataset:
    """Uniform price grid with Gaussian demand noise (log space for log-linear)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    prices = price_grid(*config.price_range, n)
    eps = np.sqrt(config.noise_var) * rng.standard_normal(n)
    return Dataset(prices, _demands(config, prices, eps))


def true_variance(config: ExperimentConfig, prices: np.ndarray):
    """n-scaled sampling variance (covariance) of the estimator on ``prices``."""
    n = prices.size
    if config.model.n_params == 1:
        return config.noise_var * n / (prices @ prices)
    X = np.column_stack([np.ones(n), -prices])
    return config.noise_var * n * np.linalg.inv(X.T @ X)


def _rewards(config: ExperimentConfig, est) -> np.ndarray:
    model = config.model
    return np.asarray(model.realized_reward(config.theta, model.optimal_decision(est)), dtype=float)


@dataclass
class _Fits:
    theta_hat: np.ndarray  # (reps, m), slope floored
    sigma_hat: np.ndarray  # (reps,) or (reps, 2, 2), n-scaled
    residuals: np.ndarray  # (reps, n)
    truncated: np.ndarray
    valid: np.ndarray


def _fit_block(config: ExperimentConfig, prices: np.ndarray, noise: np.ndarray) -> _Fits:
    """Row-wise least squares on data generated with noise rows ``noise``.

    The estimators are affine in the regression target, so the fit is
    evaluated in noise space: ``theta_hat = theta + M eps`` and residuals
    ``eps - X M eps``. This equals refitting the materialised demands up to
    rounding, and is exact when the noise is zero.
    """
    model, n = config.model, prices.size
    reps = noise.shape[0]
    theta = np.asarray(config.true_params, dtype=float)
    if model.n_params == 1:
        spp = prices @ prices
        shift = -(noise * prices).sum(axis=1) / spp
        resid = noise + shift[:, None] * prices
        sigma = (resid * resid).sum(axis=1) / (n - 1) * n / spp
        theta_hat = (theta[0] + shift)[:, None]
    else:
        X = np.column_stack([np.ones(n), -prices])
        xtx = X.T @ X
        if xtx[0, 0] * xtx[1, 1] - xtx[0, 1] ** 2 <= 1e-12 * xtx[1, 1] * n:
            raise SingularDesignError("price design is singular")
        inv = np.linalg.inv(xtx)
        r0, r1 = noise.sum(axis=1), -(noise * prices).sum(axis=1)
        s0 = inv[0, 0] * r0 + inv[0, 1] * r1
        s1 = inv[1, 0] * r0 + inv[1, 1] * r1
        resid = noise - s0[:, None] + s1[:, None] * prices
        s2 = (resid * resid).sum(axis=1) / (n - 2) if n > 2 else np.zeros(reps)
        sigma = n * s2[:, None, None] * inv[None, :, :]
        theta_hat = np.column_stack([theta[0] + s0, theta[1] + s1])
    truncated = theta_hat[:, -1] < config.floor
    theta_hat[truncated, -1] = config.floor
    return _Fits(theta_hat, sigma, resid, truncated, np.ones(reps, dtype=bool))


def _estimator_map(config: ExperimentConfig, prices: np.ndarray) -> np.ndarray:
    if config.model.n_params == 1:
        return (-prices / (prices @ prices))[None, :]
    X = np.column_stack([np.ones(prices.size), -prices])
    return np.linalg.solve(X.T @ X, X.T)


def _block_noise(config: ExperimentConfig, n: int, start: int, stop: int) -> np.ndarray:
    return np.array([_noise(config, n, rep) for rep in range(start, stop)]).reshape(stop - start, n)


def _bootstrap_lambda(config, n, rep, theta_hat, sigma_hat, W):
    model, boot_cfg = config.model, config.bootstrap
    key = rep // 2 if config.antithetic else rep
    rng = substream(config.seed, n, key, BOOTSTRAP_STREAM)
    boot, n_trunc = draw_estimates(
        theta_hat, W, boot_cfg.draws(n), rng, boot_cfg.resampling, boot_cfg.floor, boot_cfg.antithetic
    )
    if model.n_params == 1:
        theta = float(theta_hat[0])
        init = plugin_lambda_single(model.ratio_constant, float(sigma_hat), theta)
        return search_single(boot, theta, model, n, init, boot_cfg), n_trunc
    init = linear_two_param_lambda(theta_hat, sigma_hat)
    return search_multi(boot, theta_hat, model, n, init, boot_cfg), n_trunc


def _run_block(args):
    """Replications ``start..stop-1`` at sample size ``n``.

    Returns replication-ordered arrays ``(optimal, rewards, lambdas,
    truncated, boot_truncated)``; ``rewards`` has the PTO column first.
    """
    config, n, start, stop = args
    model = config.model
    prices = price_grid(*config.price_range, n)
    reps = stop - start
    fits = _fit_block(config, prices, _block_noise(config, n, start, stop))
    single = model.n_params == 1
    est = fits.theta_hat[:, 0] if single else fits.theta_hat
    optimal = np.where(fits.valid, float(_rewards(config, config.theta)), np.nan)
    rewards = np.full((reps, 1 + len(config.policies)), np.nan)
    lambdas = np.full((reps, len(config.policies)), np.nan)
    boot_truncated = np.zeros(reps, dtype=int)
    rewards[:, 0] = _rewards(config, est)
    for j, policy in enumerate(config.policies):
        if policy is Policy.ORACLE:
            sigma = true_variance(config, prices)
            if single:
                lam = np.full(reps, oracle_lambda_single(model.ratio_constant, sigma, config.theta))
            else:
                lam = np.tile(linear_two_param_lambda(config.theta, sigma), (reps, 1))
        elif policy is Policy.PLUGIN:
            lam = (2 - model.ratio_constant) * fits.sigma_hat / (2 * est**2)
        else:
            M = _estimator_map(config, prices)
            lam = np.zeros((reps,) if single else (reps, 2))
            for i in range(reps):
                if fits.valid[i]:
                    W = M * fits.residuals[i][None, :]
                    lam[i], boot_truncated[i] = _bootstrap_lambda(
                        config, n, start + i, fits.theta_hat[i], fits.sigma_hat[i], W
                    )
        lambdas[:, j] = lam if single else lam[:, 0]
        rewards[:, j + 1] = _rewards(config, apply_adjustment(est, lam, n, config.floor))
    rewards[~fits.valid] = np.nan
    return optimal, rewards, lambdas, fits.truncated & fits.valid, boot_truncated


def run_replication(config: ExperimentConfig, n: int, rep_index: int) -> ReplicationResult:
    """Generate, fit, adjust, price and score one replication.

    Deterministic in ``(config.seed, n, rep_index)``; identical to the
    corresponding row of a block run.
    """
    optimal, rewards, lambdas, truncated, boot_trunc = _run_block((config, n, rep_index, rep_index + 1))
    if np.isnan(optimal[0]):
        return ReplicationResult(valid=False)
    cols = [Policy.PTO, *config.policies]
    return ReplicationResult(
        valid=True,
        optimal_reward=float(optimal[0]),
        rewards={p: float(rewards[0, k]) for k, p in enumerate(cols)},
        lambdas={p: float(lambdas[0, k]) for k, p in enumerate(config.policies)},
        truncated=bool(truncated[0]),
        boot_truncated=int(boot_trunc[0]),
    )


def _se(x: np.ndarray, pairs: bool) -> float:
    if pairs and x.size >= 4 and x.size % 2 == 0:
        x = 0.5 * (x[0::2] + x[1::2])
    if x.size < 2:
        return 0.0
    return float(np.std(x, ddof=1) / np.sqrt(x.size))


def aggregate(config: ExperimentConfig, n: int, optimal, rewards, lambdas, truncated, boot_truncated=None) -> MetricsRecord:
    """Reduce replication-ordered arrays into a :class:`MetricsRecord`."""
    valid = ~np.isnan(optimal)
    pto = rewards[:, 0]
    rel = pto[valid] / optimal[valid]
    usable = valid & (pto > 0)
    # Antithetic pairing only survives when nothing was dropped.
    paired = config.antithetic and bool(usable.all())
    improvement, improvement_se, mean_lambda = {}, {}, {}
    for j, policy in enumerate(config.policies, start=1):
        ratio = (rewards[usable, j] - pto[usable]) / pto[usable]
        improvement[policy] = float(np.mean(ratio)) if ratio.size else float("nan")
        improvement_se[policy] = _se(ratio, paired)
        mean_lambda[policy] = float(np.mean(lambdas[valid, j - 1])) if valid.any() else float("nan")
    return MetricsRecord(
        n=n,
        pto_relative=float(np.mean(rel)) if rel.size else float("nan"),
        pto_relative_se=_se(rel, config.antithetic and bool(valid.all())),
        improvement=improvement,
        improvement_se=improvement_se,
        truncation_rate=float(np.mean(truncated[valid])) if valid.any() else float("nan"),
        replications=int(valid.sum()),
        invalid=int((~valid).sum()),
        zero_pto=int((valid & (pto <= 0)).sum()),
        mean_lambda=mean_lambda,
        boot_truncation_rate=_boot_rate(config, n, boot_truncated, valid),
    )


def _boot_rate(config, n, boot_truncated, valid):
    if boot_truncated is None or Policy.BOOTSTRAP not in config.policies or not valid.any():
        return 0.0
    return float(np.sum(boot_truncated[valid]) / (valid.sum() * config.bootstrap.draws(n)))


def default_threads() -> int:
    """Worker count from the environment, else 1."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    value = int(raw)
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer")
    return value


def _blocks(config, n, workers):
    reps = config.replications
    size = max(1, -(-reps // (4 * workers)))
    if config.antithetic and size % 2:
        size += 1
    return [(config, n, s, min(s + size, reps)) for s in range(0, reps, size)]


def run_experiment(config: ExperimentConfig, threads: int | None = None, progress=None) -> list[MetricsRecord]:
    """Run every sample size in ``config.n_grid``.

    ``threads`` worker processes (default from ``PTOADJUST_THREADS``, else 1)
    evaluate contiguous replication blocks; results are concatenated in
    replication order before reduction, so output is identical for any
    worker count.
    """
    workers = default_threads() if threads is None else int(threads)
    if workers < 1:
        raise ValueError("threads must be at least 1")
    records = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for n in config.n_grid:
            blocks = _blocks(config, n, workers)
            parts = list(pool.map(_run_block, blocks)) if pool else [_run_block(b) for b in blocks]
            arrays = [np.concatenate([p[k] for p in parts]) for k in range(5)]
            records.append(aggregate(config, n, *arrays))
            if progress is not None:
                progress(records[-1])
    finally:
        if pool is not None:
            pool.shutdown()
    return records


# Synthetic-estimator studies


@dataclass(frozen=True)
class SyntheticGap:
    """Monte Carlo ``n^2``-scaled gaps with standard errors."""

    n: int
    oracle: float
    oracle_se: float
    plugin: float
    plugin_se: float


def _synthetic_draws(theta, sigma_sq, n, draws, rng, antithetic, floor):
    half = draws // 2 if antithetic else draws
    z = rng.standard_normal(half)
    if antithetic:
        z = np.concatenate([z, -z])
    theta_hat = np.maximum(theta + np.sqrt(sigma_sq / n) * z, floor)
    chi = rng.chisquare(n - 1, half) / (n - 1)
    if antithetic:
        chi = np.concatenate([chi, chi])
    return theta_hat, sigma_sq * chi, half


def _pair_mean(x, half, antithetic):
    return 0.5 * (x[:half] + x[half:]) if antithetic else x


def synthetic_gap(
    model: DemandModel,
    theta: float,
    sigma_sq: float,
    n: int,
    draws: int = 1_000_000,
    seed: int = 0,
    antithetic: bool = True,
    floor: float = DEFAULT_FLOOR,
    oracle_scale: float = 1.0,
) -> SyntheticGap:
    """Estimate ``n^2 (E R(pi(theta_hat)) - E R(theta_hat))`` for both coefficients.

    The estimator is ``theta_hat ~ N(theta, sigma_sq / n)`` floored at
    ``floor``; the plug-in variance is ``sigma_sq * chi2_{n-1} / (n-1)``,
    independent of ``theta_hat``. Both policies share the draws.
    ``oracle_scale`` multiplies the oracle coefficient (for perturbation
    checks).
    """
    rng = substream(seed, n, SYNTHETIC_STREAM)
    theta_hat, s2_hat, half = _synthetic_draws(theta, sigma_sq, n, draws, rng, antithetic, floor)
    C = model.ratio_constant
    base = model.surrogate_reward(theta, theta_hat)
    lam_oracle = oracle_scale * oracle_lambda_single(C, sigma_sq, theta)
    lam_plugin = (2 - C) * s2_hat / (2 * theta_hat**2)
    out = []
    for lam in (lam_oracle, lam_plugin):
        adjusted = np.maximum(theta_hat * (1 + lam / n), floor)
        diff = _pair_mean(model.surrogate_reward(theta, adjusted) - base, half, antithetic)
        out += [n**2 * float(np.mean(diff)), n**2 * float(np.std(diff, ddof=1) / np.sqrt(diff.size))]
    return SyntheticGap(n, *out)


def synthetic_improvement_curve(
    model: DemandModel,
    theta: float,
    sigma_sq: float,
    n_grid,
    draws: int = 1_000_000,
    seed: int = 0,
    antithetic: bool = True,
    floor: float = DEFAULT_FLOOR,
) -> np.ndarray:
    """Mean relative oracle improvement ``(R(pi) - R(theta_hat)) / R(theta_hat)`` per n."""
    C = model.ratio_constant
    lam = oracle_lambda_single(C, sigma_sq, theta)
    values = []
    for n in n_grid:
        rng = substream(seed, n, SYNTHETIC_STREAM)
        theta_hat, _, half = _synthetic_draws(theta, sigma_sq, n, draws, rng, antithetic, floor)
        base = model.surrogate_reward(theta, theta_hat)
        adjusted = np.maximum(theta_hat * (1 + lam / n), floor)
        ratio = (model.surrogate_reward(theta, adjusted) - base) / base
        values.append(float(np.mean(ratio)))
    return np.array(values)


def scaling_slope(n_grid, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(n)``."""
    x = np.log(np.asarray(n_grid, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def with_replications(config: ExperimentConfig, replications: int) -> ExperimentConfig:
    return dataclasses.replace(config, replications=int(replications))
