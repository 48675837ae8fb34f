"""Bootstrap search for the adjustment coefficients.

Wild-bootstrap datasets are drawn from the fitted model (the estimate plays
the role of the truth), re-estimated, and the adjustment that maximises the
mean surrogate reward over the bootstrap estimates is selected.

Two resampling modes produce the bootstrap estimates:

``explicit``
    Materialise every resampled dataset (``B x n`` standard-normal
    multipliers) and run the estimator on each.
``projected``
    All estimators here are linear in the (log-)demands, so with Gaussian
    multipliers ``theta* - theta_hat`` is exactly Gaussian with covariance
    ``W W'`` where ``W`` maps the residual-weighted multipliers to the
    estimate. Drawing that Gaussian directly gives the same distribution of
    bootstrap estimates at ``O(B)`` instead of ``O(B n)`` cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjustment import linear_two_param_lambda, plugin_lambda_single
from .demand_models import (
    DemandModel,
    LinearDemand,
    LinearTwoParamDemand,
    LogLinearDemand,
    UnsupportedModelError,
)
from .estimation import DEFAULT_FLOOR, Dataset, EstimateReport, fit, truncate_estimate
from .rng import substream

RESAMPLING_MODES = ("explicit", "projected")


@dataclass(frozen=True)
class BootstrapConfig:
    """Search settings.

    ``B=None`` means ``draws_per_obs * n`` resamples. The single-parameter
    search domain (and the first coordinate in the two-parameter case) is
    ``[-mult, mult] * |lambda_init|`` with step ``grid_step_mult *
    |lambda_init|``. The two-parameter slope coordinate uses the fixed grid
    ``[-second_halfwidth, second_halfwidth]`` with step ``second_step``.

    With ``antithetic`` the multiplier vectors come in pairs ``(v, -v)``;
    every multiplier is still standard normal, but the first-order Monte
    Carlo error of the bootstrap mean cancels, so the selected coefficient
    converges to the bootstrap-world optimum as ``n`` grows with ``B = 10 n``.
    """

    B: int | None = None
    draws_per_obs: int = 10
    search_halfwidth_mult: float = 5.0
    grid_step_mult: float = 0.1
    max_coord_rounds: int = 50
    seed: int = 0
    second_halfwidth: float = 0.5
    second_step: float = 0.01
    resampling: str = "explicit"
    floor: float = DEFAULT_FLOOR
    antithetic: bool = True

    def __post_init__(self):
        if self.B is not None and self.B < 1:
            raise ValueError("B must be at least 1")
        if self.draws_per_obs < 1:
            raise ValueError("draws_per_obs must be at least 1")
        if not self.search_halfwidth_mult > 0 or not self.grid_step_mult > 0:
            raise ValueError("search grid multipliers must be positive")
        if not self.second_halfwidth > 0 or not self.second_step > 0:
            raise ValueError("second-coordinate grid must be positive")
        if self.max_coord_rounds < 1:
            raise ValueError("max_coord_rounds must be at least 1")
        if self.resampling not in RESAMPLING_MODES:
            raise ValueError(f"resampling must be one of {RESAMPLING_MODES}")

    def draws(self, n: int) -> int:
        return self.B if self.B is not None else self.draws_per_obs * n


# Resampling


def _regression_target(model: DemandModel, data: Dataset) -> np.ndarray:
    if isinstance(model, LogLinearDemand):
        return np.log(data.demands)
    return data.demands


def _fitted(model: DemandModel, prices: np.ndarray, params) -> np.ndarray:
    if isinstance(model, LinearDemand):
        return model.a - float(np.ravel(params)[0]) * prices
    if isinstance(model, LogLinearDemand):
        return model.a - float(np.ravel(params)[0]) * prices
    if isinstance(model, LinearTwoParamDemand):
        t1, t2 = np.asarray(params, dtype=float)
        return t1 - t2 * prices
    raise UnsupportedModelError(f"no wild bootstrap for {model.kind} demand")


def multipliers(B: int, n: int, rng, antithetic: bool = False) -> np.ndarray:
    """``B x n`` standard-normal multipliers; antithetic rows ``b`` and ``b + ceil(B/2)`` are negatives."""
    if not antithetic:
        return rng.standard_normal((B, n))
    half = rng.standard_normal(((B + 1) // 2, n))
    return np.concatenate([half, -half])[:B]


def wild_resample(data: Dataset, fitted_params, model: DemandModel, rng=None, v=None) -> Dataset:
    """One wild-bootstrap dataset: fitted value plus ``N(0,1)`` times residual.

    Prices are kept. Log-linear resampling happens in log space. Pass ``v``
    to supply the multipliers instead of drawing them from ``rng``.
    """
    fitted = _fitted(model, data.prices, fitted_params)
    resid = _regression_target(model, data) - fitted
    if v is None:
        v = rng.standard_normal(data.n)
    y = fitted + v * resid
    if isinstance(model, LogLinearDemand):
        y = np.exp(y)
    return Dataset(data.prices, y)


def _estimate_map(model: DemandModel, prices: np.ndarray) -> np.ndarray:
    """Rows ``M`` with ``theta_hat = M @ y + const`` for the model's OLS."""
    if isinstance(model, (LinearDemand, LogLinearDemand)):
        return (-prices / (prices @ prices))[None, :]
    X = np.column_stack([np.ones(prices.size), -prices])
    return np.linalg.solve(X.T @ X, X.T)


def bootstrap_estimates(
    data: Dataset,
    model: DemandModel,
    report: EstimateReport,
    B: int,
    rng: np.random.Generator,
    resampling: str = "explicit",
    floor: float = DEFAULT_FLOOR,
    antithetic: bool = False,
) -> tuple[np.ndarray, int]:
    """Draw ``B`` bootstrap estimates around ``report.theta_hat``.

    Returns the estimates (shape ``(B,)`` for single-parameter models,
    ``(B, 2)`` otherwise) and how many had their slope floored. Floored
    estimates are kept.
    """
    theta_hat = report.theta_hat
    fitted = _fitted(model, data.prices, theta_hat)
    resid = _regression_target(model, data) - fitted
    W = _estimate_map(model, data.prices) * resid[None, :]
    return draw_estimates(theta_hat, W, B, rng, resampling, floor, antithetic)


def draw_estimates(
    theta_hat, W, B: int, rng, resampling: str = "explicit", floor: float = DEFAULT_FLOOR, antithetic: bool = False
):
    """Bootstrap estimates ``theta_hat + W v`` for ``B`` multiplier vectors ``v``.

    ``W`` (parameters x observations) is the estimator map scaled by the
    residuals, so ``W v`` is the estimate shift caused by the wild
    multipliers ``v``.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    theta_hat = np.asarray(theta_hat, dtype=float)
    if resampling == "explicit":
        V = multipliers(B, W.shape[1], rng, antithetic)
        draws = theta_hat[None, :] + V @ W.T
    elif resampling == "projected":
        Z = multipliers(B, theta_hat.size, rng, antithetic)
        if theta_hat.size == 1:
            draws = theta_hat[None, :] + Z * np.sqrt(np.sum(W * W))
        else:
            vals, vecs = np.linalg.eigh(W @ W.T)
            root = vecs * np.sqrt(np.clip(vals, 0.0, None))
            draws = theta_hat[None, :] + Z @ root.T
    else:
        raise ValueError(f"unknown resampling mode {resampling!r}")
    low = draws[:, -1] < floor
    draws[low, -1] = floor
    if theta_hat.size == 1:
        draws = draws[:, 0]
    return draws, int(low.sum())


def bootstrap_estimates_by_refit(data, model, report, B, rng, floor=DEFAULT_FLOOR, antithetic=False):
    """Reference path: ``B`` calls of :func:`wild_resample` then the estimator."""
    out = []
    for v in multipliers(B, data.n, rng, antithetic):
        boot = wild_resample(data, report.theta_hat, model, v=v)
        out.append(truncate_estimate(fit(model, boot), floor).theta_hat)
    arr = np.array(out)
    return arr[:, 0] if arr.shape[1] == 1 else arr


# Objective and search


def _adjusted(boot: np.ndarray, lam, n: int, floor: float) -> np.ndarray:
    if boot.ndim == 1:
        x = boot * (1 + float(lam) / n)
        return np.maximum(x, floor)
    x = boot * (1 + np.asarray(lam, dtype=float) / n)
    x[..., -1] = np.maximum(x[..., -1], floor)
    return x


def bootstrap_objective(lam, boot_estimates, anchor, model: DemandModel, n: int, floor=DEFAULT_FLOOR):
    """Mean surrogate reward over bootstrap estimates after adjusting by ``lam``.

    ``anchor`` (the original estimate) is treated as the truth.
    """
    boot = np.asarray(boot_estimates, dtype=float)
    if boot.size == 0:
        raise ValueError("no bootstrap estimates")
    rewards = model.surrogate_reward(_anchor(model, anchor), _adjusted(boot, lam, n, floor))
    return float(np.mean(rewards))


def _anchor(model, anchor):
    a = np.asarray(anchor, dtype=float)
    return float(a.reshape(-1)[0]) if model.n_params == 1 else a


def _objective_single_grid(grid, boot, anchor, model, n, floor):
    x = np.maximum(boot[None, :] * (1 + grid[:, None] / n), floor)
    return np.mean(model.surrogate_reward(anchor, x), axis=1)


def _objective_multi_grid(cands, boot, anchor, model, n, floor):
    scale = 1 + cands / n
    if isinstance(model, LinearTwoParamDemand) and np.min(boot[:, 1]) * np.min(scale[:, 1]) >= floor:
        # Two-parameter linear reward depends on x only through r = x1 / x2:
        # R = t1 r / 2 - t2 r^2 / 4, so two moments of theta*_1 / theta*_2 suffice.
        ratio = boot[:, 0] / boot[:, 1]
        kappa = scale[:, 0] / scale[:, 1]
        t1, t2 = anchor
        return t1 * kappa * np.mean(ratio) / 2 - t2 * kappa**2 * np.mean(ratio**2) / 4
    x = boot[None, :, :] * (1 + cands[:, None, :] / n)
    x[..., -1] = np.maximum(x[..., -1], floor)
    return np.mean(model.surrogate_reward(anchor, x), axis=1)


_BLOCK_ELEMENTS = 16384


def _loglinear_grid_values(grid, boot, anchor, n, floor):
    """Log-linear objective up to the positive factor ``exp(a) / anchor``.

    With ``t = anchor / x`` the reward is ``exp(a) / anchor * t exp(-t)``;
    rows are evaluated in cache-sized blocks.
    """
    z = anchor / boot
    scale = 1 + grid / n
    inv = 1 / scale
    needs_floor = np.min(boot) * np.min(scale) < floor
    out = np.empty(grid.size)
    rows = max(1, _BLOCK_ELEMENTS // boot.size)
    for i in range(0, grid.size, rows):
        if needs_floor:
            t = anchor / np.maximum(np.multiply.outer(scale[i : i + rows], boot), floor)
        else:
            t = np.multiply.outer(inv[i : i + rows], z)
        e = np.negative(t)
        np.exp(e, out=e)
        e *= t
        out[i : i + rows] = e.sum(axis=1)
    return out / boot.size


def _best_index(values: np.ndarray, grid: np.ndarray) -> int:
    """Argmax; exact ties go to the smallest ``|lambda|``."""
    vals = np.where(np.isnan(values), -np.inf, values)
    top = np.flatnonzero(vals == vals.max())
    return int(top[np.argmin(np.abs(grid[top]))])


def search_grid(halfwidth: float, step: float) -> np.ndarray:
    """Symmetric grid ``[-halfwidth, halfwidth]`` with endpoints and zero included."""
    k = int(round(halfwidth / step))
    if k < 1:
        raise ValueError("grid step exceeds its half-width")
    return np.arange(-k, k + 1) / k * halfwidth


def search_single(boot, anchor: float, model: DemandModel, n: int, lam_init: float, config: BootstrapConfig) -> float:
    """Maximise the bootstrap objective over ``lambda`` in the search domain."""
    scale = abs(lam_init)
    if scale == 0 or not np.isfinite(scale) or np.all(boot == anchor):
        # No spread around the anchor: the truth maximises the reward.
        return 0.0
    half = config.search_halfwidth_mult * scale
    floor = config.floor
    if isinstance(model, LinearDemand) and np.min(boot) * (1 - half / n) >= floor:
        # Mean reward is a concave quadratic in u = 1/(1 + lambda/n), and u
        # is monotone in lambda, so the clipped stationary point is optimal.
        m1 = np.mean(1 / boot)
        m2 = np.mean(1 / boot**2)
        lam = float(np.clip(n * (anchor * m2 / m1 - 1), -half, half))
        gain = bootstrap_objective(lam, boot, anchor, model, n, floor) - bootstrap_objective(
            0.0, boot, anchor, model, n, floor
        )
        return lam if gain > 0 else 0.0
    grid = search_grid(half, config.grid_step_mult * scale)
    if isinstance(model, LogLinearDemand):
        vals = _loglinear_grid_values(grid, boot, anchor, n, floor)
    else:
        vals = _objective_single_grid(grid, boot, anchor, model, n, floor)
    return float(grid[_best_index(vals, grid)])


def search_multi(boot, anchor, model: DemandModel, n: int, lam_init, config: BootstrapConfig) -> np.ndarray:
    """Coordinate search over per-parameter grids, starting at ``lam_init``.

    Stops after a full round that changes no coordinate, or after
    ``config.max_coord_rounds`` rounds.
    """
    lam = np.array(lam_init, dtype=float)
    if np.all(boot == np.asarray(anchor)):
        return np.zeros_like(lam)
    scale = abs(lam[0])
    if scale > 0 and np.isfinite(scale):
        g1 = search_grid(config.search_halfwidth_mult * scale, config.grid_step_mult * scale)
    else:
        g1 = np.zeros(1)
        lam[0] = 0.0
    g2 = search_grid(config.second_halfwidth, config.second_step)
    grids = (g1, g2)
    if lam[1] not in g2:
        lam[1] = 0.0
    for _ in range(config.max_coord_rounds):
        changed = False
        for i, grid in enumerate(grids):
            cands = np.repeat(lam[None, :], grid.size, axis=0)
            cands[:, i] = grid
            vals = _objective_multi_grid(cands, boot, anchor, model, n, config.floor)
            best = grid[_best_index(vals, grid)]
            if best != lam[i]:
                lam[i] = best
                changed = True
        if not changed:
            break
    return lam


def _rng_for(config: BootstrapConfig, rng):
    return substream(config.seed) if rng is None else rng


def bootstrap_adjust_single(
    data: Dataset,
    model: DemandModel,
    report: EstimateReport,
    config: BootstrapConfig = BootstrapConfig(),
    rng: np.random.Generator | None = None,
) -> float:
    """Bootstrap adjustment coefficient for a single-parameter model.

    The search domain is centred on the plug-in coefficient. Without ``rng``
    the draws come from ``config.seed``.
    """
    if model.n_params != 1:
        raise UnsupportedModelError("use bootstrap_adjust_multi for multi-parameter models")
    n = data.n
    theta_hat = report.theta
    lam_init = plugin_lambda_single(model.ratio_constant, report.sigma_hat_sq, theta_hat)
    if lam_init == 0:
        return 0.0
    boot, _ = bootstrap_estimates(
        data, model, report, config.draws(n), _rng_for(config, rng), config.resampling, config.floor, config.antithetic
    )
    return search_single(boot, theta_hat, model, n, lam_init, config)


def bootstrap_adjust_multi(
    data: Dataset,
    model: DemandModel,
    report: EstimateReport,
    config: BootstrapConfig = BootstrapConfig(),
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Bootstrap adjustment vector for two-parameter linear demand.

    Starts from the closed-form pinned oracle evaluated at the estimates.
    """
    if not isinstance(model, LinearTwoParamDemand):
        raise UnsupportedModelError("multi-parameter bootstrap supports two-parameter linear demand")
    n = data.n
    lam_init = linear_two_param_lambda(report.theta_hat, report.covariance)
    boot, _ = bootstrap_estimates(
        data, model, report, config.draws(n), _rng_for(config, rng), config.resampling, config.floor, config.antithetic
    )
    return search_multi(boot, report.theta_hat, model, n, lam_init, config)
