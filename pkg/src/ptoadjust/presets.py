"""Named experiment presets for the three figure protocols.

Each figure has four panels: two slope values crossed with two noise
variances. Panels use antithetic replication pairs (see
:class:`ptoadjust.simulation.ExperimentConfig`).
"""

from __future__ import annotations

from .adjustment import Policy
from .demand_models import LinearDemand, LinearTwoParamDemand, LogLinearDemand
from .simulation import ExperimentConfig

N_GRID = tuple(range(10, 101, 10))
DEFAULT_REPLICATIONS = 10_000

SINGLE_POLICIES = (Policy.ORACLE, Policy.PLUGIN, Policy.BOOTSTRAP)
MULTI_POLICIES = (Policy.ORACLE, Policy.BOOTSTRAP)

FIGURES = {
    "fig2": dict(
        model=LinearDemand(60.0),
        slopes=(3.0, 5.0),
        noise=(10.0, 15.0),
        price_range=(0.1, 6.0),
        policies=SINGLE_POLICIES,
    ),
    "fig3": dict(
        model=LinearTwoParamDemand(),
        intercept=60.0,
        slopes=(3.0, 5.0),
        noise=(10.0, 15.0),
        price_range=(0.1, 6.0),
        policies=MULTI_POLICIES,
    ),
    "fig4": dict(
        model=LogLinearDemand(8.0),
        slopes=(3.0, 5.0),
        noise=(0.5, 1.0),
        price_range=(0.05, 1.0),
        policies=SINGLE_POLICIES,
    ),
}


def _fmt(x: float) -> str:
    return f"{x:g}"


def panel_name(slope: float, noise_var: float) -> str:
    """File stem for a panel, e.g. ``theta3_sigma10``."""
    return f"theta{_fmt(slope)}_sigma{_fmt(noise_var)}"


def figure_panels(figure: str, replications: int = DEFAULT_REPLICATIONS, seed: int = 0) -> dict:
    """``{panel_name: ExperimentConfig}`` for one figure, in a fixed order."""
    try:
        protocol = FIGURES[figure]
    except KeyError:
        raise KeyError(f"unknown figure {figure!r}; choose from {sorted(FIGURES)}") from None
    panels = {}
    for slope in protocol["slopes"]:
        for noise in protocol["noise"]:
            params = (protocol["intercept"], slope) if "intercept" in protocol else (slope,)
            panels[panel_name(slope, noise)] = ExperimentConfig(
                model=protocol["model"],
                true_params=params,
                noise_var=noise,
                n_grid=N_GRID,
                replications=replications,
                seed=seed,
                policies=protocol["policies"],
                price_range=protocol["price_range"],
                antithetic=True,
            )
    return panels
