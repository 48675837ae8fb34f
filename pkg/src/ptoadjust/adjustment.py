"""Post-estimation adjustments ``theta_hat -> theta_hat * (1 + lambda / n)``.

Single-parameter coefficients come in closed form from the ratio constant
``C``. The multi-parameter oracle solves a quadratic program in the diagonal
of the adjustment matrix.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .estimation import DEFAULT_FLOOR

SINGULAR_RTOL = 1e-10
SYMMETRY_RTOL = 1e-6


class AssumptionViolation(ValueError):
    """Input violates a structural assumption (e.g. nonnegative curvature)."""


class IndefiniteSystemError(ValueError):
    """The improvement quadratic has a direction of positive curvature."""


class SolveStrategy(enum.Enum):
    """How to pick a solution when the quadratic is singular."""

    PIN_LAST = "pin-last"
    MIN_NORM = "min-norm"


class Policy(str, enum.Enum):
    """Pricing policies compared by the simulator; values are CSV columns."""

    PTO = "pto"
    ORACLE = "oracle"
    PLUGIN = "dd"
    BOOTSTRAP = "boot"


def _nonzero(theta, what):
    if theta == 0:
        raise ZeroDivisionError(f"{what} must be nonzero")


def oracle_lambda_single(C: float, sigma_theta_sq: float, theta: float) -> float:
    """Oracle coefficient ``-(C + 2) sigma^2 / (2 theta^2)``."""
    _nonzero(theta, "theta")
    if sigma_theta_sq < 0:
        raise ValueError("variance must be nonnegative")
    return -(C + 2) * sigma_theta_sq / (2 * theta**2)


def plugin_lambda_single(C: float, sigma_hat_sq: float, theta_hat: float) -> float:
    """Data-driven coefficient ``(2 - C) sigma_hat^2 / (2 theta_hat^2)``."""
    _nonzero(theta_hat, "theta_hat")
    return (2 - C) * sigma_hat_sq / (2 * theta_hat**2)


def apply_adjustment(theta_hat, lam, n: int, floor: float = DEFAULT_FLOOR):
    """Scale each component by ``1 + lambda_i / n`` and re-floor the slope.

    Scalars stay scalars. For vectors the last component is the slope.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    theta = np.asarray(theta_hat, dtype=float)
    out = theta * (1 + np.asarray(lam, dtype=float) / n)
    if out.ndim == 0:
        return float(max(out, floor))
    out = out.copy()
    out[..., -1] = np.maximum(out[..., -1], floor)
    return out


def _check_curvature(r2):
    if not r2 < 0:
        raise AssumptionViolation(f"second derivative at the truth must be negative, got {r2}")


def oracle_gap_single(C: float, sigma_theta_sq: float, theta: float, r2: float) -> float:
    """Limit of ``n^2`` times the expected-reward gain of the oracle over PTO."""
    _check_curvature(r2)
    return -r2 * (C + 2) ** 2 * sigma_theta_sq**2 / (8 * theta**2)


def plugin_gap_single(C: float, sigma_theta_sq: float, theta: float, r2: float) -> float:
    """Same limit for the data-driven plug-in coefficient."""
    _check_curvature(r2)
    return -r2 * (2 - C) ** 2 * sigma_theta_sq**2 / (8 * theta**2)


@dataclass(frozen=True)
class MultiStructure:
    """Local structure of a multi-parameter surrogate reward at the truth."""

    hessian: np.ndarray
    sigma: np.ndarray
    third_tensor: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        for name in ("hessian", "sigma", "third_tensor", "theta"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        m = self.theta.size
        if self.hessian.shape != (m, m) or self.sigma.shape != (m, m):
            raise ValueError("hessian, sigma and theta dimensions disagree")
        if self.third_tensor.shape != (m, m, m):
            raise ValueError("third-derivative tensor has the wrong shape")


def multi_A_matrix(struct: MultiStructure) -> np.ndarray:
    """Quadratic coefficient ``A_ij = H_ij theta_i theta_j``."""
    return struct.hessian * np.outer(struct.theta, struct.theta)


def _is_symmetric_tensor(t: np.ndarray) -> bool:
    scale = max(np.abs(t).max(), 1e-300)
    perms = [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    return all(np.abs(t - t.transpose(p)).max() <= SYMMETRY_RTOL * scale for p in perms)


def multi_b_vector(struct: MultiStructure) -> np.ndarray:
    """Linear coefficient of the improvement quadratic.

    ``b_i = 2 sum_j H_ij Sigma_ij + theta_i sum_jk T_ijk Sigma_jk`` where
    ``T`` is the third-derivative tensor.
    """
    if not _is_symmetric_tensor(struct.third_tensor):
        raise ValueError("third-derivative tensor is not symmetric")
    H, S, T = struct.hessian, struct.sigma, struct.third_tensor
    return 2 * (H * S).sum(axis=1) + struct.theta * np.einsum("ijk,jk->i", T, S)


def multi_gap(A: np.ndarray, b: np.ndarray, lam) -> float:
    """Asymptotic ``n^2``-scaled improvement ``(lam' A lam + b' lam) / 2``."""
    lam = np.asarray(lam, dtype=float)
    return 0.5 * float(lam @ A @ lam + b @ lam)


def multi_oracle_lambda(A, b, strategy: SolveStrategy = SolveStrategy.PIN_LAST) -> np.ndarray:
    """Maximiser of the improvement quadratic, ``-A^{-1} b / 2``.

    A singular ``A`` (smallest singular value at most ``1e-10`` of the
    largest) is solved on its row space: ``PIN_LAST`` fixes the last
    coordinate at zero, ``MIN_NORM`` takes the minimum-norm solution.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if not np.allclose(A, A.T, rtol=1e-12, atol=1e-12 * np.abs(A).max()):
        raise ValueError("A must be symmetric")
    sv = np.linalg.svd(A, compute_uv=False)
    eig = np.linalg.eigvalsh(A)
    tol = SINGULAR_RTOL * sv[0]
    if eig[-1] > tol:
        raise IndefiniteSystemError(f"A has positive curvature (eigenvalue {eig[-1]:g})")
    rhs = -b / 2
    if sv[-1] > tol:
        return np.linalg.solve(A, rhs)
    if strategy is SolveStrategy.PIN_LAST:
        lam = np.zeros_like(b)
        if b.size > 1:
            lam[:-1] = np.linalg.solve(A[:-1, :-1], rhs[:-1])
    else:
        lam = np.linalg.pinv(A, rcond=SINGULAR_RTOL) @ rhs
    resid = A @ lam - rhs
    if np.abs(resid).max() > 1e-8 * max(np.abs(rhs).max(), np.abs(A).max() * np.abs(lam).max()):
        raise IndefiniteSystemError("singular system has no solution for this b")
    return lam


def linear_two_param_lambda(theta, sigma) -> np.ndarray:
    """Closed-form pinned oracle for two-parameter linear demand.

    ``lambda_1 = -S11/t1^2 + 3 S12/(t1 t2) - 2 S22/t2^2`` and ``lambda_2 = 0``.
    """
    t1, t2 = np.asarray(theta, dtype=float)
    S = np.asarray(sigma, dtype=float)
    lam1 = -S[0, 0] / t1**2 + 3 * S[0, 1] / (t1 * t2) - 2 * S[1, 1] / t2**2
    return np.array([lam1, 0.0])
