"""CUSUM-of-gradients structural stability test with a multiplier bootstrap."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import RegressionData
from .errors import SingularDesign
from .estimator import CovCurve, pd_root
from .kernels import DEFAULT_KERNEL, as_kernel
from .rng import normal_draws

DEFAULT_B = 1000
DEFAULT_LEVELS = (0.05, 0.10)


@dataclass
class TestReport:
    statistic: float
    bootstrap_draws: np.ndarray
    p_value: float
    reject_at: dict
    tuning: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class


def bootstrap_p_value(statistic: float, draws) -> float:
    """1 - #{draws <= statistic} / B."""
    draws = np.asarray(draws)
    return float(1.0 - np.count_nonzero(draws <= statistic) / draws.size)


def reject_decisions(statistic: float, sorted_draws: np.ndarray, levels) -> dict:
    """Reject at level a iff statistic exceeds the floor((1-a)B)-th order statistic."""
    B = sorted_draws.size
    out = {}
    for a in levels:
        k = int(np.floor((1.0 - a) * B + 1e-9))
        crit = sorted_draws[k - 1] if k >= 1 else -np.inf
        out[float(a)] = bool(statistic > crit)
    return out


def _check_design(gram: np.ndarray) -> None:
    if not np.all(np.isfinite(gram)) or np.linalg.cond(gram) > 1e12:
        raise SingularDesign("X'X is singular; covariates are collinear")


def ols_fit(data: RegressionData) -> np.ndarray:
    gram = data.X.T @ data.X
    _check_design(gram)
    return np.linalg.solve(gram, data.X.T @ data.y)


def tn_statistic(data: RegressionData) -> float:
    """max_j |sum_{i<=j} e_i x_i| / sqrt(n) with OLS residuals e."""
    resid = data.y - data.X @ ols_fit(data)
    cusum = np.cumsum(resid[:, None] * data.X, axis=0) / np.sqrt(data.n)
    return float(np.max(np.linalg.norm(cusum, axis=1)))


def _fr_from_multipliers(X: np.ndarray, root: np.ndarray, m: int, R: np.ndarray) -> np.ndarray:
    n, p = X.shape
    lam = np.cumsum(X[:, :, None] * X[:, None, :], axis=0) / n
    _check_design(lam[-1])
    proj = lam @ np.linalg.inv(lam[-1])  # Lambda(i/n) Lambda(1)^{-1}
    psi = np.cumsum(np.einsum("jab,rjb->rja", root, R), axis=1) / np.sqrt(n)
    anchor = psi[:, n - m, :]  # Psi_{n-m+1}
    lo, hi = m - 1, n - m + 1  # i = m..n-m+1
    diff = psi[:, lo:hi, :] - np.einsum("iab,rb->ria", proj[lo:hi], anchor)
    return np.max(np.linalg.norm(diff, axis=2), axis=1)


def bootstrap_fr(data: RegressionData, sigma_half, B: int, seed: int, m: int | None = None,
                 key: tuple = ()) -> np.ndarray:
    """Multiplier bootstrap draws F_1..F_B (unsorted, replicate order).

    ``sigma_half`` is a CovCurve (or (n, p, p) array) of square roots of the
    long-run covariance. Replicate r uses the substream (seed, *key, r).
    """
    root = sigma_half.values if isinstance(sigma_half, CovCurve) else np.asarray(sigma_half)
    if m is None:
        m = getattr(sigma_half, "m", None) or 1
    R = normal_draws(seed, key, B, (data.n, data.p))
    return _fr_from_multipliers(data.X, root, int(m), R)


@dataclass
class StructuralConfig:
    m: int | None = None
    tau: float | None = None
    kernel: str = DEFAULT_KERNEL
    B: int = DEFAULT_B
    seed: int = 0
    auto_tune: bool = False
    levels: tuple = DEFAULT_LEVELS
    B_mv: int = 100
    grid: object = None


def structural_test(data: RegressionData, config: StructuralConfig | None = None,
                    **overrides) -> TestReport:
    """T_n against bootstrap draws built from the thresholded debiased estimator."""
    from .tuning import default_m_tau, grid_default, mv_select

    config = replace(config or StructuralConfig(), **overrides)
    kernel = as_kernel(config.kernel)
    m, tau = config.m, config.tau
    selection = None
    if config.auto_tune:
        grid = config.grid or grid_default(data.n)
        selection = mv_select(data, grid, "structural", B_mv=config.B_mv,
                              seed=config.seed, kernel=kernel)
        m, tau = selection.m_star, selection.tau_star
    elif m is None or tau is None:
        dm, dt = default_m_tau(data.n)
        m = dm if m is None else m
        tau = dt if tau is None else tau

    stat = tn_statistic(data)
    sigma, root = pd_root(data, m, tau, kernel)
    draws = np.sort(bootstrap_fr(data, root, config.B, config.seed, m=m, key=(0,)))
    tuning = {"m": int(m), "tau": float(tau), "kernel": kernel.family,
              "B": int(config.B), "seed": int(config.seed), "auto_tune": bool(config.auto_tune),
              "estimator": sigma.estimator}
    if selection is not None:
        tuning["mv_criterion"] = "structural"
    return TestReport(
        statistic=stat,
        bootstrap_draws=draws,
        p_value=bootstrap_p_value(stat, draws),
        reject_at=reject_decisions(stat, draws, config.levels),
        tuning=tuning,
    )
