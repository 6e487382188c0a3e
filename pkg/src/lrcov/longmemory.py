"""Residual-based tests for long memory (KPSS, R/S, V/S and K/S type).

Coefficients are estimated by a jackknifed local-linear fit; the null
distribution of each statistic is approximated by a Gaussian multiplier
bootstrap that takes the thresholded debiased long-run covariance as input.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import RegressionData
from .errors import AllSingular, EmptyWindow, SingularLocalDesign, SingularMhat, TrimTooLarge
from .estimator import CoefCurve, CovCurve, _solve_guarded, lower_root, threshold_pd
from .kernels import DEFAULT_KERNEL, SQRT2, as_kernel, grid, jackknife_kernel_eval, kernel_eval
from .rng import normal_draws

STATISTICS = ("kpss", "rs", "vs", "ks")
DEFAULT_GCV_GRID = tuple(np.round(np.geomspace(0.08, 0.35, 10), 6))


@dataclass
class LmStatistics:
    kpss: float
    rs: float
    vs: float
    ks: float
    n_prime: int

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in STATISTICS}


@dataclass
class LmTestReport:
    statistics: dict  # name -> {"value", "bootstrap_draws", "p_value"}
    tuning: dict = field(default_factory=dict)
    levels: tuple = (0.05, 0.10)

    __test__ = False

    @property
    def p_values(self) -> dict:
        return {k: v["p_value"] for k, v in self.statistics.items()}

    def reject_at(self, level: float) -> dict:
        return {k: v["p_value"] < level for k, v in self.statistics.items()}


def trim(n: int, b: float) -> int:
    """n' = floor(n b)."""
    return int(np.floor(n * b + 1e-9))


def _local_linear(data: RegressionData, b: float, kernel, with_hat: bool = False):
    n, p = data.n, data.p
    t = grid(n)
    D = t[None, :] - t[:, None]  # D[k, i] = t_i - t_k
    W = kernel_eval(kernel, D / b)
    if np.any(W.sum(axis=1) <= 0):
        raise EmptyWindow(f"bandwidth {b} leaves some grid point without neighbours")
    X, y = data.X, data.y
    xx = (X[:, :, None] * X[:, None, :]).reshape(n, p * p)
    xy = X * y[:, None]
    WD = W * D
    S0 = (W @ xx).reshape(n, p, p)
    S1 = (WD @ xx).reshape(n, p, p)
    S2 = ((WD * D) @ xx).reshape(n, p, p)
    S = np.block([[S0, S1], [S1, S2]])
    rhs = np.concatenate([W @ xy, WD @ xy], axis=1)
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    sol, cond, bad = _solve_guarded(S, rhs)
    if bad.any():
        k = int(np.argmax(bad))
        raise SingularLocalDesign(f"local design singular at t={t[k]:.4f} (bandwidth {b})")
    beta = CoefCurve(sol[:, :p], np.zeros(n, dtype=bool), cond)
    if not with_hat:
        return beta
    # fitted value at t_k picks up observation k with weight K(0) and zero slope term
    Sinv = np.linalg.pinv(S, hermitian=True)[:, :p, :p]
    hat = np.diagonal(W) * np.einsum("ka,kab,kb->k", X, Sinv, X)
    return beta, hat


def local_linear_fit(data: RegressionData, b: float, kernel=None) -> CoefCurve:
    """Kernel-weighted local-linear estimate of beta(t) on the grid."""
    return _local_linear(data, b, as_kernel(kernel))


def jackknife_fit(data: RegressionData, b: float, kernel=None) -> CoefCurve:
    """2 * fit(b / sqrt 2) - fit(b); removes the beta'' bias term."""
    kernel = as_kernel(kernel)
    narrow = _local_linear(data, b / SQRT2, kernel)
    wide = _local_linear(data, b, kernel)
    return CoefCurve(2.0 * narrow.values - wide.values,
                     narrow.flagged | wide.flagged,
                     np.maximum(narrow.condition, wide.condition))


def gcv_score(data: RegressionData, b: float, kernel=None) -> float:
    beta, hat = _local_linear(data, b, as_kernel(kernel), with_hat=True)
    resid = data.y - np.einsum("ia,ia->i", data.X, beta.values)
    n = data.n
    denom = 1.0 - hat.sum() / n
    if not denom > 1e-8:  # interpolating fit: GCV undefined
        return np.inf
    return float(np.mean(resid ** 2) / denom ** 2)


def gcv_bandwidth(data: RegressionData, grid_b=DEFAULT_GCV_GRID, kernel=None) -> float:
    """Bandwidth minimizing generalized cross-validation over ``grid_b``."""
    kernel = as_kernel(kernel)
    grid_b = list(grid_b)
    if len(grid_b) == 1:
        return float(grid_b[0])
    scores = []
    for b in grid_b:
        try:
            scores.append(gcv_score(data, b, kernel))
        except (SingularLocalDesign, EmptyWindow):
            scores.append(np.inf)
    scores = np.asarray(scores)
    if not np.isfinite(scores).any():
        raise AllSingular("no bandwidth in the GCV grid gives a valid local-linear fit")
    return float(grid_b[int(np.argmin(scores))])


def residual_partial_sums(data: RegressionData, beta_curve: CoefCurve, b: float) -> np.ndarray:
    """S_r = sum_{i=n'+1}^r e_i for r = n'+1..n-n'."""
    n = data.n
    npr = trim(n, b)
    if n - 2 * npr < 2:
        raise TrimTooLarge(f"b={b} trims n'={npr} points from each end of n={n}")
    beta = beta_curve.values if isinstance(beta_curve, CoefCurve) else np.asarray(beta_curve)
    resid = data.y - np.einsum("ia,ia->i", data.X, beta)
    return np.cumsum(resid[npr:n - npr])


def _stats_rows(S: np.ndarray, n: int) -> dict:
    """The four statistics along the last axis of S (vectorized over leading axes)."""
    L = S.shape[-1]
    ss = np.sum(S * S, axis=-1)
    s1 = np.sum(S, axis=-1)
    scale = 1.0 / (n * L)
    return {
        "kpss": scale * ss,
        "rs": np.max(S, axis=-1) - np.min(S, axis=-1),
        "vs": scale * (ss - s1 * s1 / L),
        "ks": np.max(np.abs(S), axis=-1),
    }


def lm_statistics(partial_sums, n: int, n_prime: int) -> LmStatistics:
    S = np.asarray(partial_sums, dtype=float)
    if S.shape[-1] != n - 2 * n_prime:
        raise ValueError(f"expected {n - 2 * n_prime} partial sums, got {S.shape[-1]}")
    vals = _stats_rows(S, n)
    return LmStatistics(n_prime=n_prime, **{k: float(v) for k, v in vals.items()})


def mhat_curve(data: RegressionData, eta: float, kernel=None) -> CovCurve:
    """Kernel average of x x' with the evaluation point clamped to [eta, 1-eta]."""
    kernel = as_kernel(kernel)
    if not 0 < eta < 0.5:
        raise ValueError(f"eta must lie in (0, 1/2), got {eta}")
    n, p = data.n, data.p
    t = grid(n)
    tstar = np.clip(t, eta, 1.0 - eta)
    K = kernel_eval(kernel, (t[None, :] - tstar[:, None]) / eta)
    xx = (data.X[:, :, None] * data.X[:, None, :]).reshape(n, p * p)
    return CovCurve((K @ xx).reshape(n, p, p) / (n * eta))


def default_eta(b: float) -> float:
    """Smoothing bandwidth for Mhat: the smaller jackknife bandwidth b/sqrt(2).

    Matching the scale of the local designs inverted by the jackknife fit keeps
    the bootstrap correction term aligned with the residual partial sums; a
    wider eta leaves O((nb)^{-1/2}) design noise uncancelled and the bootstrap
    becomes conservative.
    """
    return float(b / SQRT2)


class _LmBootstrap:
    """Precomputed pieces of the long-memory multiplier bootstrap for one (data, b, eta)."""

    def __init__(self, data: RegressionData, b: float, eta: float, kernel):
        kernel = as_kernel(kernel)
        n = data.n
        self.n = n
        self.npr = npr = trim(n, b)
        if n - 2 * npr < 2:
            raise TrimTooLarge(f"b={b} trims too much of n={n}")
        rows = slice(npr, n - npr)
        t = grid(n)
        M = mhat_curve(data, eta, kernel).values[rows]
        cond = np.linalg.cond(M)
        if not np.all(np.isfinite(cond)) or np.any(cond > 1e12):
            k = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
            raise SingularMhat(f"Mhat(t) singular at t={t[rows][k]:.4f}")
        # a_i = Mhat^{-1}(t_i) x_i / (n b)
        self.a = np.linalg.solve(M, data.X[rows][..., None])[..., 0] / (n * b)
        self.kstar = jackknife_kernel_eval(kernel, (t[rows][:, None] - t[None, :]) / b)
        self.rows = rows

    def draws(self, sigma_star: CovCurve, V: np.ndarray) -> dict:
        # Lower-triangular root: its first row is (sigma_H, 0, ..., 0), so the
        # sigma_H V_{i,1} term and the correction share the same Gaussian
        # coordinate, as e_i and x_i e_i do in the residual partial sums.
        root = lower_root(sigma_star.values)
        sig_h = root[self.rows, 0, 0]
        U = np.einsum("jab,rjb->rja", root, V)
        KU = np.matmul(self.kstar[None], U)
        corr = np.einsum("ia,ria->ri", self.a, KU)
        G = np.cumsum(sig_h[None, :] * V[:, self.rows, 0] - corr, axis=1)
        return _stats_rows(G, self.n)


def bootstrap_lm(data: RegressionData, sigma_star: CovCurve, b: float, eta: float, kernel=None,
                 B: int = 1000, seed: int = 0, key: tuple = ()) -> dict:
    """Bootstrap draws for the four statistics, replicate order, keyed (seed, *key, r).

    ``sigma_star`` should already be positive definite (see threshold_pd).
    """
    boot = _LmBootstrap(data, b, eta, kernel)
    V = normal_draws(seed, key, B, (data.n, data.p))
    return boot.draws(sigma_star, V)


def lm_p_value(value: float, draws) -> float:
    """1 - B*/B with B* = max{r : sorted_r <= value}."""
    draws = np.sort(np.asarray(draws))
    b_star = int(np.searchsorted(draws, value, side="right"))
    return float(1.0 - b_star / draws.size)


@dataclass
class LongMemoryConfig:
    b: float | None = None
    gcv_grid: tuple = DEFAULT_GCV_GRID
    eta: float | None = None
    m: int | None = None
    tau: float | None = None
    kernel: str = DEFAULT_KERNEL
    B: int = 1000
    seed: int = 0
    auto_tune: bool = False
    B_mv: int = 100
    grid: object = None
    levels: tuple = (0.05, 0.10)


def longmemory_test(data: RegressionData, config: LongMemoryConfig | None = None,
                    **overrides) -> LmTestReport:
    from .estimator import bootstrap_sigma
    from .tuning import default_m_tau, grid_default, mv_tables, select_from_tables

    config = replace(config or LongMemoryConfig(), **overrides)
    kernel = as_kernel(config.kernel)
    n = data.n
    b = config.b if config.b is not None else gcv_bandwidth(data, config.gcv_grid, kernel)
    eta = config.eta if config.eta is not None else default_eta(b)

    beta = jackknife_fit(data, b, kernel)
    S = residual_partial_sums(data, beta, b)
    observed = lm_statistics(S, n, trim(n, b)).as_dict()

    if config.auto_tune:
        grid_mt = config.grid or grid_default(n)
        tables = mv_tables(data, grid_mt, "longmemory", B_mv=config.B_mv, seed=config.seed,
                           kernel=kernel, b=b, eta=eta)
        chosen = {k: select_from_tables(tables, k) for k in STATISTICS}
        pairs = {k: (sel.m_star, sel.tau_star) for k, sel in chosen.items()}
    else:
        m, tau = config.m, config.tau
        if m is None or tau is None:
            dm, dt = default_m_tau(n)
            m = dm if m is None else m
            tau = dt if tau is None else tau
        pairs = {k: (m, tau) for k in STATISTICS}

    boot = _LmBootstrap(data, b, eta, kernel)
    V = normal_draws(config.seed, (0,), config.B, (n, data.p))
    cache, estimators = {}, {}
    results = {}
    for name in STATISTICS:
        pair = pairs[name]
        if pair not in cache:
            sigma = bootstrap_sigma(data, pair[0], pair[1], kernel)
            cache[pair] = boot.draws(sigma, V)
            estimators[pair] = sigma.estimator
        draws = np.sort(cache[pair][name])
        value = float(observed[name])
        results[name] = {"value": value, "bootstrap_draws": draws,
                         "p_value": lm_p_value(value, draws)}

    tuning = {"b": float(b), "eta": float(eta), "kernel": kernel.family, "B": int(config.B),
              "seed": int(config.seed), "auto_tune": bool(config.auto_tune),
              "m": {k: int(v[0]) for k, v in pairs.items()},
              "tau": {k: float(v[1]) for k, v in pairs.items()},
              "estimator": {k: estimators[v] for k, v in pairs.items()}}
    return LmTestReport(statistics=results, tuning=tuning, levels=tuple(config.levels))
