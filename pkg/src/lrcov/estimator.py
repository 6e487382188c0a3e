"""Difference-based, debiased time-varying long-run covariance estimation.

All curves live on the grid t_i = i/n (i = 1..n). Interior values are
computed for i = m..n-m and copied outward, so every curve is constant on
[0, m/n] and [1 - m/n, 1].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import RegressionData
from .errors import InputError, NotPSD, SingularOmega, WindowTooLarge
from .kernels import KernelSpec, as_kernel, grid, grid_weights

log = logging.getLogger(__name__)

COND_LIMIT = 1e10
RIDGE_SCALE = 1e-8
NEG_EIG_TOL = 1e-10


@dataclass
class DiffStats:
    """Lag-m difference statistics for j = m..n-m (row k holds j = m + k).

    delta:       Delta_j = (Q_{j-m+1,m} - Q_{j+1,m}) / m, shape (J, p)
    acute_delta: window mean of Xt_i Xt_i', shape (J, p, p)
    breve_delta: window mean of Xt_i' Yt_i, shape (J, p)
    """

    m: int
    delta: np.ndarray
    acute_delta: np.ndarray
    breve_delta: np.ndarray

    @property
    def j(self) -> np.ndarray:
        return np.arange(self.m, self.m + self.delta.shape[0])


@dataclass
class CovCurve:
    """p x p symmetric matrices on the grid t_i = i/n, shape (n, p, p)."""

    values: np.ndarray
    m: int | None = None
    tau: float | None = None
    estimator: str | None = None  # "difference" or "debiased" when produced here

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def t(self) -> np.ndarray:
        return grid(self.n)

    def scaled(self, c: float) -> "CovCurve":
        return CovCurve(c * self.values, self.m, self.tau, self.estimator)


@dataclass
class CoefCurve:
    """p-vectors on the grid, shape (n, p).

    ``flagged`` marks grid points where the local system could not be solved
    and the value was filled by interpolation; ``condition`` holds the
    condition number of the system that was actually solved (inf if none).
    """

    values: np.ndarray
    flagged: np.ndarray
    condition: np.ndarray


@dataclass
class DebiasedFit:
    acute: CovCurve
    correction: CovCurve
    sigma: CovCurve
    beta: CoefCurve
    stats: DiffStats


def _window_sums(a: np.ndarray, m: int) -> np.ndarray:
    """Sums of m consecutive rows of ``a``; row s covers rows s..s+m-1."""
    win = sliding_window_view(a, m, axis=0)
    return win.sum(axis=-1)


def _check_window(n: int, m: int) -> None:
    if int(m) != m or m < 1:
        raise InputError(f"window m must be a positive integer, got {m}")
    if m > n // 4:
        raise WindowTooLarge(f"m={m} exceeds floor(n/4)={n // 4}")


def q_sums(data: RegressionData, m: int) -> np.ndarray:
    """Q_{k,m} = sum_{i=k}^{k+m-1} x_i y_i for k = 1..n-m+1 (row k-1), shape (n-m+1, p)."""
    _check_window(data.n, m)
    return _window_sums(data.X * data.y[:, None], m)


def diff_stats(data: RegressionData, m: int) -> DiffStats:
    n = data.n
    _check_window(n, m)
    X, y = data.X, data.y
    xy = X * y[:, None]
    xx = X[:, :, None] * X[:, None, :]

    q = _window_sums(xy, m)
    J = n - 2 * m + 1
    delta = (q[:J] - q[m:m + J]) / m

    xt = xx[:-m] - xx[m:]
    yt = xy[:-m] - xy[m:]
    xtxt = np.einsum("iab,icb->iac", xt, xt)
    xtyt = np.einsum("iab,ib->ia", xt, yt)
    acute = _window_sums(xtxt, m)[:J] / m
    breve = _window_sums(xtyt, m)[:J] / m
    return DiffStats(m=m, delta=delta, acute_delta=acute, breve_delta=breve)


def _flatten(interior: np.ndarray, n: int, m: int) -> np.ndarray:
    """Extend values on i = m..n-m to the full grid i = 1..n."""
    idx = np.clip(np.arange(1, n + 1), m, n - m) - m
    return interior[idx]


def _smooth(terms: np.ndarray, n: int, m: int, bandwidth: float, kernel: KernelSpec) -> np.ndarray:
    """sum_j terms_j * w(t, j) for t on the interior grid; denominator sums over all n points."""
    w = grid_weights(kernel, n, bandwidth)[m - 1:n - m, m - 1:n - m]
    flat = terms.reshape(terms.shape[0], -1)
    return (w @ flat).reshape((w.shape[0],) + terms.shape[1:])


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _outer_curve(vectors: np.ndarray, n: int, m: int, tau: float, kernel: KernelSpec) -> np.ndarray:
    terms = 0.5 * m * vectors[:, :, None] * vectors[:, None, :]
    return _flatten(_symmetrize(_smooth(terms, n, m, tau, kernel)), n, m)


def _check_tau(tau: float) -> None:
    if not 0 < tau < 0.5:
        raise InputError(f"tau must lie in (0, 1/2), got {tau}")


def acute_sigma(data: RegressionData, m: int, tau: float, kernel=None,
                stats: DiffStats | None = None) -> CovCurve:
    """Biased difference estimator; PSD at every t as a sum of outer products."""
    kernel = as_kernel(kernel)
    _check_tau(tau)
    stats = stats if stats is not None else diff_stats(data, m)
    return CovCurve(_outer_curve(stats.delta, data.n, m, tau, kernel), m, tau, "difference")


def _omega_varpi_interior(stats: DiffStats, n: int, tau: float, kernel: KernelSpec):
    m = stats.m
    omega = _symmetrize(_smooth(stats.acute_delta, n, m, tau, kernel)) / 2
    varpi = _smooth(stats.breve_delta, n, m, tau ** 1.5, kernel) / 2
    return omega, varpi


def omega_varpi(data: RegressionData, m: int, tau: float, kernel=None,
                stats: DiffStats | None = None):
    """Smoothed second-order difference statistics (Omega, varpi) on the full grid.

    varpi uses bandwidth tau**1.5.
    """
    kernel = as_kernel(kernel)
    _check_tau(tau)
    stats = stats if stats is not None else diff_stats(data, m)
    omega, varpi = _omega_varpi_interior(stats, data.n, tau, kernel)
    return _flatten(omega, data.n, m), _flatten(varpi, data.n, m)


def _solve_guarded(A: np.ndarray, b: np.ndarray):
    """Solve a stack of small systems with a one-shot ridge fallback.

    Returns (solutions, condition numbers, flagged mask); flagged rows are NaN.
    """
    k, p = b.shape
    cond = np.linalg.cond(A)
    cond = np.where(np.isfinite(cond), cond, np.inf)
    bad = cond > COND_LIMIT
    A = A.copy()
    if bad.any():
        trace = np.trace(A[bad], axis1=1, axis2=2)
        ridge = RIDGE_SCALE * trace / p
        A[bad] += ridge[:, None, None] * np.eye(p)
        new_cond = np.linalg.cond(A[bad])
        new_cond = np.where(np.isfinite(new_cond) & (ridge > 0), new_cond, np.inf)
        cond[bad] = new_cond
        bad = cond > COND_LIMIT
    sol = np.full((k, p), np.nan)
    ok = ~bad
    if ok.any():
        sol[ok] = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
    return sol, cond, bad


def _fill_flagged(values: np.ndarray, flagged: np.ndarray) -> np.ndarray:
    if not flagged.any():
        return values
    idx = np.arange(values.shape[0])
    good = ~flagged
    out = values.copy()
    for c in range(values.shape[1]):
        out[flagged, c] = np.interp(idx[flagged], idx[good], values[good, c])
    return out


def beta_pilot(data: RegressionData, m: int, tau: float, kernel=None,
               stats: DiffStats | None = None) -> CoefCurve:
    """Pilot coefficient curve Omega(t)^{-1} varpi(t), no extra tuning parameter.

    Raises SingularOmega if Omega cannot be inverted at any grid point, which
    happens when all covariates are deterministic.
    """
    kernel = as_kernel(kernel)
    _check_tau(tau)
    stats = stats if stats is not None else diff_stats(data, m)
    n = data.n
    omega, varpi = _omega_varpi_interior(stats, n, tau, kernel)
    sol, cond, bad = _solve_guarded(omega, varpi)
    if bad.all():
        raise SingularOmega(
            "Omega(t) is singular on the whole grid; covariates look deterministic, "
            "use acute_sigma instead",
            flagged=_flatten(bad, n, m),
        )
    if bad.any():
        log.warning("Omega(t) ill-conditioned at %d of %d points; interpolating", bad.sum(), bad.size)
    sol = _fill_flagged(sol, bad)
    return CoefCurve(_flatten(sol, n, m), _flatten(bad, n, m), _flatten(cond, n, m))


def fit_debiased(data: RegressionData, m: int, tau: float, kernel=None,
                 stats: DiffStats | None = None) -> DebiasedFit:
    kernel = as_kernel(kernel)
    _check_tau(tau)
    stats = stats if stats is not None else diff_stats(data, m)
    n = data.n
    acute = acute_sigma(data, m, tau, kernel, stats)
    beta = beta_pilot(data, m, tau, kernel, stats)

    # A_hat_j = (G_{j-m+1..j} - G_{j+1..j+m}) / m with g_i = x_i x_i' beta(t_i)
    X = data.X
    g = X * np.einsum("ia,ia->i", X, beta.values)[:, None]
    gs = _window_sums(g, m)
    J = n - 2 * m + 1
    a_hat = (gs[:J] - gs[m:m + J]) / m
    correction = CovCurve(_outer_curve(a_hat, n, m, tau, kernel), m, tau)
    sigma = CovCurve(acute.values - correction.values, m, tau, "debiased")
    return DebiasedFit(acute, correction, sigma, beta, stats)


def debiased_sigma(data: RegressionData, m: int, tau: float, kernel=None,
                   stats: DiffStats | None = None) -> CovCurve:
    """Debiased estimator: acute_sigma minus the plug-in estimate of its bias.

    Symmetric but not necessarily PSD; pass through :func:`threshold_pd`
    before taking square roots.
    """
    return fit_debiased(data, m, tau, kernel, stats).sigma


def threshold_pd(curve: CovCurve, n: int | None = None) -> CovCurve:
    """Raise every eigenvalue below 1/n up to 1/n."""
    n = curve.n if n is None else n
    floor = 1.0 / n
    vals = curve.values
    lam, U = np.linalg.eigh(vals)
    need = lam[:, 0] < floor
    out = vals.copy()
    if need.any():
        lam_c = np.maximum(lam[need], floor)
        out[need] = _symmetrize(np.einsum("kab,kb,kcb->kac", U[need], lam_c, U[need]))
    return CovCurve(out, curve.m, curve.tau, curve.estimator)


def matrix_sqrt_psd(M: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (or a stack of them) via eigh."""
    M = np.asarray(M, dtype=float)
    lam, U = np.linalg.eigh(M)
    if np.any(lam < -NEG_EIG_TOL):
        raise NotPSD(f"matrix has eigenvalue {lam.min():.3g} < -{NEG_EIG_TOL}")
    root = np.sqrt(np.clip(lam, 0.0, None))
    S = np.einsum("...ab,...b,...cb->...ac", U, root, U)
    return _symmetrize(S)


def lower_root(M: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L' = M for positive definite M (or a stack).

    Falls back to a QR-triangularized symmetric root when Cholesky fails on a
    numerically semidefinite matrix.
    """
    M = np.asarray(M, dtype=float)
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        S = matrix_sqrt_psd(M)
        # S S' = M; S = (Q R)' gives M = R' R with R' lower triangular
        R = np.linalg.qr(np.swapaxes(S, -1, -2), mode="r")
        sign = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
        sign = np.where(sign == 0, 1.0, sign)
        return np.swapaxes(R * sign[..., :, None], -1, -2)


def sqrt_curve(curve: CovCurve) -> CovCurve:
    return CovCurve(matrix_sqrt_psd(curve.values), curve.m, curve.tau, curve.estimator)


def bootstrap_sigma(data: RegressionData, m: int, tau: float, kernel=None,
                    stats: DiffStats | None = None) -> CovCurve:
    """Thresholded long-run covariance fed to the bootstraps.

    The debiased estimator when it exists; the difference estimator when every
    covariate is deterministic (Omega singular on the whole grid), where the
    bias it corrects for does not arise.
    """
    kernel = as_kernel(kernel)
    stats = stats if stats is not None else diff_stats(data, m)
    try:
        sigma = debiased_sigma(data, m, tau, kernel, stats)
    except SingularOmega as exc:
        if exc.flagged is not None and not np.all(exc.flagged):
            raise
        sigma = acute_sigma(data, m, tau, kernel, stats)
    return threshold_pd(sigma, data.n)


def pd_root(data: RegressionData, m: int, tau: float, kernel=None,
            stats: DiffStats | None = None):
    """Thresholded estimate (see bootstrap_sigma) and its square root."""
    sigma = bootstrap_sigma(data, m, tau, kernel, stats)
    return sigma, sqrt_curve(sigma)
