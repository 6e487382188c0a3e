"""Extended minimum-volatility selection of the window m and bandwidth tau.

For every (m, tau) cell the bootstrap statistic of the target test is drawn
``B_mv`` times and its sample variance s2 recorded. A cell's volatility is the
standard deviation of s2 over the cell and its four direct neighbours
(neighbours off the grid are dropped); the least volatile cell wins, ties
going to the smaller m and then the smaller tau.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from .data import RegressionData
from .errors import InputError, NumericalError
from .estimator import diff_stats, pd_root
from .kernels import as_kernel
from .rng import normal_draws, parallel_map

CRITERIA = ("structural", "kpss", "rs", "vs", "ks")
TAU_STEP = 0.05
TAU_MAX = 0.49


@dataclass(frozen=True)
class TuningGrid:
    m_values: tuple
    tau_values: tuple

    def __post_init__(self):
        m = tuple(int(v) for v in self.m_values)
        tau = tuple(float(v) for v in self.tau_values)
        if not m or not tau:
            raise InputError("tuning grid must be non-empty")
        if list(m) != sorted(set(m)) or list(tau) != sorted(set(tau)):
            raise InputError("grid values must be strictly ascending")
        if m[0] < 1 or not all(0 < v < 0.5 for v in tau):
            raise InputError("need m >= 1 and tau in (0, 1/2)")
        object.__setattr__(self, "m_values", m)
        object.__setattr__(self, "tau_values", tau)

    @property
    def shape(self):
        return len(self.m_values), len(self.tau_values)


@dataclass
class TuningSelection:
    m_star: int
    tau_star: float
    mv_table: np.ndarray
    s2_table: np.ndarray
    grid: TuningGrid
    criterion: str = "structural"


def grid_default(n: int) -> TuningGrid:
    """Default grid: m around n^{4/15} and tau from (2/3) n^{-2/15} to n^{-2/15}."""
    if n < 50:
        raise InputError("default tuning grid needs n >= 50")
    base = n ** (4.0 / 15.0)
    lower = max(int(np.floor(3.0 / 7.0 * base)) - 1, 1)
    upper = max(int(np.floor(11.0 / 7.0 * base)) + 1, lower + 2)
    upper = min(upper, n // 4)
    m_values = tuple(range(lower, upper + 1))

    hi = n ** (-2.0 / 15.0)
    lo = 2.0 / 3.0 * hi
    taus = list(np.arange(lo, hi + 1e-12, TAU_STEP))
    # the right endpoint is always on the grid; it replaces the last stepped
    # value when the two are less than half a step apart, since a near-duplicate
    # column makes neighbouring variances agree trivially and biases MV
    if hi - taus[-1] > 1e-12:
        if len(taus) > 1 and hi - taus[-1] < TAU_STEP / 2:
            taus[-1] = hi
        else:
            taus.append(hi)
    taus = sorted({round(min(v, TAU_MAX), 12) for v in taus})
    return TuningGrid(m_values, tuple(taus))


def default_m_tau(n: int) -> tuple:
    """Fixed (m, tau) used when neither explicit values nor auto-tuning are requested."""
    m = int(np.floor(10.0 / 7.0 * n ** (4.0 / 15.0)))
    m = min(max(m, 2), n // 4)
    tau = min(5.0 / 6.0 * n ** (-2.0 / 15.0), TAU_MAX)
    return m, float(tau)


def _row_variances(m: int, data, tau_values, kind, B_mv, seed, kernel, b, eta) -> dict:
    """s2 for every tau at one m; NaN where the estimator fails."""
    from .longmemory import STATISTICS, _LmBootstrap
    from .structural import _fr_from_multipliers

    names = ("structural",) if kind == "structural" else STATISTICS
    out = {k: np.full(len(tau_values), np.nan) for k in names}
    try:
        stats = diff_stats(data, m)
    except (NumericalError, InputError):
        return out
    boot = _LmBootstrap(data, b, eta, kernel) if kind == "longmemory" else None
    noise = normal_draws(seed, (1,), B_mv, (data.n, data.p))
    for j, tau in enumerate(tau_values):
        try:
            sigma, root = pd_root(data, m, tau, kernel, stats)
        except NumericalError:
            continue
        if kind == "structural":
            draws = {"structural": _fr_from_multipliers(data.X, root.values, m, noise)}
        else:
            draws = boot.draws(sigma, noise)
        for k in names:
            out[k][j] = np.var(draws[k], ddof=1)
    return out


def mv_tables(data: RegressionData, grid: TuningGrid, kind: str, B_mv: int = 100, seed: int = 0,
              kernel=None, b: float | None = None, eta: float | None = None,
              workers: int | None = None) -> dict:
    """s2 tables (len(m_values) x len(tau_values)) keyed by criterion name.

    ``kind`` is "structural" or "longmemory"; the latter fills all four
    long-memory criteria from shared draws. Every cell reuses the same
    multipliers, from substream (seed, 1): differences between cells then
    reflect the estimator, not Monte Carlo noise, and a cell's value does not
    depend on the rest of the grid.
    """
    from .longmemory import default_eta, gcv_bandwidth

    kernel = as_kernel(kernel)
    if kind not in ("structural", "longmemory"):
        raise InputError(f"unknown bootstrap kind {kind!r}")
    if kind == "longmemory":
        b = gcv_bandwidth(data, kernel=kernel) if b is None else b
        eta = default_eta(b) if eta is None else eta
    task = partial(_row_variances, data=data, tau_values=grid.tau_values, kind=kind,
                   B_mv=B_mv, seed=seed, kernel=kernel, b=b, eta=eta)
    rows = parallel_map(task, grid.m_values, workers)
    tables = {k: np.vstack([r[k] for r in rows]) for k in rows[0]}
    return {"grid": grid, **tables}


def mv_table(s2: np.ndarray) -> np.ndarray:
    """Neighbourhood standard deviation of s2 (sample sd, centre counted once)."""
    M1, M2 = s2.shape
    mv = np.full((M1, M2), np.inf)
    for i in range(M1):
        for j in range(M2):
            if not np.isfinite(s2[i, j]):
                continue
            cells = [(i, j), (i, j - 1), (i, j + 1), (i - 1, j), (i + 1, j)]
            vals = [s2[a, c] for a, c in cells if 0 <= a < M1 and 0 <= c < M2]
            vals = np.array([v for v in vals if np.isfinite(v)])
            mv[i, j] = np.std(vals, ddof=1) if vals.size > 1 else 0.0
    return mv


def select_from_tables(tables: dict, criterion: str) -> TuningSelection:
    if criterion not in tables:
        raise InputError(f"criterion {criterion!r} not available; have {sorted(tables)}")
    grid = tables["grid"]
    s2 = tables[criterion]
    mv = mv_table(s2)
    if not np.isfinite(mv).any():
        raise NumericalError("estimator failed on every tuning-grid cell")
    i, j = np.unravel_index(int(np.argmin(mv)), mv.shape)
    return TuningSelection(m_star=grid.m_values[i], tau_star=grid.tau_values[j],
                           mv_table=mv, s2_table=s2, grid=grid, criterion=criterion)


def mv_select(data: RegressionData, grid: TuningGrid, criterion: str = "structural",
              B_mv: int = 100, seed: int = 0, kernel=None, b: float | None = None,
              eta: float | None = None, workers: int | None = None) -> TuningSelection:
    if criterion not in CRITERIA:
        raise InputError(f"criterion must be one of {CRITERIA}")
    kind = "structural" if criterion == "structural" else "longmemory"
    tables = mv_tables(data, grid, kind, B_mv=B_mv, seed=seed, kernel=kernel, b=b, eta=eta,
                       workers=workers)
    return select_from_tables(tables, criterion)
