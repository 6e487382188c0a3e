"""Data-generating processes, fractional integration and the Monte Carlo harness.

Innovation streams are independent substreams of the scenario seed, taken in
a fixed order: stream 0 -> epsilon, 1 -> zeta, 2 -> eta. Time-varying AR
filters are locally stationary: x_i = G(t_i, F_i) is the stationary AR(1)
solution with its coefficient frozen at t_i = i/n. The ``burn_in`` pre-sample
innovations supply the infinite past; pre-sample time points use t = t_1 and
also serve as the history for fractional integration.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import integrate, special

from .data import RegressionData
from .errors import InputError
from .estimator import debiased_sigma
from .kernels import as_kernel
from .rng import parallel_map, substream

SCENARIOS = ("CP1", "CP2", "CP4", "M1", "APPD", "A1", "custom")
DEFAULT_BURN_IN = 2000


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative description of one simulated data set.

    ``delta_or_d`` is the break magnitude for CP scenarios and the memory
    parameter for M1/APPD. ``custom`` reuses the ``base`` scenario with a
    different innovation law, e.g. ``innovations="t5"``.
    """

    name: str
    n: int
    delta_or_d: float = 0.0
    seed: int = 0
    burn_in: int = DEFAULT_BURN_IN
    base: str | None = None
    innovations: str = "normal"
    stream: tuple = ()

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise InputError(f"unknown scenario {self.name!r}")
        model = self.model
        if model not in SCENARIOS[:-1]:
            raise InputError("custom scenarios need a base model")
        if model.startswith("CP") and self.delta_or_d < 0:
            raise InputError("delta must be non-negative")
        if model in ("M1", "APPD") and not 0 <= self.delta_or_d < 0.5:
            raise InputError("d must lie in [0, 1/2)")

    @property
    def model(self) -> str:
        return self.base if self.name == "custom" else self.name


@dataclass
class Simulation:
    data: RegressionData
    beta: np.ndarray  # true coefficient curve, (n, p)
    error: np.ndarray  # regression error actually added, (n,)
    extras: dict = field(default_factory=dict)


def frac_diff_coeffs(d: float, J: int) -> np.ndarray:
    """MA coefficients psi_0..psi_J of (1 - B)^{-d}."""
    if J < 0:
        raise InputError("J must be non-negative")
    j = np.arange(1, J + 1)
    return np.concatenate([[1.0], np.cumprod((j - 1 + d) / j)])


def frac_coeffs_gamma(d: float, j) -> np.ndarray:
    """psi_j = Gamma(j + d) / (Gamma(d) Gamma(j + 1)), evaluated through log-gamma."""
    j = np.asarray(j, dtype=float)
    if d == 0:
        return (j == 0).astype(float)
    logv = special.gammaln(j + d) - special.gammaln(d) - special.gammaln(j + 1)
    return np.exp(logv)


def frac_integrate(e: np.ndarray, d: float) -> np.ndarray:
    """sum_{j=0}^{k} psi_j e_{k-j} over the whole supplied history."""
    if d == 0:
        return np.array(e, dtype=float)
    psi = frac_diff_coeffs(d, e.size - 1)
    return np.convolve(e, psi)[: e.size]


def _innovations(spec: ScenarioSpec, stream: int, size: int, heavy: bool) -> np.ndarray:
    rng = substream(spec.seed, *spec.stream, stream)
    law = spec.innovations
    if not heavy or law == "normal":
        return rng.standard_normal(size)
    if law.startswith("t"):
        return rng.standard_t(float(law[1:]), size)
    raise InputError(f"unknown innovation law {law!r}")


def _ls_ar(coef, drift, innov, burn: int) -> np.ndarray:
    """Locally stationary AR(1) with the coefficient frozen at each time point.

    x_k = sum_{j>=0} coef_k^j (drift_k + innov_{k-j}), truncated at the start of
    the supplied history or once |coef|^j drops below machine precision.
    Returns the last ``innov.size - burn`` values.
    """
    coef = np.asarray(coef, dtype=float)
    drift = np.broadcast_to(np.asarray(drift, dtype=float), coef.shape)
    amax = float(np.max(np.abs(coef)))
    depth = innov.size - 1
    if amax < 1:
        depth = min(depth, int(np.ceil(np.log(1e-17) / np.log(amax))) + 1) if amax > 0 else 0
    padded = np.concatenate([np.zeros(depth), innov])
    # window row k holds innov_{k-depth..k}; reverse so column j is lag j
    win = sliding_window_view(padded, depth + 1)[burn:, ::-1]
    c = coef[burn:]
    powers = c[:, None] ** np.arange(depth + 1)[None, :]
    avail = np.arange(burn, innov.size)[:, None] >= np.arange(depth + 1)[None, :]
    powers = powers * avail
    return np.einsum("kj,kj->k", powers, win) + drift[burn:] * powers.sum(axis=1)


def _extended_time(n: int, burn_in: int) -> np.ndarray:
    # pre-sample points reuse t_1 so the coefficient functions stay in their design range
    t = np.arange(1, n + 1) / n
    return np.concatenate([np.full(burn_in, t[0]), t])


def _gen_cp(spec: ScenarioSpec) -> Simulation:
    n, burn, delta = spec.n, spec.burn_in, spec.delta_or_d
    N = n + burn
    te = _extended_time(n, burn)
    eps = _innovations(spec, 0, N, heavy=False)
    zeta = _innovations(spec, 1, N, heavy=True)
    eta = _innovations(spec, 2, N, heavy=False)
    x1 = _ls_ar(0.5 - 0.5 * te, 0.0, (eta + eps) / 2, burn)
    x2 = _ls_ar(0.25 + 0.5 * (te - 0.5) ** 2, 0.0, eps, burn)
    u = _ls_ar(0.65 * np.cos(2 * np.pi * te), 0.0, zeta, burn)
    t = te[burn:]
    e = (1 + 0.1 * x1) * u

    beta = np.ones((n, 3))
    wave = np.sin(2 * np.pi * t)
    model = spec.model
    if model == "CP1":
        beta[:, 1] += 2 * delta * wave * (t >= 0.5)
    elif model == "CP2":
        beta[:, 0] += delta * wave * (t <= 0.4)
        beta[:, 1] += delta / 2 * (t >= 0.7)
    else:
        on = (t <= 0.2) | ((t >= 0.4) & (t <= 0.6)) | (t >= 0.8)
        beta[:, 0] += 1.5 * delta * wave * on
    X = np.column_stack([np.ones(n), x1, x2])
    y = np.einsum("ia,ia->i", X, beta) + e
    return Simulation(RegressionData(y, X), beta, e, {"u": u})


def _gen_m1(spec: ScenarioSpec) -> Simulation:
    n, burn, d = spec.n, spec.burn_in, spec.delta_or_d
    N = n + burn
    te = _extended_time(n, burn)
    eps = _innovations(spec, 0, N, heavy=True)
    zeta = _innovations(spec, 1, N, heavy=False)
    if spec.model == "M1":
        w_coef, w_drift, b_scale, amp = 0.1 + 0.1 * np.cos(2 * np.pi * te), 0.7, 0.8, 4.0
    else:
        w_coef, w_drift, b_scale, amp = 0.1 * np.cos(2 * np.pi * te), 0.4, 0.6, 8.0
    W = _ls_ar(w_coef, w_drift * (te - 0.5) ** 2, 0.2 * zeta, 0)
    Bp = _ls_ar(0.3 - 0.4 * (te - 0.5) ** 2, 0.0, b_scale * eps, 0)
    e_short = Bp * np.sqrt(1 + W ** 2)
    e = frac_integrate(e_short, d)[burn:]
    t = te[burn:]
    x = W[burn:]
    beta = np.column_stack([amp * np.sin(np.pi * t), 4 * np.exp(-2 * (t - 0.5) ** 2)])
    X = np.column_stack([np.ones(n), x])
    y = np.einsum("ia,ia->i", X, beta) + e
    return Simulation(RegressionData(y, X), beta, e, {"e_short": e_short[burn:]})


A1_SIGMA = np.array([[1.0, 2.0, 0.0], [2.0, 5.0, 0.0], [0.0, 0.0, 1.0]])


def _gen_a1(spec: ScenarioSpec) -> Simulation:
    """Independent stochastic-trend model; true long-run covariance is constant (A1_SIGMA)."""
    n = spec.n
    t = np.arange(1, n + 1) / n
    x1 = 2.0 + _innovations(spec, 0, n, heavy=False)
    x2 = _innovations(spec, 1, n, heavy=False)
    e = _innovations(spec, 2, n, heavy=True)
    beta = np.column_stack([4 * (t - 0.5) ** 2, np.full(n, 0.5), np.full(n, 0.4)])
    X = np.column_stack([np.ones(n), x1, x2])
    y = np.einsum("ia,ia->i", X, beta) + e
    return Simulation(RegressionData(y, X), beta, e, {"sigma": A1_SIGMA})


def gen_scenario(spec: ScenarioSpec) -> Simulation:
    model = spec.model
    if model.startswith("CP"):
        return _gen_cp(spec)
    if model in ("M1", "APPD"):
        return _gen_m1(spec)
    return _gen_a1(spec)


def _kappa2_integrand(t: float, d: float) -> float:
    # t^d - (t-1)_+^d and 2t^d - (t-1)_+^d - (t+1)^d, written to avoid cancellation for large t
    if t <= 1.0:
        lower = 0.0 if t < 1.0 else (1.0 if d == 0 else 0.0)
        first = t ** d - lower
        second = 2 * t ** d - lower - (t + 1) ** d
        return first * second
    td = t ** d
    dm = math.expm1(d * math.log1p(-1.0 / t))
    dp = math.expm1(d * math.log1p(1.0 / t))
    return (-td * dm) * (-td * (dm + dp))


def kappa2(d: float, epsabs: float = 1e-12, epsrel: float = 1e-10, upper: float = 1e4) -> float:
    """Scale constant of the m^{2d} inflation of the estimator under long memory.

    The integrand behaves like d^2 (1-d) t^{2d-3} at infinity; the integral is
    truncated at ``upper`` and the analytic tail d^2 T^{2d-2} / 2 added back.
    """
    if not 0 <= d < 0.5:
        raise InputError("d must lie in [0, 1/2)")
    if d == 0:
        return 1.0
    f = partial(_kappa2_integrand, d=d)
    opts = dict(epsabs=epsabs, epsrel=epsrel, limit=500)
    total = integrate.quad(f, 0.0, 1.0, **opts)[0]
    edges = [1.0, 2.0, 10.0, 100.0, 1000.0]
    edges = [e for e in edges if e < upper] + [upper]
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(f, a, b, **opts)[0]
    total += d * d * upper ** (2 * d - 2) / 2.0
    return total / special.gamma(d + 1) ** 2


def estimate_d_slope(data: RegressionData, m_grid, tau: float, kernel=None) -> dict:
    """Regress the mean log Frobenius norm of the estimate on log m; d_hat is half the slope."""
    kernel = as_kernel(kernel)
    m_grid = sorted({int(m) for m in m_grid})
    if len(m_grid) < 3:
        raise InputError("need at least three distinct m values")
    xs = np.log(m_grid)
    ys = np.array([
        np.mean(np.log(np.linalg.norm(debiased_sigma(data, m, tau, kernel).values, axis=(1, 2))))
        for m in m_grid
    ])
    out = slope_from_points(xs, ys)
    out["points"] = {"log_m": xs.tolist(), "mean_log_norm": ys.tolist(), "m": m_grid}
    return out


def slope_from_points(log_m, mean_log_norm) -> dict:
    """OLS line through (log m, mean log norm); d_hat is half the slope."""
    slope, intercept = np.polyfit(np.asarray(log_m, float), np.asarray(mean_log_norm, float), 1)
    return {"d_hat": float(slope / 2), "slope": float(slope), "intercept": float(intercept)}


# ---------------------------------------------------------------- Monte Carlo


@dataclass
class MonteCarloReport:
    test: str
    replications: int
    levels: tuple
    cells: list  # scenario dicts
    rates: list  # tidy rows: cell, scenario, n, delta_or_d, statistic, level, rate, ci
    p_values: dict  # "cell/statistic" -> list of p-values in replicate order
    base_seed: int = 0
    config: dict = field(default_factory=dict)

    def rate(self, cell: int, level: float, statistic: str | None = None) -> float:
        for row in self.rates:
            if row["cell"] == cell and abs(row["level"] - level) < 1e-12 and \
                    (statistic is None or row["statistic"] == statistic):
                return row["rate"]
        raise KeyError((cell, level, statistic))


def _replicate_seed(base_seed: int, cell: int, rep: int) -> int:
    return int(substream(base_seed, cell, rep, 2**31 - 1).integers(2**62))


def _run_replicate(job, scenarios, test, base_seed, test_config) -> dict:
    from .longmemory import longmemory_test
    from .structural import structural_test

    c, r = job
    spec = scenarios[c]
    sim = gen_scenario(ScenarioSpec(**{**asdict(spec), "seed": base_seed, "stream": (c, r)}))
    seed = _replicate_seed(base_seed, c, r)
    if test == "structural":
        report = structural_test(sim.data, seed=seed, **test_config)
        return {"structural": report.p_value}
    report = longmemory_test(sim.data, seed=seed, **test_config)
    return report.p_values


def monte_carlo(scenarios, test: str, replications: int, base_seed: int = 0,
                test_config: dict | None = None, levels=(0.05, 0.10),
                workers: int | None = None) -> MonteCarloReport:
    """Rejection rates (p < level) per scenario cell.

    Replicate r of cell c simulates from substream (base_seed, c, r), so the
    report is identical for any number of workers.
    """
    if test not in ("structural", "longmemory"):
        raise InputError("test must be 'structural' or 'longmemory'")
    scenarios = list(scenarios)
    test_config = dict(test_config or {})
    jobs = [(c, r) for c in range(len(scenarios)) for r in range(replications)]
    task = partial(_run_replicate, scenarios=scenarios, test=test, base_seed=base_seed,
                   test_config=test_config)
    results = parallel_map(task, jobs, workers)

    p_values, rows = {}, []
    for c, spec in enumerate(scenarios):
        mine = results[c * replications:(c + 1) * replications]
        for stat in mine[0]:
            pv = np.array([res[stat] for res in mine])
            p_values[f"{c}/{stat}"] = pv.tolist()
            for a in levels:
                rate = float(np.mean(pv < a))
                rows.append({"cell": c, "scenario": spec.name, "n": spec.n,
                             "delta_or_d": spec.delta_or_d, "statistic": stat,
                             "level": float(a), "rate": rate,
                             "ci": 1.96 * math.sqrt(rate * (1 - rate) / replications)})
    return MonteCarloReport(test=test, replications=replications, levels=tuple(levels),
                            cells=[asdict(s) for s in scenarios], rates=rows,
                            p_values=p_values, base_seed=base_seed, config=test_config)
