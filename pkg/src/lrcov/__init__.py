"""Difference-based long-run covariance estimation for time-varying regressions.

The estimator works on lag-m differences of x_i y_i, so trends in the
coefficients cancel without fitting them first; a plug-in correction removes
the bias that stochastic covariates leave behind. Two bootstrap tests are
built on it: one for constant coefficients and one for long memory.
"""

__version__ = "0.1.0"

from .data import RegressionData
from .errors import (AllSingular, EmptyWindow, InputError, IoError, LrcovError, NonNumeric,
                     NotPSD, NumericalError, ParseError, SingularDesign, SingularLocalDesign,
                     SingularMhat, SingularOmega, TooFewRows, TrimTooLarge, WindowTooLarge)
from .estimator import (CovCurve, acute_sigma, beta_pilot, debiased_sigma, diff_stats,
                        fit_debiased, matrix_sqrt_psd, omega_varpi, pd_root, threshold_pd)
from .io import emit_report, ingest_csv, load_report
from .kernels import KernelSpec, as_kernel, weights
from .longmemory import (LongMemoryConfig, LmTestReport, gcv_bandwidth, jackknife_fit,
                         lm_statistics, longmemory_test)
from .simulate import (MonteCarloReport, ScenarioSpec, estimate_d_slope, frac_diff_coeffs,
                       gen_scenario, kappa2, monte_carlo)
from .structural import StructuralConfig, TestReport, bootstrap_fr, structural_test, tn_statistic
from .tuning import TuningGrid, TuningSelection, default_m_tau, grid_default, mv_select
