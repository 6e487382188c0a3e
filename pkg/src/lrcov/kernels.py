"""Compactly supported smoothing kernels and normalized local weights."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EmptyWindow, InputError

SQRT2 = np.sqrt(2.0)


def _triangular(u):
    return 1.0 - np.abs(u)


def _epanechnikov(u):
    return 0.75 * (1.0 - u * u)


def _quartic(u):
    return 15.0 / 16.0 * (1.0 - u * u) ** 2


def _triweight(u):
    return 35.0 / 32.0 * (1.0 - u * u) ** 3


def _tricube(u):
    return 70.0 / 81.0 * (1.0 - np.abs(u) ** 3) ** 3


_FAMILIES = {
    "triangular": _triangular,
    "epanechnikov": _epanechnikov,
    "quartic": _quartic,
    "triweight": _triweight,
    "tricube": _tricube,
}

KERNEL_NAMES = tuple(_FAMILIES)
DEFAULT_KERNEL = "epanechnikov"


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric probability density supported on (-1, 1)."""

    family: str = DEFAULT_KERNEL

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InputError(
                f"unknown kernel {self.family!r}; choose from {', '.join(KERNEL_NAMES)}"
            )

    def __call__(self, u):
        return kernel_eval(self, u)

    def jackknife(self, u):
        return jackknife_kernel_eval(self, u)


def as_kernel(kernel) -> KernelSpec:
    if isinstance(kernel, KernelSpec):
        return kernel
    if kernel is None:
        return KernelSpec()
    return KernelSpec(str(kernel))


def kernel_eval(spec: KernelSpec, u):
    """K(u), zero for |u| >= 1. Accepts scalars or arrays."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    vals = np.where(inside, _FAMILIES[spec.family](np.where(inside, u, 0.0)), 0.0)
    return float(vals) if vals.ndim == 0 else vals


def jackknife_kernel_eval(spec: KernelSpec, u):
    """Jackknife equivalent kernel 2*sqrt(2)*K(sqrt(2)*u) - K(u).

    Integrates to one but is negative near the edge of its support.
    """
    u = np.asarray(u, dtype=float)
    vals = 2.0 * SQRT2 * kernel_eval(spec, SQRT2 * u) - kernel_eval(spec, u)
    return float(vals) if np.ndim(vals) == 0 else vals


def grid(n: int) -> np.ndarray:
    """Rescaled time points t_i = i/n, i = 1..n."""
    return np.arange(1, n + 1) / n


def weight_matrix(spec: KernelSpec, t, n: int, bandwidth: float) -> np.ndarray:
    """Rows of local weights, one row per evaluation point in ``t``.

    Row k is proportional to K((t_i - t_k)/bandwidth) over i = 1..n and sums
    to one.
    """
    if bandwidth <= 0:
        raise InputError("bandwidth must be positive")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    raw = kernel_eval(spec, (grid(n)[None, :] - t[:, None]) / bandwidth)
    raw = np.atleast_2d(raw)
    total = raw.sum(axis=1)
    if np.any(total <= 0):
        bad = t[total <= 0][0]
        raise EmptyWindow(f"no grid point within bandwidth {bandwidth} of t={bad}")
    return raw / total[:, None]


@lru_cache(maxsize=16)
def _full_weights(spec: KernelSpec, n: int, bandwidth: float) -> np.ndarray:
    w = weight_matrix(spec, grid(n), n, bandwidth)
    w.flags.writeable = False
    return w


def grid_weights(spec: KernelSpec, n: int, bandwidth: float) -> np.ndarray:
    """Cached (n, n) weight matrix evaluated at every grid point; read-only."""
    return _full_weights(spec, int(n), float(bandwidth))


def weights(spec: KernelSpec, t: float, n: int, bandwidth: float) -> np.ndarray:
    return weight_matrix(spec, [t], n, bandwidth)[0]
