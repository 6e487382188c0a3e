from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class RegressionData:
    """Responses ``y`` (n,) and covariates ``X`` (n, p) of y_i = x_i' beta(i/n) + e_i.

    The first covariate must be the intercept (a column of ones).
    """

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise InputError(f"X has shape {X.shape}, expected ({y.shape[0]}, p)")
        if X.shape[1] == 0 or not np.all(X[:, 0] == 1.0):
            raise InputError("first covariate column must be identically 1 (intercept)")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise InputError("data contain non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @classmethod
    def from_arrays(cls, y, covariates=None) -> "RegressionData":
        """Build from responses and optional covariates, prepending an intercept if missing."""
        y = np.asarray(y, dtype=float).ravel()
        if covariates is None:
            return cls(y, np.ones((y.size, 1)))
        Z = np.asarray(covariates, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        ones = np.all(Z == 1.0, axis=0)
        if ones.any():
            k = int(np.argmax(ones))
            order = [k] + [j for j in range(Z.shape[1]) if j != k]
            return cls(y, Z[:, order])
        return cls(y, np.column_stack([np.ones(y.size), Z]))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def scaled(self, c: float) -> "RegressionData":
        return RegressionData(c * self.y, self.X)
