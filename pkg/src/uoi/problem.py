"""Regression problem container shared by the solver and the pipelines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """A design matrix / response pair, the unit of estimation.

    Parameters
    ----------
    X : ndarray, shape (n, p)
        Design matrix, one row per sample.
    y : ndarray, shape (n,)
        Response vector.
    beta_true : ndarray, shape (p,), optional
        Ground-truth coefficients when the problem is synthetic.
    """

    X: np.ndarray
    y: np.ndarray
    beta_true: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got ndim={X.ndim}")
        if y.ndim != 1:
            raise ValueError(f"y must be 1-D, got ndim={y.ndim}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.beta_true is not None:
            bt = np.asarray(self.beta_true, dtype=np.float64)
            if bt.shape != (X.shape[1],):
                raise ValueError(
                    f"beta_true has shape {bt.shape}, expected ({X.shape[1]},)"
                )
            object.__setattr__(self, "beta_true", bt)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def rows(self, indices: np.ndarray) -> "RegressionProblem":
        """Row-subset view of the problem (bootstrap samples, shards)."""
        idx = np.asarray(indices, dtype=np.intp)
        return RegressionProblem(self.X[idx], self.y[idx], self.beta_true)
