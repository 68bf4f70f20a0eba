"""Small least-squares helpers shared by the diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    stderr: float
    points: int
    decades: float

    @property
    def coefficient(self) -> float:
        return float(np.exp(self.intercept))


def loglog_fit(x, y, weights=None) -> LogLogFit:
    """Fit log|y| = slope * log x + intercept by (weighted) least squares."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    lx, ly = np.log(x[keep]), np.log(y[keep])
    if lx.size < 3:
        return LogLogFit(float("nan"), float("nan"), float("inf"), int(lx.size), 0.0)
    w = np.ones_like(lx) if weights is None else np.asarray(weights, dtype=float)[keep]
    A = np.stack([lx, np.ones_like(lx)], axis=1) * np.sqrt(w)[:, None]
    b = ly * np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = b - A @ coef
    dof = max(lx.size - 2, 1)
    cov = np.linalg.pinv(A.T @ A) * float(resid @ resid) / dof
    decades = float((lx.max() - lx.min()) / np.log(10.0))
    return LogLogFit(float(coef[0]), float(coef[1]), float(np.sqrt(cov[0, 0])), int(lx.size), decades)


def power_fit(x, y, exponents) -> np.ndarray:
    """Coefficients c_k of y ~ sum_k c_k x**exponents[k] by least squares."""
    x = np.asarray(x, dtype=float)
    A = np.stack([x ** e for e in exponents], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.asarray(y, dtype=float), rcond=None)
    return coef
