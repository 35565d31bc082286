"""Elastic-net targeting of an auxiliary panel with BIC grid selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .ssm import PanelSeries, _as_values


class OptimizationError(RuntimeError):
    pass


@dataclass
class TargetingResult:
    selected: np.ndarray
    coef: np.ndarray
    lam: float
    alpha: float
    bic: float
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    names: Optional[list] = None

    def to_csv(self, path):
        names = self.names or [f"x{i + 1}" for i in range(self.coef.size)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["series", "coefficient", "selected"])
            for i, nm in enumerate(names):
                w.writerow([nm, f"{self.coef[i]:.10g}", int(i in set(self.selected.tolist()))])


@njit(cache=True)
def _objective(c, yy, l1, l2, beta, Gb):
    q = yy - 2.0 * (c @ beta) + beta @ Gb
    pen = 0.0
    for j in range(beta.size):
        pen += 0.5 * l2 * beta[j] * beta[j] + l1 * abs(beta[j])
    return 0.5 * q + pen


@njit(cache=True)
def _cd_gram(G, c, yy, lam, alpha, beta, tol, max_sweeps):
    """Coordinate descent on the Gram form of the elastic-net objective.

    Objective: (yy - 2 c'b + b'G b)/2 + lam((1-alpha)/2 |b|^2 + alpha |b|_1).
    A sweep converges when no coordinate moves the fit by more than
    ``tol * yy`` in squared terms.  Returns (objective, sweeps, converged).
    """
    p = c.size
    l1 = lam * alpha
    l2 = lam * (1.0 - alpha)
    Gb = G @ beta
    obj = _objective(c, yy, l1, l2, beta, Gb)
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            bj = beta[j]
            z = c[j] - Gb[j] + G[j, j] * bj
            if z > l1:
                new = (z - l1) / (G[j, j] + l2)
            elif z < -l1:
                new = (z + l1) / (G[j, j] + l2)
            else:
                new = 0.0
            d = new - bj
            if d != 0.0:
                beta[j] = new
                for k in range(p):
                    Gb[k] += G[k, j] * d
                if G[j, j] * d * d > max_delta:
                    max_delta = G[j, j] * d * d
        obj = _objective(c, yy, l1, l2, beta, Gb)
        if max_delta <= tol * yy:
            return obj, sweep + 1, True
    return obj, max_sweeps, False


def _standardize(y, X):
    y = np.asarray(y, dtype=float).ravel()
    X = _as_values(X)
    if X.shape[0] != y.size:
        raise ValueError(f"y has {y.size} rows, X has {X.shape[0]}")
    xm = X.mean(axis=0)
    xs = X.std(axis=0)
    xs = np.where(xs > 0, xs, 1.0)
    Xs = (X - xm) / xs
    ym = y.mean()
    return y - ym, Xs, xm, xs, ym


def _gram(yc, Xs):
    T = yc.size
    return Xs.T @ Xs / T, Xs.T @ yc / T, yc @ yc / T


def elastic_net(y, X, lam: float, alpha: float, tol: float = 1e-12, max_sweeps: int = 100000,
                standardized_coef: bool = False) -> np.ndarray:
    """Elastic-net coefficients by coordinate descent.

    Minimizes 1/(2T)|y - Xb|^2 + lam((1-alpha)/2 |b|^2 + alpha |b|_1) after
    centering y and standardizing the columns of X (population s.d.).
    Coefficients are returned in the units of X unless ``standardized_coef``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    yc, Xs, xm, xs, _ = _standardize(y, X)
    G, c, yy = _gram(yc, Xs)
    beta = np.zeros(c.size)
    if np.isfinite(lam):
        _, _, ok = _cd_gram(G, c, yy, float(lam), float(alpha), beta, tol, max_sweeps)
        if not ok:
            raise OptimizationError(f"coordinate descent did not converge (lambda={lam}, alpha={alpha})")
    return beta if standardized_coef else beta / xs


def lambda_max(c: np.ndarray, alpha: float) -> float:
    """Smallest penalty that zeroes every coefficient (given the Gram vector c)."""
    return float(np.abs(c).max() / max(alpha, 1e-3))


def bic(rss: float, T: int, df: int) -> float:
    return T * np.log(rss / T) + df * np.log(T)


def target_panel(slope, X_gt, grid_lambda: Optional[Sequence[float]] = None,
                 grid_alpha: Optional[Sequence[float]] = None, n_lambda: int = 50, decades: float = 4.0,
                 difference: bool = True, names: Optional[Sequence[str]] = None, tol: float = 1e-8) -> TargetingResult:
    """Select auxiliary series that explain changes in the estimated slope.

    Both sides are first-differenced (unless ``difference`` is False) and the
    (lambda, alpha) pair minimizing BIC = T log(RSS/T) + df log T is kept,
    with df the number of nonzero coefficients.
    """
    if isinstance(X_gt, PanelSeries) and names is None and X_gt.names is not None:
        names = list(X_gt.names)
    y = np.asarray(slope, dtype=float).ravel()
    X = _as_values(X_gt)
    if difference:
        y = np.diff(y)
        X = np.diff(X, axis=0)
    ok = ~np.isnan(y) & ~np.isnan(X).any(axis=1)
    y, X = y[ok], X[ok]
    grid_alpha = list(np.round(np.arange(1, 11) / 10, 10)) if grid_alpha is None else list(grid_alpha)
    if len(grid_alpha) == 0 or (grid_lambda is not None and len(grid_lambda) == 0):
        raise ValueError("empty tuning grid")
    yc, Xs, xm, xs, ym = _standardize(y, X)
    T = yc.size
    G, c, yy = _gram(yc, Xs)
    best = None
    for alpha in grid_alpha:
        if grid_lambda is None:
            lmax = lambda_max(c, alpha)
            lams = lmax * np.logspace(0, -decades, n_lambda)
        else:
            lams = np.sort(np.asarray(grid_lambda, dtype=float))[::-1]
        beta = np.zeros(c.size)
        for lam in lams:
            if np.isfinite(lam):
                _, _, conv = _cd_gram(G, c, yy, float(lam), float(alpha), beta, tol, 100000)
                if not conv:
                    raise OptimizationError(f"coordinate descent did not converge (lambda={lam}, alpha={alpha})")
            else:
                beta[:] = 0.0
            rss = float(((yc - Xs @ beta) ** 2).sum())
            df = int(np.count_nonzero(beta))
            val = bic(max(rss, 1e-300), T, df)
            if best is None or val < best[0] - 1e-12:
                best = (val, float(lam), float(alpha), beta.copy())
    val, lam, alpha, beta = best
    coef = beta / xs
    return TargetingResult(np.flatnonzero(beta), coef, lam, alpha, val, xm, xs, ym,
                           list(names) if names is not None else None)
