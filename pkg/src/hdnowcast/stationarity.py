"""Augmented Dickey-Fuller screening with bootstrap false-discovery control."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from statsmodels.tsa.adfvalues import mackinnonp

from .ssm import PanelSeries, _as_values

_REG = {"none": "n", "const": "c", "const+trend": "ct"}


class UnitRootTestError(ValueError):
    pass


@dataclass
class UnitRootReport:
    names: list
    stat: np.ndarray
    pvalue: np.ndarray
    lags: np.ndarray
    rejected: np.ndarray
    level: float
    block_len: int
    n_boot: int
    seed: Optional[int]
    deterministics: str

    @property
    def i1(self) -> np.ndarray:
        """Series for which the unit root is not rejected."""
        return ~self.rejected

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["series", "stat", "pvalue", "lags", "decision"])
            for i, name in enumerate(self.names):
                w.writerow([name, f"{self.stat[i]:.6f}", f"{self.pvalue[i]:.6f}", int(self.lags[i]),
                            "I(0)" if self.rejected[i] else "I(1)"])


def default_max_lag(T: int) -> int:
    return int(math.floor(12 * (T / 100.0) ** 0.25))


def _design(x: np.ndarray, lag: int, det: str, start: int):
    """ADF regression of dx_t on x_{t-1}, deterministics and lagged dx, for t >= start."""
    dx = np.diff(x)
    T = dx.size
    rows = np.arange(start, T)
    cols = [x[rows]]
    if det in ("const", "const+trend"):
        cols.append(np.ones(rows.size))
    if det == "const+trend":
        cols.append(rows + 1.0)
    for j in range(1, lag + 1):
        cols.append(dx[rows - j])
    return dx[rows], np.column_stack(cols)


def _tstat(yv, X):
    XtX = X.T @ X
    beta = np.linalg.solve(XtX, X.T @ yv)
    resid = yv - X @ beta
    dof = yv.size - X.shape[1]
    s2 = resid @ resid / dof
    se = math.sqrt(s2 * np.linalg.inv(XtX)[0, 0])
    return beta[0] / se, resid @ resid


def adf_test(x, deterministics: str = "const+trend", max_lag: Optional[int] = None,
             lag: Optional[int] = None) -> tuple:
    """ADF t-statistic, MacKinnon p-value and the lag order used.

    The lag is chosen by BIC over 0..max_lag on a common sample unless given.
    """
    if deterministics not in _REG:
        raise UnitRootTestError(f"unknown deterministics {deterministics!r}")
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 20:
        raise UnitRootTestError(f"series too short for an ADF test ({x.size} < 20)")
    if np.any(np.isnan(x)):
        raise UnitRootTestError("ADF test needs a complete series")
    if np.ptp(x) == 0:
        raise UnitRootTestError("constant series")
    if lag is None:
        max_lag = default_max_lag(x.size) if max_lag is None else max_lag
        max_lag = max(0, min(max_lag, x.size // 2 - 4))
        best = None
        for k in range(max_lag + 1):
            yv, X = _design(x, k, deterministics, max_lag)
            _, rss = _tstat(yv, X)
            nobs = yv.size
            bic = nobs * math.log(rss / nobs) + X.shape[1] * math.log(nobs)
            if best is None or bic < best[0]:
                best = (bic, k)
        lag = best[1]
    yv, X = _design(x, lag, deterministics, lag)
    stat, _ = _tstat(yv, X)
    p = float(mackinnonp(stat, regression=_REG[deterministics], N=1))
    return float(stat), p, int(lag)


def _batch_adf_stats(Xp: np.ndarray, lags: np.ndarray, det: str) -> np.ndarray:
    """ADF statistics for every column of ``Xp`` at fixed per-column lags."""
    n = Xp.shape[1]
    out = np.empty(n)
    for k in np.unique(lags):
        idx = np.flatnonzero(lags == k)
        D = np.diff(Xp[:, idx], axis=0)
        T = D.shape[0]
        rows = np.arange(k, T)
        cols = [Xp[rows][:, idx]]
        if det in ("const", "const+trend"):
            cols.append(np.ones((rows.size, idx.size)))
        if det == "const+trend":
            cols.append(np.broadcast_to((rows + 1.0)[:, None], (rows.size, idx.size)))
        for j in range(1, k + 1):
            cols.append(D[rows - j])
        Xd = np.stack(cols, axis=-1).transpose(1, 0, 2)  # series x time x regressors
        yv = D[rows].T
        Xt = Xd.transpose(0, 2, 1)
        XtX = Xt @ Xd
        beta = np.linalg.solve(XtX, Xt @ yv[..., None])
        resid = yv - (Xd @ beta)[..., 0]
        beta = beta[..., 0]
        dof = rows.size - Xd.shape[2]
        s2 = (resid ** 2).sum(axis=1) / dof
        inv00 = np.linalg.inv(XtX)[:, 0, 0]
        out[idx] = beta[:, 0] / np.sqrt(s2 * inv00)
    return out


def benjamini_hochberg(p: np.ndarray, level: float) -> np.ndarray:
    """Step-up selection controlling the false discovery rate at ``level``."""
    p = np.asarray(p, dtype=float)
    n = p.size
    order = np.argsort(p, kind="stable")
    thresh = level * np.arange(1, n + 1) / n
    below = np.flatnonzero(p[order] <= thresh)
    rejected = np.zeros(n, dtype=bool)
    if below.size:
        rejected[order[: below[-1] + 1]] = True
    return rejected


_BOOT_BATCH = 50


def fdr_block_bootstrap(panel, level: float = 0.05, block_len: Optional[int] = None, n_boot: int = 999,
                        seed: Optional[int] = 0, deterministics: str = "const+trend",
                        max_lag: Optional[int] = None, names: Optional[Sequence[str]] = None) -> UnitRootReport:
    """Screen a panel for unit roots with bootstrap p-values and BH selection.

    The null distribution is built by resampling overlapping blocks of whole
    cross-sections of the demeaned first differences and cumulating them,
    which imposes a unit root while keeping time and cross-sectional
    dependence.  A series is classified I(0) when its ADF statistic is
    rejected at false discovery rate ``level``.
    """
    if isinstance(panel, PanelSeries) and names is None and panel.names is not None:
        names = list(panel.names)
    X = _as_values(panel)
    if np.isnan(X).any():
        raise UnitRootTestError("bootstrap screening needs a complete panel")
    T, n = X.shape
    names = list(names) if names is not None else [f"x{i + 1}" for i in range(n)]
    b = int(math.ceil(T ** (1.0 / 3.0))) if block_len is None else int(block_len)
    if b < 1 or b >= T:
        raise UnitRootTestError(f"block length {b} must lie in [1, T={T})")
    res = [adf_test(X[:, i], deterministics, max_lag=max_lag) for i in range(n)]
    stat = np.array([r[0] for r in res])
    lags = np.array([r[2] for r in res])

    rng = np.random.default_rng(seed)
    D = np.diff(X, axis=0)
    D = D - D.mean(axis=0)
    Td = D.shape[0]
    n_blocks = int(math.ceil(Td / b))
    count = np.zeros(n)
    done = 0
    while done < n_boot:
        # several draws per batch, stacked along the series axis
        m = min(_BOOT_BATCH, n_boot - done)
        starts = rng.integers(0, Td - b + 1, (m, n_blocks))
        idx = (starts[:, :, None] + np.arange(b)).reshape(m, -1)[:, :Td]
        Db = D[idx].transpose(1, 0, 2).reshape(Td, m * n)
        Xb = np.vstack([np.tile(X[:1], m), np.tile(X[:1], m) + np.cumsum(Db, axis=0)])
        sb = _batch_adf_stats(Xb, np.tile(lags, m), deterministics).reshape(m, n)
        count += (sb <= stat).sum(axis=0)
        done += m
    pval = (1.0 + count) / (n_boot + 1.0)
    rejected = benjamini_hochberg(pval, level)
    return UnitRootReport(names, stat, pval, lags, rejected, level, b, n_boot, seed, deterministics)


def classify_idiosyncratic(residuals: np.ndarray, level: float = 0.05, max_lag: Optional[int] = None,
                           deterministics: str = "const+trend") -> np.ndarray:
    """I(1) mask for idiosyncratic components: per-series ADF, BH across series.

    The residuals come from a panel whose mean and drift were removed, so a
    regression without deterministics is heavily oversized on them; the
    constant-and-trend regression keeps the nominal size.
    """
    R = np.asarray(residuals, dtype=float)
    p = np.array([adf_test(R[:, i], deterministics, max_lag=max_lag)[1] for i in range(R.shape[1])])
    return ~benjamini_hochberg(p, level)
