"""Principal-component estimation of integrated factors and factor-count selection."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .ssm import PanelSeries, _as_values


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class FactorDecomposition:
    """Loadings, factors and idiosyncratic variances of an I(1) factor model.

    Loadings are expressed in the units of the input series.  ``offset`` and
    ``drift`` record the level centering applied by :meth:`center`, ``scale``
    the standard deviations of the differenced series used to weight the PCA.
    """

    loadings: np.ndarray
    factors: np.ndarray
    innovations: np.ndarray
    idio_var: np.ndarray
    i1_mask: np.ndarray
    offset: np.ndarray
    drift: np.ndarray
    scale: np.ndarray
    t_center: float
    freq: str = "monthly"

    @property
    def r(self) -> int:
        return self.loadings.shape[1]

    @property
    def n(self) -> int:
        return self.loadings.shape[0]

    def center(self, X, start: int = 0) -> np.ndarray:
        """Remove the estimation-window mean and drift from a level panel.

        ``start`` is the time index of the first row of ``X`` relative to the
        estimation window, so later rows can be centered consistently.
        """
        X = _as_values(X)
        t = np.arange(start, start + X.shape[0])[:, None] - self.t_center
        return X - self.offset - self.drift * t


def _difference_standardize(X: np.ndarray, standardize: bool):
    D = np.diff(X, axis=0)
    mu = D.mean(axis=0)
    sd = D.std(axis=0)
    if np.any(sd <= 0):
        bad = np.flatnonzero(sd <= 0)
        raise EstimationError(f"series {bad.tolist()} have constant first differences")
    if not standardize:
        sd = np.ones_like(sd)
    return D, (D - mu) / sd, mu, sd


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Signs making the largest-magnitude loading of each factor positive."""
    idx = np.argmax(np.abs(V), axis=0)
    return np.where(V[idx, np.arange(V.shape[1])] < 0, -1.0, 1.0)


def align_signs(dec: FactorDecomposition, reference: np.ndarray) -> FactorDecomposition:
    """Flip factors whose increments correlate negatively with ``reference``.

    ``reference`` holds factor levels from an earlier window sharing the same
    first period; only the overlapping rows are compared.
    """
    ref = np.asarray(reference, dtype=float).reshape(-1, dec.r)
    k = min(ref.shape[0], dec.factors.shape[0])
    if k < 2:
        return dec
    s = np.sign((np.diff(dec.factors[:k], axis=0) * np.diff(ref[:k], axis=0)).sum(axis=0))
    s[s == 0] = 1.0
    if np.all(s > 0):
        return dec
    return replace(dec, loadings=dec.loadings * s, factors=dec.factors * s, innovations=dec.innovations * s)


def _residual_variances(Xc, f, lam, mask, sd):
    """Idiosyncratic variances: level residuals for stationary components, differenced for I(1) ones."""
    level_res = Xc - f @ lam.T
    diff_res = np.diff(level_res, axis=0)
    psi = np.where(mask, diff_res.var(axis=0), level_res.var(axis=0))
    return np.maximum(psi, 1e-10 * sd**2)


def pca_nonstationary(X, r: int, standardize: bool = True,
                      i1_mask: Optional[np.ndarray] = None) -> FactorDecomposition:
    """Estimate ``r`` random-walk factors from an I(1) panel.

    Differences are standardized and decomposed by SVD; factor innovations are
    scaled to unit variance and cumulated into factor levels, with loadings
    rescaled reciprocally.  Idiosyncratic variances come from level residuals
    for stationary components and from differenced residuals for components
    flagged in ``i1_mask``.
    """
    freq = X.freq if isinstance(X, PanelSeries) else "monthly"
    X = _as_values(X)
    if np.isnan(X).any():
        raise EstimationError("factor estimation needs a complete panel")
    Tn, n = X.shape
    D, Zd, mu, sd = _difference_standardize(X, standardize)
    Td = D.shape[0]
    U, S, Vt = np.linalg.svd(Zd, full_matrices=False)
    rank = int((S > S[0] * 1e-10).sum()) if S.size else 0
    if r < 1 or r > rank:
        raise EstimationError(f"r={r} exceeds the rank ({rank}) of the differenced panel")
    signs = _fix_signs(Vt[:r].T)
    u = U[:, :r] * np.sqrt(Td) * signs
    lam_std = Vt[:r].T * (S[:r] / np.sqrt(Td)) * signs
    lam = lam_std * sd[:, None]

    f = np.vstack([np.zeros((1, r)), np.cumsum(u, axis=0)])
    f -= f.mean(axis=0)
    t_center = (Tn - 1) / 2.0
    offset = X.mean(axis=0)
    Xc = X - offset - mu * (np.arange(Tn)[:, None] - t_center)

    mask = np.zeros(n, dtype=bool) if i1_mask is None else np.asarray(i1_mask, dtype=bool)
    if mask.shape != (n,):
        raise EstimationError(f"i1 mask has length {mask.size}, panel has {n} series")
    psi = _residual_variances(Xc, f, lam, mask, sd)
    return FactorDecomposition(loadings=lam, factors=f, innovations=u, idio_var=psi, i1_mask=mask,
                               offset=offset, drift=mu, scale=sd, t_center=t_center, freq=freq)


def ic_bai_ng(X, r_max: int = 10, standardize: bool = True) -> tuple:
    """Factor counts minimizing the IC1, IC2 and IC3 criteria on the differenced panel."""
    if r_max < 1:
        raise EstimationError("r_max must be at least 1")
    X = _as_values(X)
    _, Zd, _, _ = _difference_standardize(X, standardize)
    Td, n = Zd.shape
    r_max = min(r_max, min(Td, n) - 1)
    ev = np.linalg.svd(Zd, compute_uv=False) ** 2
    total = ev.sum()
    k = np.arange(r_max + 1)
    V = np.array([(total - ev[:j].sum()) / (n * Td) for j in k])
    V = np.maximum(V, 1e-300)
    nt = n * Td
    c2 = min(n, Td)
    g = (n + Td) / nt
    ic1 = np.log(V) + k * g * np.log(nt / (n + Td))
    ic2 = np.log(V) + k * g * np.log(c2)
    ic3 = np.log(V) + k * np.log(c2) / c2
    return int(np.argmin(ic1)), int(np.argmin(ic2)), int(np.argmin(ic3))


def em_iterate(dec: FactorDecomposition, f_kf: np.ndarray, X) -> FactorDecomposition:
    """One least-squares update of loadings and idiosyncratic variances.

    ``f_kf`` are factor levels filtered by the full model.  Loadings are
    re-estimated by regressing the differenced centered panel on the
    differenced factors; variances follow the same level/difference split as
    :func:`pca_nonstationary`.
    """
    X = _as_values(X)
    f = np.asarray(f_kf, dtype=float).reshape(X.shape[0], -1)
    Xc = dec.center(X)
    dF = np.diff(f, axis=0)
    dX = np.diff(Xc, axis=0)
    G = dF.T @ dF
    if np.linalg.cond(G) > 1e12:
        raise EstimationError("filtered factors are collinear")
    lam = np.linalg.solve(G, dF.T @ dX).T
    fc = f - f.mean(axis=0)
    Xcc = Xc - Xc.mean(axis=0)
    level_res = Xcc - fc @ lam.T
    diff_res = dX - dF @ lam.T
    psi = np.where(dec.i1_mask, diff_res.var(axis=0), level_res.var(axis=0))
    psi = np.maximum(psi, 1e-10 * dec.scale**2)
    return replace(dec, loadings=lam, factors=fc, innovations=dF, idio_var=psi)


def collapse(loadings: np.ndarray, idio_var: np.ndarray):
    """Projection onto the factor space for a panel with diagonal noise.

    Returns (A, C) with A = (L'W L)^{-1} L'W, W = diag(1/psi) and C the
    covariance of the projected noise.  Filtering A x_t with noise C gives the
    same factor estimates as filtering the full panel.
    """
    W = loadings / idio_var[:, None]
    C = np.linalg.inv(loadings.T @ W)
    C = (C + C.T) / 2
    return C @ W.T, C


def collapse_loglik_const(X: np.ndarray, loadings: np.ndarray, idio_var: np.ndarray) -> np.ndarray:
    """Per-period log-likelihood term dropped by :func:`collapse`.

    Missing rows contribute zero.  The full-panel log-likelihood equals the
    collapsed one plus the sum of these terms.
    """
    X = _as_values(X)
    A, C = collapse(loadings, idio_var)
    n, r = loadings.shape
    _, logdetC = np.linalg.slogdet(C)
    Ci = np.linalg.inv(C)
    out = np.zeros(X.shape[0])
    for t, x in enumerate(X):
        if np.isnan(x).any():
            continue
        xb = A @ x
        q = x @ (x / idio_var) - xb @ Ci @ xb
        out[t] = -0.5 * ((n - r) * np.log(2 * np.pi) + np.log(idio_var).sum() - logdetC + q)
    return out


def _from_weekly(X: np.ndarray, r: int, weekly) -> FactorDecomposition:
    """Monthly decomposition whose loadings come from PCA on the weekly panel.

    The weekly factors are aggregated with the monthly flow rule and rescaled
    to unit innovation variance; loadings are mapped to the units of the
    rescaled monthly panel ``X`` and idiosyncratic variances taken from the
    monthly residuals.
    """
    from .nowcast import month_sums

    Xw, calendar, week = weekly
    dec_w = pca_nonstationary(Xw, r)
    sums, full, _ = month_sums(Xw, calendar, week)
    ref = sums[full] if full.any() else sums
    mult = 100.0 / np.where(ref.max(axis=0) > 0, ref.max(axis=0), 100.0)
    f_agg, _, _ = month_sums(dec_w.factors, calendar, week)
    f_agg = f_agg.reshape(-1, r)
    if f_agg.shape[0] != X.shape[0]:
        raise EstimationError(f"weekly panel covers {f_agg.shape[0]} months, monthly panel {X.shape[0]}")
    s = np.diff(f_agg, axis=0).std(axis=0)
    if np.any(s <= 0):
        raise EstimationError("aggregated weekly factor has no variation")
    f = (f_agg - f_agg.mean(axis=0)) / s
    lam = dec_w.loadings * mult[:, None] * s
    D = np.diff(X, axis=0)
    mu, sd = D.mean(axis=0), D.std(axis=0)
    Tn = X.shape[0]
    t_center = (Tn - 1) / 2.0
    offset = X.mean(axis=0)
    Xc = X - offset - mu * (np.arange(Tn)[:, None] - t_center)
    mask = np.zeros(X.shape[1], dtype=bool)
    psi = _residual_variances(Xc, f, lam, mask, np.where(sd > 0, sd, 1.0))
    return FactorDecomposition(loadings=lam, factors=f, innovations=np.diff(f, axis=0), idio_var=psi,
                               i1_mask=mask, offset=offset, drift=mu, scale=sd, t_center=t_center,
                               freq="weekly")


def two_step(X_gt, r: int, include_cc: bool = False, all_corr: bool = False, i1_screen: bool = False,
             level: float = 0.05, weekly=None, weekly_columns=None):
    """First step of the two-step estimator: factor quantities fixed for the ML step.

    ``X_gt`` is the monthly auxiliary panel.  ``weekly`` = (panel, calendar,
    week) switches loading estimation to the weekly panel, restricted to
    ``weekly_columns``.  With ``i1_screen`` idiosyncratic components whose unit
    root is not rejected become random-walk states.  Returns the model
    specification and the decomposition (None when r = 0).
    """
    from .lf_model import ModelSpec
    from .stationarity import classify_idiosyncratic

    if r == 0:
        return ModelSpec(include_cc=include_cc), None
    X = _as_values(X_gt)
    if weekly is not None:
        Xw, cal, week = weekly
        Xw = _as_values(Xw)
        if weekly_columns is not None:
            Xw = Xw[:, np.asarray(weekly_columns, dtype=int)]
        dec = _from_weekly(X, r, (Xw, cal, week))
    else:
        dec = pca_nonstationary(X, r)
    if i1_screen:
        Xc = dec.center(X)
        mask = classify_idiosyncratic(Xc - dec.factors @ dec.loadings.T, level)
        sd = np.where(dec.scale > 0, dec.scale, 1.0)
        dec = replace(dec, i1_mask=mask, idio_var=_residual_variances(Xc, dec.factors, dec.loadings, mask, sd))
    spec = ModelSpec(include_cc=include_cc, include_gt=True, r=r, all_corr=all_corr and include_cc,
                     loadings=dec.loadings, idio_var=dec.idio_var, i1_idio_mask=dec.i1_mask)
    return spec, dec
