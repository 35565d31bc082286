"""Linear-Gaussian state-space models and the Kalman filter.

The model is

    y_t = Z_t a_t + e_t,          e_t ~ N(0, H)
    a_{t+1} = T a_t + R n_t,      n_t ~ N(0, Q)

with a_1 ~ N(a1, P1 + kappa * Pinf), where ``Pinf`` is the identity on the
diffuse states.  Observations are processed one element at a time (the
"univariate treatment"), which requires ``H`` to be diagonal and gives an
exact treatment of diffuse initial states.  Missing cells (NaN) are skipped.

The log-likelihood excludes the first ``burn_in`` time points, which by
default equals the number of diffuse states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

LOG2PI = float(np.log(2.0 * np.pi))

# status codes returned by the kernel
_OK = 0
_DEGENERATE = 1


class ConfigurationError(ValueError):
    """Inconsistent model dimensions or initialization."""


class FilterDegeneracyError(RuntimeError):
    """A prediction-error variance is (numerically) zero but the error is not."""

    def __init__(self, t: int, i: int):
        super().__init__(f"singular innovation variance at t={t} (series {i})")
        self.t = t
        self.series = i


@dataclass(frozen=True)
class PanelSeries:
    """Time-indexed multivariate series; NaN marks a missing cell."""

    values: np.ndarray
    index: Optional[np.ndarray] = None
    names: Optional[Sequence[str]] = None
    freq: str = "monthly"
    design_se: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "values", v)
        if self.freq not in ("weekly", "monthly"):
            raise ValueError(f"unknown frequency tag {self.freq!r}")

    @property
    def shape(self):
        return self.values.shape

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)


def _as_values(y) -> np.ndarray:
    if isinstance(y, PanelSeries):
        return y.values
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    return y


def _csr_rows(T: np.ndarray):
    m = T.shape[0]
    nnz = (T != 0).sum(axis=1)
    width = max(int(nnz.max()) if m else 0, 1)
    cols = np.zeros((m, width), dtype=np.int64)
    vals = np.zeros((m, width))
    for i in range(m):
        idx = np.flatnonzero(T[i])
        cols[i, : idx.size] = idx
        vals[i, : idx.size] = T[i, idx]
    return cols, vals, nnz.astype(np.int64)


@dataclass(frozen=True)
class StateSpaceModel:
    """System matrices of a linear-Gaussian state-space model.

    ``Z`` is either ``(p, m)`` or ``(n, p, m)`` for a time-varying loading.
    ``diffuse`` flags the states with a diffuse prior; ``P1`` holds the
    initial covariance of the remaining (exactly initialized) states.
    """

    Z: np.ndarray
    T: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    a1: np.ndarray
    P1: np.ndarray
    diffuse: np.ndarray
    burn_in: Optional[int] = None
    state_names: Optional[tuple] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        T = np.atleast_2d(np.asarray(self.T, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        a1 = np.atleast_1d(np.asarray(self.a1, dtype=float))
        P1 = np.atleast_2d(np.asarray(self.P1, dtype=float))
        diffuse = np.atleast_1d(np.asarray(self.diffuse, dtype=bool))
        if Z.ndim == 1:
            Z = Z[None, :]
        m = T.shape[0]
        p = Z.shape[-2]
        if T.shape != (m, m):
            raise ConfigurationError(f"T must be square, got {T.shape}")
        if Z.shape[-1] != m:
            raise ConfigurationError(f"Z has {Z.shape[-1]} columns, state dimension is {m}")
        if R.shape[0] != m or Q.shape != (R.shape[1], R.shape[1]):
            raise ConfigurationError(f"R {R.shape} and Q {Q.shape} are inconsistent with m={m}")
        if H.shape != (p, p):
            raise ConfigurationError(f"H must be {p}x{p}, got {H.shape}")
        if np.any(H != np.diag(np.diag(H))):
            raise ConfigurationError("H must be diagonal")
        if a1.shape != (m,) or P1.shape != (m, m) or diffuse.shape != (m,):
            raise ConfigurationError("initial state mean/covariance/diffuse mask have wrong shape")
        for name, M in (("Q", Q), ("H", H)):
            if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max())):
                raise ConfigurationError(f"{name} is not symmetric")
            if M.size and np.linalg.eigvalsh((M + M.T) / 2).min() < -1e-10 * max(1.0, np.abs(M).max()):
                raise ConfigurationError(f"{name} is not positive semidefinite")
        if not np.all(np.isfinite(P1)) or np.any(np.diag(P1) < 0):
            raise ConfigurationError("exact initial variances must be finite and nonnegative")
        if np.any(P1[diffuse, :] != 0) or np.any(P1[:, diffuse] != 0):
            raise ConfigurationError("diffuse states cannot carry an exact initial covariance")
        for name, val in (("Z", Z), ("T", T), ("R", R), ("Q", Q), ("H", H), ("a1", a1), ("P1", P1), ("diffuse", diffuse)):
            object.__setattr__(self, name, val)

    @property
    def m(self) -> int:
        return self.T.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[-2]

    @property
    def n_diffuse(self) -> int:
        return int(self.diffuse.sum())

    @property
    def d(self) -> int:
        return self.n_diffuse if self.burn_in is None else int(self.burn_in)

    def Z_at(self, t: int) -> np.ndarray:
        return self.Z[t] if self.Z.ndim == 3 else self.Z

    @property
    def RQR(self) -> np.ndarray:
        if "RQR" not in self._cache:
            M = self.R @ self.Q @ self.R.T
            self._cache["RQR"] = (M + M.T) / 2
        return self._cache["RQR"]

    @property
    def T_sparse(self):
        if "csr" not in self._cache:
            self._cache["csr"] = _csr_rows(self.T)
        return self._cache["csr"]

    def replace(self, **kw) -> "StateSpaceModel":
        fields = dict(Z=self.Z, T=self.T, R=self.R, Q=self.Q, H=self.H, a1=self.a1, P1=self.P1,
                      diffuse=self.diffuse, burn_in=self.burn_in, state_names=self.state_names)
        fields.update(kw)
        return StateSpaceModel(**fields)


@dataclass
class FilterOutput:
    """Filtered and predicted moments; arrays are indexed by time first."""

    predicted_state: np.ndarray
    predicted_cov: np.ndarray
    filtered_state: np.ndarray
    filtered_cov: np.ndarray
    innovations: np.ndarray
    innovation_cov: np.ndarray
    loglik: float
    d_diffuse: int
    diffuse_steps: np.ndarray
    univariate_innovations: np.ndarray = None
    univariate_variances: np.ndarray = None

    @property
    def nobs(self) -> int:
        return self.filtered_state.shape[0]


@njit(cache=True)
def _kernel(y, Z, H, Tcols, Tvals, Tnnz, RQR, a1, P1, Pinf1, burn_in, store,
            a_pred, P_pred, a_filt, P_filt, v_u, F_u, dflag):
    n, p = y.shape
    m = a1.shape[0]
    a = a1.copy()
    P = P1.copy()
    Pinf = Pinf1.copy()
    diffuse = False
    for i in range(m):
        for j in range(m):
            if Pinf[i, j] != 0.0:
                diffuse = True
    tvZ = Z.shape[0] > 1
    tvH = H.shape[0] > 1
    ll = 0.0
    M = np.zeros(m)
    Minf = np.zeros(m)
    nz = np.zeros(m, dtype=np.int64)
    TP = np.zeros((m, m))
    tol_inf = 1e-9
    for t in range(n):
        Zt = Z[t] if tvZ else Z[0]
        Ht = H[t] if tvH else H[0]
        if store:
            for i in range(m):
                a_pred[t, i] = a[i]
                for j in range(m):
                    P_pred[t, i, j] = P[i, j]
            dflag[t] = diffuse
        for i in range(p):
            yi = y[t, i]
            if np.isnan(yi):
                if store:
                    v_u[t, i] = np.nan
                    F_u[t, i] = np.nan
                continue
            k = 0
            for j in range(m):
                if Zt[i, j] != 0.0:
                    nz[k] = j
                    k += 1
            v = yi
            for q in range(k):
                v -= Zt[i, nz[q]] * a[nz[q]]
            F = Ht[i]
            scale = Ht[i]
            for r in range(m):
                s = 0.0
                for q in range(k):
                    s += P[r, nz[q]] * Zt[i, nz[q]]
                M[r] = s
            for q in range(k):
                F += Zt[i, nz[q]] * M[nz[q]]
                scale += Zt[i, nz[q]] * Zt[i, nz[q]] * P[nz[q], nz[q]]
            Finf = 0.0
            if diffuse:
                for r in range(m):
                    s = 0.0
                    for q in range(k):
                        s += Pinf[r, nz[q]] * Zt[i, nz[q]]
                    Minf[r] = s
                for q in range(k):
                    Finf += Zt[i, nz[q]] * Minf[nz[q]]
            if diffuse and Finf > tol_inf:
                for r in range(m):
                    a[r] += Minf[r] * v / Finf
                c1 = F / (Finf * Finf)
                for r in range(m):
                    for c in range(m):
                        P[r, c] += Minf[r] * Minf[c] * c1 - (M[r] * Minf[c] + Minf[r] * M[c]) / Finf
                        Pinf[r, c] -= Minf[r] * Minf[c] / Finf
                if t >= burn_in:
                    ll += -0.5 * (np.log(2.0 * np.pi) + np.log(Finf))
                if store:
                    v_u[t, i] = v
                    F_u[t, i] = np.inf
            else:
                if F <= 1e-12 * scale or F <= 0.0:
                    if abs(v) <= 1e-10 * (1.0 + abs(yi)):
                        if store:
                            v_u[t, i] = np.nan
                            F_u[t, i] = np.nan
                        continue
                    return ll, _DEGENERATE, t, i
                for r in range(m):
                    a[r] += M[r] * v / F
                for r in range(m):
                    for c in range(m):
                        P[r, c] -= M[r] * M[c] / F
                if t >= burn_in:
                    ll += -0.5 * (np.log(2.0 * np.pi) + np.log(F) + v * v / F)
                if store:
                    v_u[t, i] = v
                    F_u[t, i] = F
        # keep symmetric
        for r in range(m):
            for c in range(r + 1, m):
                s = 0.5 * (P[r, c] + P[c, r])
                P[r, c] = s
                P[c, r] = s
        if diffuse:
            still = False
            for r in range(m):
                for c in range(m):
                    if abs(Pinf[r, c]) > 1e-10:
                        still = True
            if not still:
                diffuse = False
                for r in range(m):
                    for c in range(m):
                        Pinf[r, c] = 0.0
        if store:
            for i in range(m):
                a_filt[t, i] = a[i]
                for j in range(m):
                    P_filt[t, i, j] = P[i, j]
        # prediction: a <- T a ; P <- T P T' + RQR ; Pinf <- T Pinf T'
        for r in range(m):
            s = 0.0
            for q in range(Tnnz[r]):
                s += Tvals[r, q] * a[Tcols[r, q]]
            M[r] = s
        for r in range(m):
            a[r] = M[r]
        for r in range(m):
            for c in range(m):
                s = 0.0
                for q in range(Tnnz[r]):
                    s += Tvals[r, q] * P[Tcols[r, q], c]
                TP[r, c] = s
        for r in range(m):
            for c in range(r, m):
                s = RQR[r, c]
                for q in range(Tnnz[c]):
                    s += TP[r, Tcols[c, q]] * Tvals[c, q]
                P[r, c] = s
                P[c, r] = s
        if diffuse:
            for r in range(m):
                for c in range(m):
                    s = 0.0
                    for q in range(Tnnz[r]):
                        s += Tvals[r, q] * Pinf[Tcols[r, q], c]
                    TP[r, c] = s
            for r in range(m):
                for c in range(r, m):
                    s = 0.0
                    for q in range(Tnnz[c]):
                        s += TP[r, Tcols[c, q]] * Tvals[c, q]
                    Pinf[r, c] = s
                    Pinf[c, r] = s
    return ll, _OK, -1, -1


def _prepare(model: StateSpaceModel, y: np.ndarray, kappa: Optional[float]):
    n, p = y.shape
    if p != model.p:
        raise ConfigurationError(f"data has {p} columns, model expects {model.p}")
    Z = model.Z if model.Z.ndim == 3 else model.Z[None]
    if Z.shape[0] not in (1, n):
        raise ConfigurationError(f"time-varying Z covers {Z.shape[0]} periods, data has {n}")
    H = np.diag(model.H)[None, :]
    Pinf = np.diag(model.diffuse.astype(float))
    P1 = model.P1
    if kappa is not None:
        P1 = P1 + kappa * Pinf
        Pinf = np.zeros_like(Pinf)
    cols, vals, nnz = model.T_sparse
    return (np.ascontiguousarray(Z), np.ascontiguousarray(H), cols, vals, nnz,
            np.ascontiguousarray(model.RQR), model.a1, np.ascontiguousarray(P1), Pinf)


def filter(model: StateSpaceModel, y, kappa: Optional[float] = None,
           burn_in: Optional[int] = None) -> FilterOutput:
    """Run the Kalman filter.

    With ``kappa=None`` diffuse states use the exact diffuse recursions;
    otherwise they get prior variance ``kappa`` (large-variance approximation).
    """
    y = np.ascontiguousarray(_as_values(y))
    n, p = y.shape
    m = model.m
    d = model.d if burn_in is None else int(burn_in)
    args = _prepare(model, y, kappa)
    a_pred = np.empty((n, m))
    P_pred = np.empty((n, m, m))
    a_filt = np.empty((n, m))
    P_filt = np.empty((n, m, m))
    v_u = np.full((n, p), np.nan)
    F_u = np.full((n, p), np.nan)
    dflag = np.zeros(n, dtype=np.bool_)
    ll, status, t_bad, i_bad = _kernel(y, *args, d, True, a_pred, P_pred, a_filt, P_filt, v_u, F_u, dflag)
    if status == _DEGENERATE:
        raise FilterDegeneracyError(t_bad, i_bad)

    Zs = model.Z if model.Z.ndim == 3 else np.broadcast_to(model.Z, (n,) + model.Z.shape)
    v = y - np.einsum("tij,tj->ti", Zs, a_pred)
    F = np.einsum("tij,tjk,tlk->til", Zs, P_pred, Zs) + model.H
    miss = np.isnan(y)
    F[miss[:, :, None] | miss[:, None, :]] = np.nan
    return FilterOutput(
        predicted_state=a_pred, predicted_cov=P_pred, filtered_state=a_filt, filtered_cov=P_filt,
        innovations=v, innovation_cov=F, loglik=float(ll), d_diffuse=d, diffuse_steps=dflag,
        univariate_innovations=v_u, univariate_variances=F_u,
    )


def loglik(model: StateSpaceModel, y, kappa: Optional[float] = None,
           burn_in: Optional[int] = None) -> float:
    """Log-likelihood only; the fast path used by the optimizer."""
    y = np.ascontiguousarray(_as_values(y))
    d = model.d if burn_in is None else int(burn_in)
    args = _prepare(model, y, kappa)
    e2 = np.empty((0, 0))
    e3 = np.empty((0, 0, 0))
    ll, status, t_bad, i_bad = _kernel(y, *args, d, False, e2, e3, e2, e3, e2, e2, np.empty(0, dtype=np.bool_))
    if status == _DEGENERATE:
        raise FilterDegeneracyError(t_bad, i_bad)
    return float(ll)


loglik_at = loglik


def standardized_innovations(out: FilterOutput, include_burn_in: bool = False) -> np.ndarray:
    """Innovations premultiplied by B_t with B_t'B_t = F_t^{-1} (Cholesky).

    Rows t <= d_diffuse are NaN unless ``include_burn_in``; missing cells stay NaN.
    """
    v, F = out.innovations, out.innovation_cov
    n, p = v.shape
    res = np.full((n, p), np.nan)
    start = 0 if include_burn_in else out.d_diffuse
    for t in range(start, n):
        obs = ~np.isnan(v[t])
        if not obs.any() or out.diffuse_steps[t]:
            continue
        Ft = F[t][np.ix_(obs, obs)]
        k = obs.sum()
        Ft = Ft + 1e-12 * np.trace(Ft) / k * np.eye(k)
        try:
            L = np.linalg.cholesky(Ft)
        except np.linalg.LinAlgError:
            raise FilterDegeneracyError(t, -1) from None
        res[t, obs] = np.linalg.solve(L, v[t, obs])
    return res


def simulate(model: StateSpaceModel, n: int, rng: np.random.Generator,
             a1: Optional[np.ndarray] = None) -> tuple:
    """Draw (y, states) from the model.

    The initial state has mean ``a1`` (the model's by default) and covariance
    P1; diffuse states start exactly at their mean.
    """
    m, p = model.m, model.p
    a = model.a1.copy() if a1 is None else np.asarray(a1, dtype=float).copy()
    if model.P1.any():
        a = a + _psd_sqrt(model.P1) @ rng.standard_normal(m)
    cq = _psd_sqrt(model.Q)
    ch = np.sqrt(np.clip(np.diag(model.H), 0, None))
    states = np.empty((n, m))
    y = np.empty((n, p))
    for t in range(n):
        states[t] = a
        y[t] = model.Z_at(t) @ a + ch * rng.standard_normal(p)
        a = model.T @ a + model.R @ (cq @ rng.standard_normal(cq.shape[1]))
    return y, states


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((S + S.T) / 2)
    return V * np.sqrt(np.clip(w, 0, None))


class KernelModel:
    """Pre-validated arrays for repeated likelihood evaluation.

    Families whose transition and loading structure is fixed build this once
    and swap in new ``RQR`` and ``H`` on every call, skipping the dataclass
    validation that dominates the cost for small models.
    """

    def __init__(self, model: StateSpaceModel):
        self.Z = np.ascontiguousarray(model.Z if model.Z.ndim == 3 else model.Z[None])
        self.csr = model.T_sparse
        self.a1 = model.a1.copy()
        self.P1 = np.ascontiguousarray(model.P1)
        self.Pinf = np.diag(model.diffuse.astype(float))
        self.burn_in = model.d
        self.p = model.p

    def loglik(self, y: np.ndarray, RQR: np.ndarray, H_diag: np.ndarray) -> float:
        cols, vals, nnz = self.csr
        e2 = np.empty((0, 0))
        e3 = np.empty((0, 0, 0))
        ll, status, t_bad, i_bad = _kernel(y, self.Z, np.ascontiguousarray(H_diag, dtype=float)[None, :],
                                           cols, vals, nnz, RQR, self.a1, self.P1, self.Pinf,
                                           self.burn_in, False, e2, e3, e2, e3, e2, e2,
                                           np.empty(0, dtype=np.bool_))
        if status == _DEGENERATE:
            raise FilterDegeneracyError(t_bad, i_bad)
        return float(ll)
