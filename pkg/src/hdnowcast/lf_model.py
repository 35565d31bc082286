"""State-space form of the rotating-panel labour-force model and its extensions.

Observation rows are ordered as five survey waves, then the claimant-count
series (if any), then the auxiliary panel (full rows or its projection onto
the factor space).  States are ordered as

    level, slope, 11 seasonal, 4 rotation-group biases, 13 survey errors,
    [claimant-count level, slope, 11 seasonal], [factor block], [I(1) idiosyncratics]

with the survey-error block holding the five current scaled errors followed
by waves 1-4 lagged two and one periods.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from . import factors as factors_mod
from .mle import Param, ParameterError
from .ssm import ConfigurationError, KernelModel, StateSpaceModel

N_WAVES = 5
N_SEAS = 11
N_LFS = 30
N_TREND_SEAS = 13  # level, slope and seasonal states of an auxiliary series
N_DIFFUSE_LFS = 17

SEASONAL_COLS = np.array([0, 2, 4, 6, 8, 10])  # cosine states inside the seasonal block


class DataError(ValueError):
    pass


@dataclass
class HyperParams:
    sigma_R_y: float = 1.0
    sigma_omega_y: float = 0.1
    sigma_lambda: float = 0.1
    sigma_nu: np.ndarray = field(default_factory=lambda: np.ones(N_WAVES))
    delta: float = 0.0
    sigma_R_cc: Optional[float] = None
    sigma_omega_cc: Optional[float] = None
    sigma_eps_cc: Optional[float] = None
    rho_cc: Optional[float] = None
    rho_gt: Optional[np.ndarray] = None
    rho_cc_gt: Optional[np.ndarray] = None
    kappa: Optional[np.ndarray] = None
    sigma_L_y: float = 0.0
    sigma_L_cc: float = 0.0

    def to_dict(self) -> dict:
        out = {"sigma_R_y": self.sigma_R_y, "sigma_omega_y": self.sigma_omega_y,
               "sigma_lambda": self.sigma_lambda}
        for j, s in enumerate(np.asarray(self.sigma_nu, dtype=float), 1):
            out[f"sigma_nu{j}"] = float(s)
        out["delta"] = self.delta
        for name in ("sigma_R_cc", "sigma_omega_cc", "sigma_eps_cc", "rho_cc"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        for name in ("rho_gt", "rho_cc_gt", "kappa"):
            vec = getattr(self, name)
            if vec is not None:
                for j, v in enumerate(np.atleast_1d(vec), 1):
                    out[f"{name}{j}"] = float(v)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        def vec(prefix):
            keys = sorted((k for k in d if k.startswith(prefix) and k[len(prefix):].isdigit()),
                          key=lambda k: int(k[len(prefix):]))
            return np.array([d[k] for k in keys]) if keys else None

        scalars = {f.name: d[f.name] for f in fields(cls)
                   if f.name in d and f.name not in ("sigma_nu", "rho_gt", "rho_cc_gt", "kappa")}
        nu = vec("sigma_nu")
        return cls(sigma_nu=nu if nu is not None else np.ones(N_WAVES), rho_gt=vec("rho_gt"),
                   rho_cc_gt=vec("rho_cc_gt"), kappa=vec("kappa"), **scalars)


@dataclass
class ModelSpec:
    """Which blocks enter the model and the first-step factor quantities."""

    include_cc: bool = False
    include_gt: bool = False
    r: int = 0
    all_corr: bool = False
    factor_lags: int = 0
    factor_arima: Optional[tuple] = None
    loadings: Optional[np.ndarray] = None
    idio_var: Optional[np.ndarray] = None
    i1_idio_mask: Optional[np.ndarray] = None
    collapse: bool = True

    def __post_init__(self):
        if self.include_gt:
            if self.r < 1:
                raise ConfigurationError("a model with auxiliary-panel factors needs r >= 1")
            lam = np.asarray(self.loadings, dtype=float).reshape(-1, self.r)
            psi = np.asarray(self.idio_var, dtype=float)
            if lam.shape[0] != psi.shape[0]:
                raise ConfigurationError("loadings and idiosyncratic variances disagree on n")
            if np.any(psi <= 0):
                raise ConfigurationError("idiosyncratic variances must be positive")
            self.loadings, self.idio_var = lam, psi
            mask = np.zeros(lam.shape[0], bool) if self.i1_idio_mask is None else np.asarray(self.i1_idio_mask, bool)
            if mask.shape != (lam.shape[0],):
                raise ConfigurationError(f"I(1) mask has length {mask.size}, panel has {lam.shape[0]}")
            self.i1_idio_mask = mask
            if (self.factor_lags or self.factor_arima is not None) and self.r != 1:
                raise ConfigurationError("factor lags and ARIMA factor dynamics need r = 1")
            if self.factor_lags and self.factor_arima is not None:
                raise ConfigurationError("choose either factor lags or ARIMA factor dynamics")
        else:
            self.r = 0
        if self.all_corr and not (self.include_cc and self.include_gt):
            raise ConfigurationError("the all-correlations variant needs both auxiliary blocks")

    @property
    def n_gt(self) -> int:
        return self.loadings.shape[0] if self.include_gt else 0

    @property
    def name(self) -> str:
        return {(False, False): "baseline", (True, False): "cc", (False, True): "gt",
                (True, True): "cc_gt"}[(self.include_cc, self.include_gt)]


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping for states and observation rows."""

    m: int
    cc: Optional[int]
    factor: Optional[int]
    n_factor_states: int
    idio: Optional[int]
    n_idio: int
    p: int
    gt_rows: Optional[slice]
    gt_i1_rows: Optional[slice]

    @property
    def slope_y(self) -> int:
        return 1


def layout(spec: ModelSpec) -> Layout:
    m = N_LFS
    cc = None
    if spec.include_cc:
        cc = m
        m += N_TREND_SEAS
    fac = None
    nf = 0
    idio = None
    ni = 0
    p = N_WAVES + (1 if spec.include_cc else 0)
    gt_rows = gt_i1_rows = None
    if spec.include_gt:
        fac = m
        if spec.factor_arima is not None:
            nf = 4
        elif spec.factor_lags:
            nf = 1 + spec.factor_lags
        else:
            nf = spec.r
        m += nf
        ni = int(spec.i1_idio_mask.sum())
        if ni:
            idio = m
            m += ni
        n0 = spec.n_gt - ni
        k0 = spec.r if (spec.collapse and n0 > 0) else n0
        gt_rows = slice(p, p + k0)
        p += k0
        gt_i1_rows = slice(p, p + ni)
        p += ni
    return Layout(m, cc, fac, nf, idio, ni, p, gt_rows, gt_i1_rows)


def seasonal_transition() -> np.ndarray:
    Tw = np.zeros((N_SEAS, N_SEAS))
    for l in range(1, 6):
        h = np.pi * l / 6
        i = 2 * (l - 1)
        Tw[i:i + 2, i:i + 2] = [[np.cos(h), np.sin(h)], [-np.sin(h), np.cos(h)]]
    Tw[10, 10] = -1.0
    return Tw


def survey_error_transition(delta: float) -> np.ndarray:
    TE = np.zeros((13, 13))
    for j in range(1, 5):
        TE[j, 4 + j] = delta       # wave j+1 now <- wave j three months ago
    for j in range(4):
        TE[5 + j, 9 + j] = 1.0     # t-2 group <- previous t-1 group
        TE[9 + j, j] = 1.0         # t-1 group <- previous current errors
    return TE


def _trend_seasonal_transition() -> np.ndarray:
    T = np.zeros((N_TREND_SEAS, N_TREND_SEAS))
    T[:2, :2] = [[1.0, 1.0], [0.0, 1.0]]
    T[2:, 2:] = seasonal_transition()
    return T


def _trend_seasonal_loading() -> np.ndarray:
    z = np.zeros(N_TREND_SEAS)
    z[0] = 1.0
    z[2 + SEASONAL_COLS] = 1.0
    return z


def survey_error_variances(hp: HyperParams) -> np.ndarray:
    """Initial variances of the 13 survey-error states."""
    nu2 = np.asarray(hp.sigma_nu, dtype=float) ** 2
    d2 = hp.delta ** 2
    wave = np.concatenate([[nu2[0]], nu2[1:] / (1.0 - d2)])
    return np.concatenate([wave, wave[:4], wave[:4]])


def slope_factor_corr(spec: ModelSpec, hp: HyperParams) -> tuple:
    """Correlation matrix of (slope_y, [slope_cc], factors) innovations and labels."""
    labels = ["R_y"]
    if spec.include_cc:
        labels.append("R_cc")
    labels += [f"f{j}" for j in range(1, spec.r + 1)]
    k = len(labels)
    C = np.eye(k)
    if spec.include_cc:
        C[0, 1] = C[1, 0] = hp.rho_cc
    if spec.include_gt:
        off = 2 if spec.include_cc else 1
        rg = np.atleast_1d(hp.rho_gt)
        for j in range(spec.r):
            C[0, off + j] = C[off + j, 0] = rg[j]
            if spec.all_corr:
                rc = np.atleast_1d(hp.rho_cc_gt)
                C[1, off + j] = C[off + j, 1] = rc[j]
    return C, labels


def check_feasible(spec: ModelSpec, hp: HyperParams):
    corr = [hp.delta]
    if spec.include_cc:
        corr.append(hp.rho_cc)
    if spec.include_gt:
        corr += list(np.atleast_1d(hp.rho_gt))
        if spec.all_corr:
            corr += list(np.atleast_1d(hp.rho_cc_gt))
    if any(not -1.0 < c < 1.0 for c in corr):
        raise ParameterError(f"correlation parameters must lie in (-1, 1): {corr}")
    C, labels = slope_factor_corr(spec, hp)
    if C.shape[0] > 1:
        ev = np.linalg.eigvalsh(C).min()
        if ev < -1e-12:
            pairs = [f"{labels[i]}~{labels[j]}={C[i, j]:g}" for i in range(len(labels))
                     for j in range(i + 1, len(labels)) if C[i, j] != 0]
            raise ParameterError("slope/factor innovation covariance not PSD "
                                 f"(min eigenvalue {ev:.3g}); correlations: " + ", ".join(pairs))


def _arima_block(spec: ModelSpec):
    phi1, phi2, phi3, gamma = spec.factor_arima
    if phi2 == 0 and phi3 != 0:
        raise ParameterError("ARIMA factor form needs phi2 != 0 when phi3 != 0")
    ratio = phi3 / phi2 if phi2 != 0 else 0.0
    T = np.array([[1.0, 1.0, 0.0, 0.0],
                  [0.0, phi1, 1.0, 1.0],
                  [0.0, phi2, 0.0, 0.0],
                  [0.0, 0.0, ratio, 0.0]])
    sel = np.array([0.0, 1.0, 0.0, gamma])
    return T, sel


def build(spec: ModelSpec, hp: HyperParams, c: np.ndarray, n_periods: Optional[int] = None) -> StateSpaceModel:
    """Assemble the state-space model.

    ``c`` holds the design standard errors (T x 5).  Missing entries are
    replaced by one; :func:`observations` masks the matching data cells.
    """
    check_feasible(spec, hp)
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[1] != N_WAVES:
        raise DataError(f"design standard errors must have {N_WAVES} columns")
    if np.any(c[~np.isnan(c)] <= 0):
        t, j = np.argwhere(c <= 0)[0]
        raise DataError(f"nonpositive design standard error at row {t}, wave {j + 1}")
    c = np.where(np.isnan(c), 1.0, c)
    n = c.shape[0] if n_periods is None else n_periods
    lay = layout(spec)
    m, p = lay.m, lay.p

    T = np.zeros((m, m))
    T[:2, :2] = [[1.0, 1.0], [0.0, 1.0]]
    T[2:13, 2:13] = seasonal_transition()
    T[13:17, 13:17] = np.eye(4)
    T[17:30, 17:30] = survey_error_transition(hp.delta)
    if lay.cc is not None:
        T[lay.cc:lay.cc + 13, lay.cc:lay.cc + 13] = _trend_seasonal_transition()

    Q = np.zeros((m, m))
    Q[0, 0] = hp.sigma_L_y ** 2
    Q[1, 1] = hp.sigma_R_y ** 2
    Q[2:13, 2:13] = np.eye(N_SEAS) * hp.sigma_omega_y ** 2
    Q[13:17, 13:17] = np.eye(4) * hp.sigma_lambda ** 2
    Q[17:22, 17:22] = np.diag(np.asarray(hp.sigma_nu, dtype=float) ** 2)
    if lay.cc is not None:
        k = lay.cc
        Q[k, k] = hp.sigma_L_cc ** 2
        Q[k + 1, k + 1] = hp.sigma_R_cc ** 2
        Q[k + 2:k + 13, k + 2:k + 13] = np.eye(N_SEAS) * hp.sigma_omega_cc ** 2
        Q[1, k + 1] = Q[k + 1, 1] = hp.rho_cc * hp.sigma_R_y * hp.sigma_R_cc

    a1 = np.zeros(m)
    P1 = np.zeros((m, m))
    P1[17:30, 17:30] = np.diag(survey_error_variances(hp))
    diffuse = np.zeros(m, dtype=bool)
    diffuse[:17] = True
    if lay.cc is not None:
        diffuse[lay.cc:lay.cc + 13] = True

    H = np.zeros((p, p))
    Z = np.zeros((n, p, m))
    zrow = np.zeros(N_LFS)
    zrow[0] = 1.0
    zrow[2 + SEASONAL_COLS] = 1.0
    for j in range(N_WAVES):
        Z[:, j, :N_LFS] = zrow
        if j > 0:
            Z[:, j, 13 + j - 1] = 1.0
        Z[:, j, 17 + j] = c[:n, j] if c.shape[0] >= n else np.resize(c[:, j], n)
    row = N_WAVES
    if lay.cc is not None:
        Z[:, row, lay.cc:lay.cc + 13] = _trend_seasonal_loading()
        H[row, row] = hp.sigma_eps_cc ** 2
        row += 1

    if spec.include_gt:
        f0 = lay.factor
        r = spec.r
        rho_gt = np.atleast_1d(hp.rho_gt).astype(float)
        cc_slope = lay.cc + 1 if lay.cc is not None else None
        if spec.factor_arima is not None:
            Tf, sel = _arima_block(spec)
            T[f0:f0 + 4, f0:f0 + 4] = Tf
            Q[f0:f0 + 4, f0:f0 + 4] = np.outer(sel, sel)
            Q[1, f0:f0 + 4] = Q[f0:f0 + 4, 1] = rho_gt[0] * hp.sigma_R_y * sel
            if spec.all_corr:
                Q[cc_slope, f0:f0 + 4] = Q[f0:f0 + 4, cc_slope] = hp.rho_cc_gt[0] * hp.sigma_R_cc * sel
            diffuse[f0] = True
            # stationary part: (diff f, phi2 diff f_{t-1}, phi3 diff f_{t-2} + gamma u)
            Ts = Tf[1:, 1:]
            if np.max(np.abs(np.linalg.eigvals(Ts))) < 1 - 1e-8:
                P1[f0 + 1:f0 + 4, f0 + 1:f0 + 4] = linalg.solve_discrete_lyapunov(Ts, np.outer(sel[1:], sel[1:]))
            else:
                diffuse[f0 + 1:f0 + 4] = True
            fac_meas = np.array([[1.0, 1.0, 0.0, 0.0]])
        elif spec.factor_lags:
            q = spec.factor_lags
            kappa = np.zeros(q) if hp.kappa is None else np.atleast_1d(hp.kappa).astype(float)
            if kappa.size != q:
                raise ConfigurationError(f"expected {q} lag coefficients, got {kappa.size}")
            T[f0, f0] = 1.0
            for j in range(q):
                T[f0 + 1 + j, f0 + j] = 1.0
            coef = np.concatenate([[kappa[0]], np.diff(kappa), [-kappa[-1]]])
            # slope loads on f_{t-1}, ..., f_{t-q-1}: the previous-period factor block
            T[1, f0:f0 + q + 1] = coef
            Q[f0, f0] = 1.0
            Q[1, f0] = Q[f0, 1] = rho_gt[0] * hp.sigma_R_y
            if spec.all_corr:
                Q[cc_slope, f0] = Q[f0, cc_slope] = hp.rho_cc_gt[0] * hp.sigma_R_cc
            diffuse[f0:f0 + q + 1] = True
            fac_meas = np.zeros((1, q + 1))
            fac_meas[0, 0] = 1.0
        else:
            T[f0:f0 + r, f0:f0 + r] = np.eye(r)
            Q[f0:f0 + r, f0:f0 + r] = np.eye(r)
            Q[1, f0:f0 + r] = Q[f0:f0 + r, 1] = rho_gt * hp.sigma_R_y
            if spec.all_corr:
                rc = np.atleast_1d(hp.rho_cc_gt).astype(float)
                Q[cc_slope, f0:f0 + r] = Q[f0:f0 + r, cc_slope] = rc * hp.sigma_R_cc
            diffuse[f0:f0 + r] = True
            fac_meas = np.eye(r)
        nfs = lay.n_factor_states
        lam = spec.loadings
        psi = spec.idio_var
        mask = spec.i1_idio_mask
        i0 = ~mask
        if i0.any():
            if spec.collapse:
                A, C = factors_mod.collapse(lam[i0], psi[i0])
                G = np.linalg.cholesky(C)
                Gi = np.linalg.inv(G)
                # rotated projection Gi A x_t = Gi f_t + N(0, I)
                Z[:, lay.gt_rows, f0:f0 + nfs] = Gi @ fac_meas
                H[lay.gt_rows, lay.gt_rows] = np.eye(r)
            else:
                Z[:, lay.gt_rows, f0:f0 + nfs] = lam[i0] @ fac_meas
                H[lay.gt_rows, lay.gt_rows] = np.diag(psi[i0])
        if lay.n_idio:
            k = lay.idio
            Z[:, lay.gt_i1_rows, f0:f0 + nfs] = lam[mask] @ fac_meas
            Z[:, lay.gt_i1_rows, k:k + lay.n_idio] = np.eye(lay.n_idio)
            T[k:k + lay.n_idio, k:k + lay.n_idio] = np.eye(lay.n_idio)
            Q[k:k + lay.n_idio, k:k + lay.n_idio] = np.diag(psi[mask])
            diffuse[k:k + lay.n_idio] = True

    Q = (Q + Q.T) / 2
    return StateSpaceModel(Z=Z, T=T, R=np.eye(m), Q=Q, H=H, a1=a1, P1=P1, diffuse=diffuse)


def build_baseline(hp: HyperParams, c) -> StateSpaceModel:
    return build(ModelSpec(), hp, c)


def build_with_cc(hp: HyperParams, c) -> StateSpaceModel:
    return build(ModelSpec(include_cc=True), hp, c)


def build_with_gt(spec: ModelSpec, hp: HyperParams, c) -> StateSpaceModel:
    if spec.include_cc or not spec.include_gt:
        raise ConfigurationError("build_with_gt expects a factor-only specification")
    return build(spec, hp, c)


def build_full(spec: ModelSpec, hp: HyperParams, c) -> StateSpaceModel:
    if not (spec.include_cc and spec.include_gt):
        raise ConfigurationError("build_full expects both auxiliary blocks")
    return build(spec, hp, c)


def extend_factor_lags(spec: ModelSpec, q: int) -> ModelSpec:
    return ModelSpec(**{**spec.__dict__, "factor_lags": int(q), "factor_arima": None})


def extend_factor_arima(spec: ModelSpec, phi1: float, phi2: float, phi3: float, gamma: float) -> ModelSpec:
    if phi2 == 0 and phi3 != 0:
        raise ParameterError("ARIMA factor form needs phi2 != 0 when phi3 != 0")
    return ModelSpec(**{**spec.__dict__, "factor_arima": (phi1, phi2, phi3, gamma), "factor_lags": 0})


def promote_i1_idiosyncratics(spec: ModelSpec, mask) -> ModelSpec:
    return ModelSpec(**{**spec.__dict__, "i1_idio_mask": np.asarray(mask, dtype=bool)})


def observations(spec: ModelSpec, y, c, x_cc=None, X_gt=None) -> np.ndarray:
    """Stack the observation matrix in the row order used by :func:`build`.

    Survey cells whose design standard error is missing become missing.  The
    auxiliary panel must already be centered (see ``FactorDecomposition.center``);
    its stationary-idiosyncratic rows are projected when ``spec.collapse``.
    """
    y = np.asarray(y, dtype=float).reshape(-1, N_WAVES)
    c = np.asarray(c, dtype=float).reshape(-1, N_WAVES)
    n = y.shape[0]
    cols = [np.where(np.isnan(c[:n]), np.nan, y)]
    if spec.include_cc:
        cols.append(np.asarray(x_cc, dtype=float).reshape(n, 1))
    if spec.include_gt:
        X = np.asarray(X_gt, dtype=float).reshape(n, -1)
        mask = spec.i1_idio_mask
        i0 = ~mask
        if i0.any():
            if spec.collapse:
                Xi = X[:, i0]
                partial = np.isnan(Xi).any(axis=1) & ~np.isnan(Xi).all(axis=1)
                if partial.any():
                    raise DataError(f"projected panel rows need all-or-nothing missingness (row {np.flatnonzero(partial)[0]})")
                A, C = factors_mod.collapse(spec.loadings[i0], spec.idio_var[i0])
                Gi = np.linalg.inv(np.linalg.cholesky(C))
                cols.append(Xi @ (Gi @ A).T)
            else:
                cols.append(X[:, i0])
        cols.append(X[:, mask])
    return np.column_stack(cols)


def collapse_constant(spec: ModelSpec, X_gt, burn_in: int) -> float:
    """Log-likelihood mass removed by projecting the panel, summed after burn-in."""
    if not (spec.include_gt and spec.collapse):
        return 0.0
    i0 = ~spec.i1_idio_mask
    if not i0.any():
        return 0.0
    X = np.asarray(X_gt, dtype=float)[:, i0]
    const = factors_mod.collapse_loglik_const(X, spec.loadings[i0], spec.idio_var[i0])
    # the rotation Gi changes the Jacobian: add log|det Gi| per observed period
    A, C = factors_mod.collapse(spec.loadings[i0], spec.idio_var[i0])
    _, logdetC = np.linalg.slogdet(C)
    obs = ~np.isnan(X).any(axis=1)
    const = const - 0.5 * logdetC * obs
    return float(const[burn_in:].sum())


def param_list(spec: ModelSpec) -> list:
    ps = [Param("sigma_R_y"), Param("sigma_omega_y"), Param("sigma_lambda")]
    ps += [Param(f"sigma_nu{j}") for j in range(1, N_WAVES + 1)]
    ps.append(Param("delta", "corr"))
    if spec.include_cc:
        ps += [Param("sigma_R_cc"), Param("sigma_omega_cc"), Param("sigma_eps_cc"), Param("rho_cc", "corr")]
    if spec.include_gt:
        ps += [Param(f"rho_gt{j}", "corr") for j in range(1, spec.r + 1)]
        if spec.all_corr:
            ps += [Param(f"rho_cc_gt{j}", "corr") for j in range(1, spec.r + 1)]
        if spec.factor_lags:
            ps += [Param(f"kappa{j}", "real") for j in range(1, spec.factor_lags + 1)]
    return ps


class LabourForceFamily:
    """Estimation family for :func:`mle.fit` over a fixed data set.

    The model structure (transition pattern, loadings, initial diffuse set) is
    fixed by ``spec``; each likelihood call only rebuilds the matrices that
    depend on the hyperparameters.
    """

    def __init__(self, spec: ModelSpec, c, data: np.ndarray, X_gt_centered=None):
        self.spec = spec
        self.c = np.asarray(c, dtype=float)
        self.data = data
        self.params = tuple(param_list(spec))
        self._const = None
        self._X = X_gt_centered

    def hyper(self, values: dict) -> HyperParams:
        return HyperParams.from_dict(values)

    def build(self, values: dict) -> StateSpaceModel:
        return build(self.spec, self.hyper(values), self.c[: self.data.shape[0]])

    def constant(self, burn_in: int) -> float:
        if self._const is None:
            self._const = collapse_constant(self.spec, self._X, burn_in) if self._X is not None else 0.0
        return self._const

    def loglik(self, values: dict, y) -> float:
        from . import ssm
        model = self.build(values)
        return ssm.loglik(model, y) + self.constant(model.d)


def default_init(spec: ModelSpec, y: np.ndarray, x_cc=None) -> dict:
    """Starting values from simple moments of the observed series.

    Slope disturbances are matched to the spread of second differences of
    the wave average; survey-error scales start at one and correlations at zero.
    """
    y = np.asarray(y, dtype=float)
    ok = ~np.isnan(y).all(axis=1)
    d2 = np.diff(np.nanmean(y[ok], axis=1), 2)
    s = float(np.std(d2)) if d2.size > 3 else 1.0
    init = {"sigma_R_y": max(0.2 * s, 1e-6), "sigma_omega_y": max(0.02 * s, 1e-6),
            "sigma_lambda": max(0.02 * s, 1e-6)}
    for j in range(1, N_WAVES + 1):
        init[f"sigma_nu{j}"] = 1.0
    init["delta"] = 0.2
    if spec.include_cc:
        xc = np.asarray(x_cc, dtype=float)
        d2c = np.diff(xc[~np.isnan(xc)], 2)
        sc = float(np.std(d2c)) if d2c.size > 3 else 1.0
        init.update(sigma_R_cc=max(0.2 * sc, 1e-6), sigma_omega_cc=max(0.02 * sc, 1e-6),
                    sigma_eps_cc=max(0.3 * sc, 1e-6), rho_cc=0.0)
    if spec.include_gt:
        for j in range(1, spec.r + 1):
            init[f"rho_gt{j}"] = 0.0
            if spec.all_corr:
                init[f"rho_cc_gt{j}"] = 0.0
        for j in range(1, spec.factor_lags + 1):
            init[f"kappa{j}"] = 0.0
    return init


def theta_weights(m: int) -> np.ndarray:
    """Selector of level plus the six seasonal cosine states."""
    w = np.zeros(m)
    w[0] = 1.0
    w[2 + SEASONAL_COLS] = 1.0
    return w
