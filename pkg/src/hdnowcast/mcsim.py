"""Monte Carlo study: smooth-trend target plus a large one-factor auxiliary panel.

Replications draw a univariate smooth-trend series and an I(1) factor panel
whose factor innovations are correlated with the slope innovations, then
nowcast level and slope recursively with and without the panel.
"""

from __future__ import annotations

import logging
import math
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import factors, mle, ssm
from .mle import Param, ParameterError

log = logging.getLogger(__name__)

REGIMES = ("homoskedastic-dense", "homoskedastic-sparse", "heteroskedastic-dense",
           "gaussian", "exponential", "t4")
RHO_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.99)


@dataclass(frozen=True)
class DgpSpec:
    rho: float = 0.0
    regime: str = "homoskedastic-dense"
    T: int = 150
    n: int = 100
    noise_var: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; choose from {REGIMES}")


@dataclass
class Draw:
    y: np.ndarray
    X: np.ndarray
    level: np.ndarray
    slope: np.ndarray
    factor: np.ndarray
    loadings: np.ndarray
    slope_shocks: np.ndarray
    factor_shocks: np.ndarray


def _idiosyncratic(regime: str, shape, var: float, rng: np.random.Generator) -> np.ndarray:
    if regime == "exponential":
        e = rng.standard_exponential(shape) - 1.0
        return e * np.sqrt(var)
    if regime == "t4":
        # t with 4 d.o.f. has variance 2
        return rng.standard_t(4, shape) * np.sqrt(var / 2.0)
    return rng.standard_normal(shape) * np.sqrt(var)


def simulate_dgp(spec: DgpSpec, rng: Optional[np.random.Generator] = None) -> Draw:
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    T, n, rho = spec.T, spec.n, spec.rho
    z = rng.standard_normal((T, 2))
    eta = z[:, 0]
    u = rho * z[:, 0] + math.sqrt(1 - rho * rho) * z[:, 1]
    slope = np.cumsum(eta)
    level = np.concatenate([[0.0], np.cumsum(slope[:-1])])
    f = np.cumsum(u)
    lam = rng.uniform(0.0, 1.0, n)
    if spec.regime == "homoskedastic-sparse":
        lam[: n // 2] = 0.0
    if spec.regime == "heteroskedastic-dense":
        h = rng.uniform(0.5, 10.0, n)
        eps = rng.standard_normal((T, n)) * np.sqrt(h)
    else:
        eps = _idiosyncratic(spec.regime, (T, n), spec.noise_var, rng)
    y = level + rng.standard_normal(T) * math.sqrt(spec.noise_var)
    X = np.outer(f, lam) + eps
    return Draw(y, X, level, slope, f, lam, eta, u)


class SmoothTrend:
    """Smooth-trend model for a single series: states (level, slope)."""

    params = (Param("sigma_R"), Param("sigma_eps"))
    _T = np.array([[1.0, 1.0], [0.0, 1.0]])
    _Z = np.array([[1.0, 0.0]])
    _R = np.array([[0.0], [1.0]])

    def build(self, v) -> ssm.StateSpaceModel:
        return ssm.StateSpaceModel(self._Z, self._T, self._R, np.array([[v["sigma_R"] ** 2]]),
                                   np.array([[v["sigma_eps"] ** 2]]), np.zeros(2), np.zeros((2, 2)),
                                   np.ones(2, dtype=bool))

    def loglik(self, v, y) -> float:
        if not hasattr(self, "_km"):
            self._km = ssm.KernelModel(self.build({"sigma_R": 1.0, "sigma_eps": 1.0}))
        RQR = np.zeros((2, 2))
        RQR[1, 1] = v["sigma_R"] ** 2
        return self._km.loglik(y, RQR, np.array([v["sigma_eps"] ** 2]))


class SmoothTrendFactor:
    """Smooth trend plus one random-walk factor measured through a panel.

    The panel enters through its projection onto the loadings, so the
    observation vector is (y_t, xbar_t).  ``rho`` correlates the slope and
    factor innovations; the factor innovation variance is one.
    """

    params = (Param("sigma_R"), Param("sigma_eps"), Param("rho", "corr"))
    _T = np.eye(3) + np.eye(3, k=1) * np.array([1.0, 0.0, 0.0])[:, None]
    _Z = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    _R = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def __init__(self, proj_var: float):
        self.proj_var = float(proj_var)

    def build(self, v) -> ssm.StateSpaceModel:
        s, rho = v["sigma_R"], v["rho"]
        if not -1.0 < rho < 1.0:
            raise ParameterError(f"rho={rho} outside (-1, 1)")
        Q = np.array([[s * s, rho * s], [rho * s, 1.0]])
        H = np.diag([v["sigma_eps"] ** 2, self.proj_var])
        return ssm.StateSpaceModel(self._Z, self._T, self._R, Q, H, np.zeros(3), np.zeros((3, 3)),
                                   np.ones(3, dtype=bool))

    def loglik(self, v, y) -> float:
        s, rho = v["sigma_R"], v["rho"]
        if not -1.0 < rho < 1.0:
            raise ParameterError(f"rho={rho} outside (-1, 1)")
        if not hasattr(self, "_km"):
            self._km = ssm.KernelModel(self.build({"sigma_R": 1.0, "sigma_eps": 1.0, "rho": 0.0}))
        RQR = np.zeros((3, 3))
        RQR[1:, 1:] = [[s * s, rho * s], [rho * s, 1.0]]
        return self._km.loglik(y, RQR, np.array([v["sigma_eps"] ** 2, self.proj_var]))


def _moment_init(y: np.ndarray) -> dict:
    d2 = np.diff(y[~np.isnan(y)], 2)
    s = float(np.std(d2)) if d2.size > 2 else 1.0
    return {"sigma_R": max(s / 2, 1e-3), "sigma_eps": max(s / 4, 1e-3), "rho": 0.0}


def projected_data(y: np.ndarray, X: np.ndarray, r: int = 1, reference: Optional[np.ndarray] = None):
    """Observation matrix (y, projected panel) and its model family.

    ``reference`` holds factors from an earlier window used to fix the sign.
    Returns (data, family, decomposition).
    """
    dec = factors.pca_nonstationary(X, r)
    if reference is not None:
        dec = factors.align_signs(dec, reference)
    A, C = factors.collapse(dec.loadings, dec.idio_var)
    data = np.column_stack([y, (dec.center(X) @ A.T)[:, 0]])
    return data, SmoothTrendFactor(C[0, 0]), dec


@dataclass
class NowcastPath:
    """Real-time estimates of (level, slope) for each nowcast period."""

    times: np.ndarray
    aux: np.ndarray
    base: np.ndarray
    aux_cov: np.ndarray
    base_cov: np.ndarray
    n_fail: int = 0


def nowcast_replication(draw: Draw, h: int, r: int = 1, max_iter: int = 500) -> NowcastPath:
    """Recursive nowcasts over the last ``h`` periods of one draw.

    At period t the target y_t is unavailable while the panel row x_t is
    observed.  Factors and hyperparameters are re-estimated on each window and
    warm-started from the previous optimum.
    """
    T = draw.y.shape[0]
    times = np.arange(T - h, T)
    aux = np.empty((h, 2))
    base = np.empty((h, 2))
    aux_cov = np.empty(h)
    base_cov = np.empty(h)
    base_model = SmoothTrend()
    p_aux = p_base = None
    prev_f = None
    n_fail = 0
    for k, t in enumerate(times):
        y = draw.y[: t + 1].copy()
        y[t] = np.nan
        # the previous window's factors fix the sign so warm starts stay valid
        data, fam, dec = projected_data(y, draw.X[: t + 1], r, prev_f)
        prev_f = dec.factors
        if p_aux is None:
            p_aux = _moment_init(y)
            p_base = {k2: p_aux[k2] for k2 in ("sigma_R", "sigma_eps")}
        fa = mle.fit(fam, data, p_aux, max_iter=max_iter)
        fb = mle.fit(base_model, y[:, None], p_base, max_iter=max_iter)
        n_fail += (not fa.converged) + (not fb.converged)
        p_aux, p_base = fa.params, fb.params
        oa = ssm.filter(fam.build(p_aux), data)
        ob = ssm.filter(base_model.build(p_base), y[:, None])
        aux[k] = oa.filtered_state[t, :2]
        base[k] = ob.filtered_state[t, :2]
        aux_cov[k] = oa.filtered_cov[t, 1, 1]
        base_cov[k] = ob.filtered_cov[t, 1, 1]
    return NowcastPath(times, aux, base, aux_cov, base_cov, n_fail)


LAST_PERIOD_REGIMES = ("gaussian", "exponential", "t4")
STATES = ("L", "R")
_FIT_ERRORS = (factors.EstimationError, ssm.FilterDegeneracyError, mle.OptimizerFailure, ParameterError,
               np.linalg.LinAlgError, FloatingPointError)


def nowcast_horizon(regime: str, T: int) -> int:
    """Periods nowcast per replication: the last one for the non-Gaussian study, else the final third."""
    return 1 if regime in LAST_PERIOD_REGIMES else T // 3


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(rep)]))


@dataclass
class Decomposition:
    """Error decomposition across replications, averaged over nowcast periods."""

    msfe: float
    var: float
    bias2: float


def decompose(errors: np.ndarray) -> tuple:
    """Per-period MSFE, variance and squared bias of ``errors`` (replications x periods).

    Returns the three per-period arrays; MSFE = var + bias^2 holds per period.
    """
    e = np.asarray(errors, dtype=float)
    bias = e.mean(axis=0)
    var = ((e - bias) ** 2).mean(axis=0)
    return (e ** 2).mean(axis=0), var, bias ** 2


@dataclass
class McCell:
    regime: str
    rho: float
    n_sim: int
    n_failed: int
    h: int
    aux: dict
    base: dict
    ratio_se: dict

    def relative(self, state: str, measure: str = "msfe") -> float:
        return getattr(self.aux[state], measure) / getattr(self.base[state], measure)


@dataclass
class McReport:
    cells: list
    seed: int
    T: int
    n: int

    def cell(self, regime: str, rho: float) -> McCell:
        for c in self.cells:
            if c.regime == regime and abs(c.rho - rho) < 1e-12:
                return c
        raise KeyError((regime, rho))

    def rows(self) -> list:
        out = []
        for c in self.cells:
            for st in STATES:
                a, b = c.aux[st], c.base[st]
                out += [
                    (c.regime, c.rho, st, "rel_msfe", a.msfe / b.msfe),
                    (c.regime, c.rho, st, "rel_var", a.var / b.var),
                    (c.regime, c.rho, st, "rel_bias2", a.bias2 / b.bias2 if b.bias2 > 0 else math.nan),
                    (c.regime, c.rho, st, "rel_msfe_se", c.ratio_se[st]),
                    (c.regime, c.rho, st, "msfe_aux", a.msfe), (c.regime, c.rho, st, "var_aux", a.var),
                    (c.regime, c.rho, st, "bias2_aux", a.bias2), (c.regime, c.rho, st, "msfe_base", b.msfe),
                    (c.regime, c.rho, st, "var_base", b.var), (c.regime, c.rho, st, "bias2_base", b.bias2),
                ]
            out.append((c.regime, c.rho, "", "n_sim", c.n_sim))
            out.append((c.regime, c.rho, "", "n_failed", c.n_failed))
            out.append((c.regime, c.rho, "", "h", c.h))
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["regime", "rho", "state", "measure", "value"])
            for row in self.rows():
                w.writerow([row[0], row[1], row[2], row[3], f"{row[4]:.10g}"])


def _one_replication(args):
    spec, rep, max_iter = args
    draw = simulate_dgp(spec, replication_rng(spec.seed, rep))
    h = nowcast_horizon(spec.regime, spec.T)
    try:
        path = nowcast_replication(draw, h, max_iter=max_iter)
    except _FIT_ERRORS as exc:
        log.warning("replication %d (%s, rho=%s) failed: %s", rep, spec.regime, spec.rho, exc)
        return None
    truth = np.column_stack([draw.level, draw.slope])[path.times]
    return path.aux - truth, path.base - truth


def _ratio_se(a: np.ndarray, b: np.ndarray) -> float:
    """Delta-method standard error of mean(a)/mean(b) over replications."""
    n = a.size
    ratio = a.mean() / b.mean()
    return float(np.std(a - ratio * b, ddof=1) / (math.sqrt(n) * b.mean())) if n > 1 else math.nan


def run_cell(regime: str, rho: float, n_sim: int = 200, seed: int = 0, T: int = 150, n: int = 100,
             n_jobs: int = 1, max_iter: int = 500) -> McCell:
    """One (regime, rho) cell of the study.

    Replication ``k`` draws from a stream derived from (seed, k) only, so the
    same draws are shared across rho values and results do not depend on
    ``n_jobs``.
    """
    spec = DgpSpec(rho=rho, regime=regime, T=T, n=n, seed=seed)
    tasks = [(spec, k, max_iter) for k in range(n_sim)]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            results = list(ex.map(_one_replication, tasks))
    else:
        results = [_one_replication(t) for t in tasks]
    ok = [r for r in results if r is not None]
    if not ok:
        raise RuntimeError(f"every replication failed for {regime}, rho={rho}")
    ea = np.stack([r[0] for r in ok])  # replications x periods x state
    eb = np.stack([r[1] for r in ok])
    aux, base, se = {}, {}, {}
    for j, st in enumerate(STATES):
        for dest, e in ((aux, ea), (base, eb)):
            m, v, b2 = decompose(e[:, :, j])
            dest[st] = Decomposition(float(m.mean()), float(v.mean()), float(b2.mean()))
        se[st] = _ratio_se((ea[:, :, j] ** 2).mean(axis=1), (eb[:, :, j] ** 2).mean(axis=1))
    return McCell(regime, float(rho), len(ok), len(results) - len(ok), ea.shape[1], aux, base, se)


def run_study(regimes: Sequence[str] = ("homoskedastic-dense",), rhos: Sequence[float] = RHO_GRID,
              n_sim: int = 200, seed: int = 0, T: int = 150, n: int = 100, n_jobs: int = 1,
              max_iter: int = 500) -> McReport:
    """Relative nowcast accuracy of the panel-augmented model against the univariate baseline."""
    if n_sim < 2:
        raise ValueError("n_sim must be at least 2")
    cells = [run_cell(reg, rho, n_sim, seed, T, n, n_jobs, max_iter) for reg in regimes for rho in rhos]
    return McReport(cells, seed, T, n)


def monotone_violations(report: McReport, regime: str, state: str = "R", n_se: float = 3.0) -> list:
    """Adjacent rho pairs where the relative MSFE rises by more than ``n_se`` standard errors."""
    cells = sorted((c for c in report.cells if c.regime == regime), key=lambda c: c.rho)
    bad = []
    for lo, hi in zip(cells, cells[1:]):
        slack = n_se * math.hypot(lo.ratio_se[state], hi.ratio_se[state])
        if hi.relative(state) > lo.relative(state) + slack:
            bad.append((lo.rho, hi.rho))
    return bad


@dataclass
class LrNullResult:
    regime: str
    statistics: np.ndarray
    n_clipped: int
    n_failed: int
    ks: float
    ks_pvalue: float

    @property
    def mean(self) -> float:
        return float(self.statistics.mean())


def _lr_replication(args):
    spec, rep, max_iter = args
    draw = simulate_dgp(spec, replication_rng(spec.seed, rep))
    T = spec.T
    y = draw.y.copy()
    y[T - 1] = np.nan
    try:
        data, fam, _ = projected_data(y, draw.X)
        res = mle.lr_test(fam, data, _moment_init(y), ["rho"], max_iter=max_iter)
    except _FIT_ERRORS as exc:
        log.warning("LR replication %d (%s) failed: %s", rep, spec.regime, exc)
        return None
    raw = 2.0 * (res.loglik_unrestricted - res.loglik_restricted)
    return res.statistic, raw < 0


def run_lr_null(regimes: Sequence[str] = LAST_PERIOD_REGIMES, n_sim: int = 500, seed: int = 0,
                T: int = 150, n: int = 100, n_jobs: int = 1, max_iter: int = 500) -> list:
    """Finite-sample distribution of the LR statistic for rho = 0 under each regime."""
    out = []
    for reg in regimes:
        spec = DgpSpec(rho=0.0, regime=reg, T=T, n=n, seed=seed)
        tasks = [(spec, k, max_iter) for k in range(n_sim)]
        if n_jobs > 1:
            with ProcessPoolExecutor(n_jobs) as ex:
                results = list(ex.map(_lr_replication, tasks))
        else:
            results = [_lr_replication(t) for t in tasks]
        ok = [r for r in results if r is not None]
        lr = np.array([r[0] for r in ok])
        ks = stats.kstest(lr, stats.chi2(1).cdf)
        out.append(LrNullResult(reg, lr, sum(r[1] for r in ok), len(results) - len(ok),
                                float(ks.statistic), float(ks.pvalue)))
    return out


def write_lr_csv(results: Sequence[LrNullResult], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["regime", "rho", "measure", "value"])
        for r in results:
            for k, v in (("lr_mean", r.mean), ("ks_distance", r.ks), ("ks_pvalue", r.ks_pvalue),
                         ("n_clipped", r.n_clipped), ("n_failed", r.n_failed), ("n_sim", r.statistics.size)):
                w.writerow([r.regime, 0.0, k, f"{v:.10g}"])
