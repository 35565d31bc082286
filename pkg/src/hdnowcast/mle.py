"""Maximum likelihood over transformed hyperparameters and likelihood-ratio tests.

A *family* is any object with

* ``params``: a sequence of :class:`Param` (name and transform kind),
* ``build(values: dict) -> StateSpaceModel`` raising :class:`ParameterError`
  for infeasible combinations,
* optionally ``loglik(values: dict, y) -> float`` as a faster route than
  building the model and filtering.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from . import ssm

log = logging.getLogger(__name__)


class ParameterError(ValueError):
    """Hyperparameters outside the admissible region."""


class OptimizerFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    kind: str = "scale"  # scale: log, corr: atanh, real: identity

    def to_free(self, v: float) -> float:
        if self.kind == "scale":
            return float(np.log(max(v, 1e-300)))
        if self.kind == "corr":
            return float(np.arctanh(np.clip(v, -1 + 1e-15, 1 - 1e-15)))
        return float(v)

    def from_free(self, x: float) -> float:
        if self.kind == "scale":
            return float(np.exp(x))
        if self.kind == "corr":
            return float(np.tanh(x))
        return float(x)


@dataclass
class EstimationResult:
    params: dict
    loglik: float
    converged: bool
    n_iter: int
    grad_norm: float
    free: np.ndarray
    n_eval: int = 0
    warnings: list = field(default_factory=list)
    trace: Optional[list] = None

    def rows(self) -> list:
        return [(k, v) for k, v in self.params.items()]


@dataclass
class LRTestResult:
    statistic: float
    df: int
    pvalue: float
    loglik_restricted: float
    loglik_unrestricted: float
    hypothesis: str
    restricted: Optional[EstimationResult] = None
    unrestricted: Optional[EstimationResult] = None


def _objective(family, y) -> Callable[[dict], float]:
    fast = getattr(family, "loglik", None)
    if fast is not None:
        return lambda vals: fast(vals, y)

    def ll(vals):
        return ssm.loglik(family.build(vals), y)
    return ll


def _fd_gradient(fun, x, fx, step):
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = fun(xp), fun(xm)
        if np.isfinite(fp) and np.isfinite(fm):
            g[i] = (fp - fm) / (2 * h)
        elif np.isfinite(fp):
            g[i] = (fp - fx) / h
        elif np.isfinite(fm):
            g[i] = (fx - fm) / h
        else:
            g[i] = 0.0
    return g


def bfgs(fun, x0, gtol=1e-5, ftol=1e-9, max_iter=500, fd_step=1e-5, trace=None):
    """Minimize ``fun`` with BFGS, finite-difference gradients and backtracking.

    Infeasible points must return ``inf``; the line search then shrinks the
    step, so iterates never leave the feasible region.
    Returns (x, f, converged, n_iter, grad_norm).
    """
    x = np.asarray(x0, dtype=float).copy()
    fx = fun(x)
    if not np.isfinite(fx):
        raise ParameterError("starting values are infeasible")
    g = _fd_gradient(fun, x, fx, fd_step)
    k = x.size
    Hinv = np.eye(k)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gn = float(np.linalg.norm(g))
        if gn < gtol:
            converged = True
            it -= 1
            break
        d = -Hinv @ g
        if g @ d >= 0:
            Hinv = np.eye(k)
            d = -g
        # keep the first trial step moderate in the transformed space
        big = np.abs(d).max()
        step = 1.0 if big <= 5.0 else 5.0 / big
        accepted = False
        for _ in range(50):
            xn = x + step * d
            fn = fun(xn)
            if np.isfinite(fn) and fn <= fx + 1e-4 * step * (g @ d):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if np.allclose(Hinv, np.eye(k)):
                break
            Hinv = np.eye(k)
            continue
        gn_new = _fd_gradient(fun, xn, fn, fd_step)
        s = xn - x
        yv = gn_new - g
        rel = abs(fx - fn) / max(1.0, abs(fx))
        x, fx, g = xn, fn, gn_new
        if trace is not None:
            trace.append((x.copy(), fx))
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            V = np.eye(k) - rho * np.outer(s, yv)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        if rel < ftol:
            converged = True
            break
    return x, fx, converged, it, float(np.linalg.norm(g))


def fit(family, y, init: Mapping[str, float], fixed: Optional[Mapping[str, float]] = None,
        max_iter: int = 500, gtol: float = 1e-5, ftol: float = 1e-9, keep_trace: bool = False,
        max_start_corr: float = 0.99) -> EstimationResult:
    """Maximize the log-likelihood of ``family`` on ``y``.

    ``fixed`` pins parameters at given values (used for restricted fits).
    Free correlations start inside +-``max_start_corr``: on the atanh scale
    the likelihood is nearly flat close to +-1, so a warm start there can
    stall far from the optimum.  Non-convergence is reported through the
    ``converged`` flag.
    """
    fixed = dict(fixed or {})
    free_params = [p for p in family.params if p.name not in fixed]
    base = {p.name: init[p.name] for p in family.params}
    base.update(fixed)
    ll = _objective(family, y)
    n_eval = [0]

    def values(x):
        vals = dict(base)
        for p, xi in zip(free_params, x):
            vals[p.name] = p.from_free(xi)
        return vals

    def negll(x):
        n_eval[0] += 1
        try:
            v = ll(values(x))
        except (ParameterError, ssm.FilterDegeneracyError, np.linalg.LinAlgError):
            return np.inf
        return -v if np.isfinite(v) else np.inf

    start = {p.name: float(np.clip(base[p.name], -max_start_corr, max_start_corr)) if p.kind == "corr"
             else base[p.name] for p in free_params}
    x0 = np.array([p.to_free(start[p.name]) for p in free_params])
    trace = [] if keep_trace else None
    if x0.size == 0:
        f0 = negll(x0)
        return EstimationResult(values(x0), -f0, True, 0, 0.0, x0, n_eval[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        x, fx, conv, it, gn = bfgs(negll, x0, gtol=gtol, ftol=ftol, max_iter=max_iter, trace=trace)
    res = EstimationResult(values(x), -fx, conv, it, gn, x, n_eval[0], trace=trace)
    for p in free_params:
        if p.kind == "corr" and abs(res.params[p.name]) > 0.999:
            res.warnings.append(f"{p.name} at the boundary ({res.params[p.name]:.4f})")
    if not conv:
        log.warning("estimation did not converge after %d iterations (|g|=%.2e)", it, gn)
    return res


def lr_test(family, y, init: Mapping[str, float], restrict: Sequence[str], hypothesis: str = "",
            value: float = 0.0, max_iter: int = 500) -> LRTestResult:
    """Likelihood-ratio test of ``restrict`` parameters equal to ``value``.

    The unrestricted fit is started both from ``init`` and from the restricted
    optimum; the better of the two is kept.
    """
    restrict = list(restrict)
    fixed = {name: value for name in restrict}
    r_fit = fit(family, y, init, fixed=fixed, max_iter=max_iter)
    u_fit = fit(family, y, init, max_iter=max_iter)
    u_alt = fit(family, y, r_fit.params, max_iter=max_iter)
    if u_alt.loglik > u_fit.loglik:
        u_fit = u_alt
    return lr_from_fits(r_fit, u_fit, len(restrict), hypothesis or ",".join(restrict) + "=0")


def lr_from_fits(r_fit: EstimationResult, u_fit: EstimationResult, df: int, hypothesis: str) -> LRTestResult:
    diff = r_fit.loglik - u_fit.loglik
    if diff > 1e-4:
        raise OptimizerFailure(
            f"restricted log-likelihood exceeds unrestricted by {diff:.3g}; refit advised")
    stat = max(0.0, -2.0 * diff)
    p = float(stats.chi2.sf(stat, df)) if stat > 0 else 1.0
    return LRTestResult(stat, df, p, r_fit.loglik, u_fit.loglik, hypothesis, r_fit, u_fit)
