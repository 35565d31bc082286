"""Mixed-frequency aggregation, real-time information sets and recursive nowcasting."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import factors, lf_model, mle, ssm, targeting

log = logging.getLogger(__name__)

VARIANTS = ("baseline", "cc", "gt", "cc_gt")
STATE_NAMES = ("theta", "L", "R")


# calendar and aggregation ---------------------------------------------------

@dataclass(frozen=True)
class Calendar:
    """Assignment of weeks (by start date) to months."""

    week_starts: np.ndarray  # datetime64[D]
    week_month: np.ndarray  # datetime64[M]

    def __post_init__(self):
        ws = np.asarray(self.week_starts, dtype="datetime64[D]")
        wm = np.asarray(self.week_month, dtype="datetime64[M]")
        if ws.shape != wm.shape:
            raise ValueError("week_starts and week_month differ in length")
        if ws.size > 1 and np.any(np.diff(ws) <= np.timedelta64(0, "D")):
            raise ValueError("week start dates must be strictly increasing")
        if wm.size > 1 and np.any(np.diff(wm) < np.timedelta64(0, "M")):
            raise ValueError("week-to-month assignment must be non-decreasing")
        months, counts = np.unique(wm, return_counts=True)
        bad = months[(counts < 4) | (counts > 5)]
        if bad.size:
            raise ValueError(f"months {bad.astype(str).tolist()} do not have 4 or 5 weeks")
        object.__setattr__(self, "week_starts", ws)
        object.__setattr__(self, "week_month", wm)

    @property
    def months(self) -> np.ndarray:
        return np.unique(self.week_month)

    def weeks_of(self, month_index: int) -> np.ndarray:
        return np.flatnonzero(self.week_month == self.months[month_index])

    def k(self, month_index: int) -> int:
        return int(self.weeks_of(month_index).size)

    def month_index_of_week(self, week: int) -> int:
        return int(np.searchsorted(self.months, self.week_month[week]))


def majority_day_calendar(week_starts, complete_only: bool = True) -> Calendar:
    """Assign each 7-day week to the month holding at least four of its days.

    That month is the month of the week's fourth day.  With ``complete_only``
    leading and trailing months without their full set of weeks are dropped.
    """
    ws = np.asarray(week_starts, dtype="datetime64[D]")
    wm = (ws + np.timedelta64(3, "D")).astype("datetime64[M]")
    if complete_only and ws.size:
        keep = np.ones(ws.size, dtype=bool)
        for edge in (wm[0], wm[-1]):
            sel = wm == edge
            first_day = edge.astype("datetime64[D]")
            last_day = (edge + np.timedelta64(1, "M")).astype("datetime64[D]") - np.timedelta64(1, "D")
            thursdays = ws[sel] + np.timedelta64(3, "D")
            # complete when the first week covers the month's first Thursday and the last its final one
            if (thursdays.min() - first_day) >= np.timedelta64(7, "D") or \
                    (last_day - thursdays.max()) >= np.timedelta64(7, "D"):
                keep &= ~sel
        ws, wm = ws[keep], wm[keep]
    return Calendar(ws, wm)


def month_sums(x, calendar: Calendar, j: Optional[int] = None) -> tuple:
    """Monthly flow aggregates of a weekly panel, without rescaling.

    Rows of ``x`` align with the first rows of the calendar.  Every month with
    at least one available week gets the sum of its available weeks; ``j``
    truncates the last of those months to its first ``j`` weeks.  Returns the
    aggregates, a flag per month telling whether all its weeks entered, and the
    number of weeks used in the last month.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    x = x.reshape(x.shape[0], -1)
    n_avail = x.shape[0]
    if n_avail > calendar.week_starts.size:
        raise ValueError("weekly data extend beyond the calendar")
    if n_avail == 0:
        raise ValueError("no weekly observations")
    n_months = calendar.month_index_of_week(n_avail - 1) + 1
    out = np.empty((n_months, x.shape[1]))
    full = np.empty(n_months, dtype=bool)
    used = 0
    for mi in range(n_months):
        weeks = calendar.weeks_of(mi)
        avail = weeks[weeks < n_avail]
        k = weeks.size
        if mi == n_months - 1 and j is not None:
            if not 1 <= j <= k:
                raise IndexError(f"week {j} requested in a month of {k} weeks")
            if j > avail.size:
                raise IndexError(f"week {j} of the last month is not available yet ({avail.size} weeks)")
            avail = avail[:j]
        out[mi] = x[avail].sum(axis=0)
        full[mi] = avail.size == k
        used = avail.size
    return (out[:, 0] if squeeze else out), full, used


def aggregate_weekly(x, calendar: Calendar, j: Optional[int] = None, rescale: bool = True) -> np.ndarray:
    """Monthly aggregates of weekly flow series rescaled to the range [0, 100].

    Month t at week j holds the sum of its first j weekly values.  Rescaling
    divides every column by its largest full-month aggregate in the window and
    multiplies by 100; the window maximum over partial months is used when no
    month is complete.
    """
    agg, full, _ = month_sums(x, calendar, j)
    if not rescale:
        return agg
    a2 = agg.reshape(agg.shape[0], -1)
    ref = a2[full] if full.any() else a2
    scale = ref.max(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    out = a2 / scale * 100.0
    return out.reshape(agg.shape)


# information sets -------------------------------------------------------------

@dataclass
class Snapshot:
    """Data visible to one estimation step; rows run from the first month to ``t``."""

    y: np.ndarray
    se: np.ndarray
    cc: Optional[np.ndarray]
    gt_monthly: Optional[np.ndarray]
    gt_weekly: Optional[np.ndarray]
    calendar: Optional[Calendar]
    week: Optional[int]
    gt_names: Optional[list] = None

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class InformationSet:
    """Real-time availability at month ``t`` (0-based) and optionally week ``week`` (1-based).

    Survey waves and claimant counts are published with a one-month delay, the
    auxiliary panel is current: monthly values through month t, weekly values
    through week ``week`` of month t.
    """

    t: int
    week: Optional[int] = None

    def snapshot(self, bundle, gt_frequency: str = "monthly") -> Snapshot:
        t = self.t
        n = bundle.y.shape[0]
        if not 0 <= t < n:
            raise IndexError(f"month {t} outside the sample of {n} months")
        y = np.array(bundle.y[:t], dtype=float)
        se = np.array(bundle.se[:t], dtype=float)
        y = np.vstack([y, np.full((1, y.shape[1]), np.nan)])
        se = np.vstack([se, np.full((1, se.shape[1]), np.nan)])
        cc = None
        if getattr(bundle, "cc", None) is not None:
            cc = np.append(np.array(bundle.cc[:t], dtype=float), np.nan)
        gm = gw = cal = None
        if gt_frequency == "monthly" and getattr(bundle, "gt_monthly", None) is not None:
            gm = np.array(bundle.gt_monthly[: t + 1], dtype=float)
        names = getattr(bundle, "gt_monthly_names", None) if gt_frequency == "monthly" else None
        if gt_frequency == "weekly" and getattr(bundle, "gt_weekly", None) is not None:
            cal = bundle.calendar
            weeks = cal.weeks_of(t)
            j = weeks.size if self.week is None else self.week
            if not 1 <= j <= weeks.size:
                raise IndexError(f"week {j} requested in a month of {weeks.size} weeks")
            end = int(weeks[0]) + j
            if end > bundle.gt_weekly.shape[0]:
                raise IndexError(f"weekly data end before week {j} of month {t}")
            gw = np.array(bundle.gt_weekly[:end], dtype=float)
            names = getattr(bundle, "gt_weekly_names", None)
        return Snapshot(y, se, cc, gm, gw, cal, self.week, list(names) if names is not None else None)


def full_snapshot(bundle, gt_frequency: str = "monthly") -> Snapshot:
    """All data in the bundle, for in-sample estimation."""
    gm = gw = cal = None
    names = None
    if gt_frequency == "monthly" and getattr(bundle, "gt_monthly", None) is not None:
        gm = np.array(bundle.gt_monthly, dtype=float)
        names = getattr(bundle, "gt_monthly_names", None)
    if gt_frequency == "weekly" and getattr(bundle, "gt_weekly", None) is not None:
        cal = bundle.calendar
        gw = np.array(bundle.gt_weekly, dtype=float)
        names = getattr(bundle, "gt_weekly_names", None)
    cc = None if getattr(bundle, "cc", None) is None else np.array(bundle.cc, dtype=float)
    return Snapshot(np.array(bundle.y, dtype=float), np.array(bundle.se, dtype=float), cc, gm, gw, cal, None,
                    list(names) if names is not None else None)


# model fitting for one snapshot ---------------------------------------------------

@dataclass
class NowcastOptions:
    r: int = 1
    gt_frequency: str = "monthly"
    loading_frequency: str = "monthly"
    target: bool = True
    i1_screen: bool = False
    all_corr: bool = False
    em_iteration: bool = False
    warm_start: bool = True
    max_iter: int = 500
    level: float = 0.05
    gt_columns: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.gt_frequency not in ("monthly", "weekly"):
            raise ValueError("gt_frequency must be 'monthly' or 'weekly'")
        if self.loading_frequency not in ("monthly", "weekly"):
            raise ValueError("loading_frequency must be 'monthly' or 'weekly'")
        if self.loading_frequency == "weekly" and self.gt_frequency != "weekly":
            raise ValueError("weekly loading estimation needs the weekly panel")


@dataclass
class VariantFit:
    variant: str
    spec: lf_model.ModelSpec
    params: dict
    estimation: Optional[mle.EstimationResult]
    output: ssm.FilterOutput
    decomposition: Optional[factors.FactorDecomposition] = None
    selection: Optional[targeting.TargetingResult] = None
    gt_columns: Optional[np.ndarray] = None
    family: Optional[lf_model.LabourForceFamily] = None
    data: Optional[np.ndarray] = None
    reused: bool = False

    @property
    def loglik(self) -> float:
        return self.estimation.loglik if self.estimation is not None else float("nan")


def monthly_panel(snap: Snapshot) -> Optional[np.ndarray]:
    """The auxiliary panel at monthly frequency for the rows of ``snap``."""
    if snap.gt_monthly is not None:
        return snap.gt_monthly
    if snap.gt_weekly is not None:
        return aggregate_weekly(snap.gt_weekly, snap.calendar, snap.week)
    return None


def _select_columns(X: np.ndarray, cols: Optional[np.ndarray]) -> np.ndarray:
    base = np.arange(X.shape[1]) if cols is None else np.asarray(cols, dtype=int)
    D = np.diff(X[:, base], axis=0)
    return base[D.std(axis=0) > 0]


def _merge_init(default: dict, previous: Optional[dict]) -> dict:
    if not previous:
        return default
    return {k: previous.get(k, v) for k, v in default.items()}


def fit_variant(snap: Snapshot, variant: str, opts: NowcastOptions, init: Optional[dict] = None,
                slope: Optional[np.ndarray] = None, fit: bool = True,
                reference_factors: Optional[np.ndarray] = None) -> VariantFit:
    """Two-step estimation of one model variant on the data in ``snap``.

    Auxiliary-panel variants need ``slope``, the filtered slope of the
    baseline model on the same snapshot, when targeting is switched on.
    With ``fit`` False the hyperparameters in ``init`` are used as they are.
    ``reference_factors`` (factors of an earlier step) fixes the factor signs
    so that warm-started correlation parameters keep their meaning.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown model variant {variant!r}")
    include_cc = variant in ("cc", "cc_gt")
    include_gt = variant in ("gt", "cc_gt")
    if include_cc and snap.cc is None:
        raise lf_model.DataError("claimant-count series missing for a model that needs it")
    n = snap.n
    spec = lf_model.ModelSpec(include_cc=include_cc)
    Xc = None
    dec = sel = cols = None
    if include_gt and opts.r > 0:
        X = monthly_panel(snap)
        if X is None:
            raise lf_model.DataError("auxiliary panel missing for a model that needs it")
        cols = _select_columns(X, opts.gt_columns)
        if opts.target:
            if slope is None:
                raise ValueError("targeting needs the baseline slope")
            # rows with survey data and past the diffuse start carry a usable slope
            rows = np.arange(lf_model.N_DIFFUSE_LFS, n - 1)
            sel = targeting.target_panel(slope[rows], X[rows][:, cols])
            if sel.selected.size >= max(opts.r, 2):
                cols = cols[sel.selected]
            else:
                log.info("targeting kept %d series; using the untargeted panel", sel.selected.size)
        weekly = None
        if opts.loading_frequency == "weekly":
            weekly = (snap.gt_weekly, snap.calendar, snap.week)
        spec, dec = factors.two_step(X[:, cols], opts.r, include_cc=include_cc, all_corr=opts.all_corr,
                                     i1_screen=opts.i1_screen, level=opts.level, weekly=weekly,
                                     weekly_columns=cols)
        if reference_factors is not None:
            dec = factors.align_signs(dec, reference_factors)
            spec = lf_model.ModelSpec(**{**spec.__dict__, "loadings": dec.loadings})
        Xc = dec.center(X[:, cols])
    data = lf_model.observations(spec, snap.y, snap.se, snap.cc, Xc)
    fam = lf_model.LabourForceFamily(spec, snap.se, data, Xc)
    start = _merge_init(lf_model.default_init(spec, snap.y, snap.cc), init)
    est = None
    params = start
    if fit:
        est = mle.fit(fam, data, start, max_iter=opts.max_iter)
        params = est.params
    out = ssm.filter(fam.build(params), data)
    vf = VariantFit(variant, spec, params, est, out, dec, sel, cols, fam, data)
    if fit and include_gt and opts.em_iteration:
        vf = _em_refit(vf, snap, opts, Xc_source=monthly_panel(snap))
    return vf


def _em_refit(vf: VariantFit, snap: Snapshot, opts: NowcastOptions, Xc_source: np.ndarray) -> VariantFit:
    """One extra pass: loadings from the filtered factors, then a new ML fit."""
    lay = lf_model.layout(vf.spec)
    f_kf = vf.output.filtered_state[:, lay.factor: lay.factor + vf.spec.r]
    X = Xc_source[:, vf.gt_columns]
    dec = factors.em_iterate(vf.decomposition, f_kf, X)
    spec = lf_model.ModelSpec(**{**vf.spec.__dict__, "loadings": dec.loadings, "idio_var": dec.idio_var})
    Xc = dec.center(X)
    data = lf_model.observations(spec, snap.y, snap.se, snap.cc, Xc)
    fam = lf_model.LabourForceFamily(spec, snap.se, data, Xc)
    est = mle.fit(fam, data, vf.params, max_iter=opts.max_iter)
    out = ssm.filter(fam.build(est.params), data)
    return VariantFit(vf.variant, spec, est.params, est, out, dec, vf.selection, vf.gt_columns, fam, data)


def theta_estimate(out: ssm.FilterOutput, filtered: bool = True) -> tuple:
    """Trend plus seasonal of the target series and its variance, per period.

    Returns (theta, var) with var = w'Pw for the selector w of the level and
    seasonal cosine states.
    """
    a = out.filtered_state if filtered else out.predicted_state
    P = out.filtered_cov if filtered else out.predicted_cov
    w = lf_model.theta_weights(a.shape[1])
    return a @ w, np.einsum("i,tij,j->t", w, P, w)


def state_estimates(out: ssm.FilterOutput, t: int) -> tuple:
    """(theta, L, R) point estimates and variances at period ``t``."""
    th, thv = theta_estimate(out)
    a = out.filtered_state[t]
    P = out.filtered_cov[t]
    return np.array([th[t], a[0], a[1]]), np.array([thv[t], P[0, 0], P[1, 1]])


# accuracy ---------------------------------------------------------------------

@dataclass
class AccuracyReport:
    """Average estimated variances of (theta, L, R) relative to the baseline model."""

    variant: str
    mse: Optional[np.ndarray] = None
    mse_base: Optional[np.ndarray] = None
    msfe: Optional[np.ndarray] = None
    msfe_base: Optional[np.ndarray] = None
    weekly_msfe: dict = field(default_factory=dict)
    weekly_msfe_base: dict = field(default_factory=dict)
    n_flagged: int = 0

    @property
    def relative_mse(self) -> Optional[np.ndarray]:
        return None if self.mse is None else self.mse / self.mse_base

    @property
    def relative_msfe(self) -> Optional[np.ndarray]:
        return None if self.msfe is None else self.msfe / self.msfe_base

    def relative_weekly(self, week: int) -> np.ndarray:
        return self.weekly_msfe[week] / self.weekly_msfe_base[week]

    def rows(self) -> list:
        out = []
        for kind, rel, ab, base in (("mse", self.relative_mse, self.mse, self.mse_base),
                                    ("msfe", self.relative_msfe, self.msfe, self.msfe_base)):
            if rel is None:
                continue
            for i, st in enumerate(STATE_NAMES):
                out.append((self.variant, kind, "", st, rel[i], ab[i], base[i]))
        for wk in sorted(self.weekly_msfe):
            rel = self.relative_weekly(wk)
            for i, st in enumerate(STATE_NAMES):
                out.append((self.variant, "msfe", wk, st, rel[i], self.weekly_msfe[wk][i],
                            self.weekly_msfe_base[wk][i]))
        return out


def write_accuracy_csv(reports: Sequence[AccuracyReport], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "measure", "week", "state", "relative", "value", "baseline"])
        for rep in reports:
            for row in rep.rows():
                w.writerow([row[0], row[1], row[2], row[3], f"{row[4]:.10g}", f"{row[5]:.10g}", f"{row[6]:.10g}"])


def insample_accuracy(out: ssm.FilterOutput, base: ssm.FilterOutput, d: Optional[int] = None,
                      variant: str = "model") -> AccuracyReport:
    """Average filtered variances of (theta, L, R) over periods after ``d``.

    ``d`` defaults to the larger burn-in of the two models, so both averages
    cover the same periods.
    """
    d = max(out.d_diffuse, base.d_diffuse) if d is None else int(d)

    def avg(o):
        _, thv = theta_estimate(o)
        P = o.filtered_cov[d:]
        return np.array([thv[d:].mean(), P[:, 0, 0].mean(), P[:, 1, 1].mean()])
    return AccuracyReport(variant, mse=avg(out), mse_base=avg(base))


# recursive scheme -------------------------------------------------------------

@dataclass
class NowcastRecord:
    variant: str
    t: int
    week: Optional[int]
    point: np.ndarray
    var: np.ndarray
    loglik: float
    converged: bool
    reused: bool
    n_series: int


@dataclass
class Schedule:
    """Out-of-sample months [start, end) with monthly or weekly steps."""

    start: int
    end: Optional[int] = None
    step: str = "monthly"

    def __post_init__(self):
        if self.step not in ("monthly", "weekly"):
            raise ValueError("step must be 'monthly' or 'weekly'")

    def months(self, n: int) -> range:
        end = n if self.end is None else min(self.end, n)
        if not 0 < self.start < end:
            raise ValueError(f"empty nowcast window [{self.start}, {end})")
        return range(self.start, end)


@dataclass
class NowcastRun:
    records: list
    reports: dict
    options: NowcastOptions
    schedule: Schedule

    def to_csv(self, path, dates: Optional[Sequence] = None):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "model", "week", "variable", "point", "se", "converged", "reused"])
            for r in self.records:
                date = str(dates[r.t]) if dates is not None else r.t
                for i, st in enumerate(STATE_NAMES):
                    w.writerow([date, r.variant, "" if r.week is None else r.week, st, f"{r.point[i]:.10g}",
                                f"{np.sqrt(max(r.var[i], 0.0)):.10g}", int(r.converged), int(r.reused)])


def _step(snap, variant, opts, prev, slope, ref=None):
    """Fit one variant; on failure reuse the previous optimum and flag the step."""
    init = prev if opts.warm_start else None
    try:
        vf = fit_variant(snap, variant, opts, init=init, slope=slope, reference_factors=ref)
        ok = vf.estimation.converged
        if not ok and prev is not None:
            vf = fit_variant(snap, variant, opts, init=prev, slope=slope, fit=False, reference_factors=ref)
            vf.reused = True
        return vf, ok
    except (mle.OptimizerFailure, factors.EstimationError, ssm.FilterDegeneracyError,
            targeting.OptimizationError, np.linalg.LinAlgError) as exc:
        if prev is None:
            raise
        log.warning("%s step failed (%s); reusing previous optimum", variant, exc)
        vf = fit_variant(snap, variant, opts, init=prev, slope=slope, fit=False, reference_factors=ref)
        vf.reused = True
        return vf, False


def recursive_nowcast(bundle, variants: Sequence[str], schedule: Schedule,
                      opts: Optional[NowcastOptions] = None) -> NowcastRun:
    """Concurrent nowcasts of (theta, L, R) with re-estimation at every step.

    Each step only sees its information set.  The baseline model is refit once
    per month (the auxiliary panel does not enter it) and supplies the slope
    used for targeting.  The report compares average nowcast variances with
    the baseline; with weekly steps the monthly figure averages the weekly
    variances within each month.
    """
    opts = opts or NowcastOptions()
    if schedule.step == "weekly" and opts.gt_frequency != "weekly":
        raise ValueError("weekly steps need the weekly auxiliary panel")
    variants = [v for v in variants if v != "baseline"]
    records = []
    prev = {}
    prev_factors = {}
    n = bundle.y.shape[0]
    for t in schedule.months(n):
        base_snap = InformationSet(t).snapshot(bundle, opts.gt_frequency)
        bfit, bok = _step(base_snap, "baseline", opts, prev.get("baseline"), None)
        prev["baseline"] = bfit.params
        bpoint, bvar = state_estimates(bfit.output, t)
        slope = bfit.output.filtered_state[:, 1]
        if schedule.step == "weekly":
            weeks = list(range(1, bundle.calendar.k(t) + 1))
        else:
            weeks = [None]
        for wk in weeks:
            records.append(NowcastRecord("baseline", t, wk, bpoint, bvar, bfit.loglik, bok, bfit.reused,
                                         0))
            snap = base_snap if wk is None else InformationSet(t, wk).snapshot(bundle, opts.gt_frequency)
            for v in variants:
                vf, ok = _step(snap, v, opts, prev.get(v), slope, prev_factors.get(v))
                prev[v] = vf.params
                if vf.decomposition is not None:
                    prev_factors[v] = vf.decomposition.factors
                point, var = state_estimates(vf.output, t)
                ns = 0 if vf.gt_columns is None else int(vf.gt_columns.size)
                records.append(NowcastRecord(v, t, wk, point, var, vf.loglik, ok, vf.reused, ns))
    reports = {v: nowcast_accuracy(records, v) for v in variants}
    return NowcastRun(records, reports, opts, schedule)


def nowcast_accuracy(records: Sequence[NowcastRecord], variant: str) -> AccuracyReport:
    """Out-of-sample accuracy of ``variant`` relative to the baseline records."""
    def per_month(v):
        rs = [r for r in records if r.variant == v]
        months = sorted({r.t for r in rs})
        monthly = np.array([np.mean([r.var for r in rs if r.t == t], axis=0) for t in months])
        weekly = {}
        for r in rs:
            if r.week is not None:
                weekly.setdefault(r.week, []).append(r.var)
        flagged = sum((not r.converged) or r.reused for r in rs)
        return monthly, {k: np.mean(vs, axis=0) for k, vs in weekly.items()}, flagged

    m, wk, flagged = per_month(variant)
    mb, wkb, _ = per_month("baseline")
    if m.size == 0:
        raise ValueError(f"no nowcast records for {variant!r}")
    return AccuracyReport(variant, msfe=m.mean(axis=0), msfe_base=mb.mean(axis=0), weekly_msfe=wk,
                          weekly_msfe_base=wkb, n_flagged=flagged)
