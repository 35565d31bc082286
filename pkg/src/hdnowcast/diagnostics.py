"""Normality tests for standardized prediction errors."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import ssm


def shapiro_wilk(x) -> tuple:
    """Shapiro-Wilk W and p-value (Royston's approximation, via scipy)."""
    x = np.asarray(x, dtype=float).ravel()
    x = x[~np.isnan(x)]
    if not 3 <= x.size <= 5000:
        raise ValueError(f"Shapiro-Wilk needs 3..5000 observations, got {x.size}")
    res = stats.shapiro(x)
    return float(res.statistic), float(res.pvalue)


def bowman_shenton(x) -> tuple:
    """Skewness-kurtosis statistic T(skew^2/6 + (kurt-3)^2/24) with a chi2(2) p-value."""
    x = np.asarray(x, dtype=float).ravel()
    x = x[~np.isnan(x)]
    n = x.size
    if n < 3:
        raise ValueError("Bowman-Shenton test needs at least 3 observations")
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    if m2 == 0:
        raise ValueError("constant sample")
    skew = np.mean(d ** 3) / m2 ** 1.5
    kurt = np.mean(d ** 4) / m2 ** 2
    stat = n * (skew ** 2 / 6.0 + (kurt - 3.0) ** 2 / 24.0)
    return float(stat), float(stats.chi2.sf(stat, 2))


@dataclass
class NormalityRow:
    series: str
    n: int
    sw_stat: float
    sw_pvalue: float
    bs_stat: float
    bs_pvalue: float


def residual_normality_report(out, names: Optional[Sequence[str]] = None) -> list:
    """Both tests on every standardized-innovation column after the burn-in.

    ``out`` is a :class:`ssm.FilterOutput` or a ready matrix of standardized
    innovations (time x series).  No multiplicity correction is applied.
    """
    if isinstance(out, ssm.FilterOutput):
        V = ssm.standardized_innovations(out)
    else:
        V = np.asarray(out, dtype=float)
    if V.size == 0:
        return []
    V = V.reshape(V.shape[0], -1)
    names = list(names) if names is not None else [f"series{i + 1}" for i in range(V.shape[1])]
    rows = []
    for i in range(V.shape[1]):
        v = V[:, i]
        v = v[~np.isnan(v)]
        if v.size < 3:
            continue
        sw = shapiro_wilk(v)
        bs = bowman_shenton(v)
        rows.append(NormalityRow(names[i], v.size, sw[0], sw[1], bs[0], bs[1]))
    return rows


def write_normality_csv(rows: list, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "n", "sw_stat", "sw_pvalue", "bs_stat", "bs_pvalue"])
        for r in rows:
            w.writerow([r.series, r.n, f"{r.sw_stat:.6f}", f"{r.sw_pvalue:.6g}", f"{r.bs_stat:.6f}", f"{r.bs_pvalue:.6g}"])
