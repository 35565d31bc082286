"""Synthetic labour-force data set with survey waves, claimant counts and an auxiliary panel."""

from __future__ import annotations

import numpy as np

from . import lf_model, ssm
from .io import DataBundle
from .nowcast import majority_day_calendar


def weekly_calendar(first_month: str, n_months: int):
    """Monday-start weeks covering ``n_months`` complete months from ``first_month``."""
    m0 = np.datetime64(first_month, "M")
    start = m0.astype("datetime64[D]")
    # Monday of the week whose Thursday is the month's first Thursday
    first_thu = start + np.timedelta64((3 - (start.astype(int) + 3) % 7) % 7, "D")
    monday = first_thu - np.timedelta64(3, "D")
    end = (m0 + np.timedelta64(n_months, "M")).astype("datetime64[D]")
    weeks = np.arange(monday, end + np.timedelta64(7, "D"), np.timedelta64(7, "D"))
    cal = majority_day_calendar(weeks)
    keep = cal.week_month < m0 + np.timedelta64(n_months, "M")
    return type(cal)(cal.week_starts[keep], cal.week_month[keep])


def make_bundle(seed: int = 0, n_months: int = 185, n_gt: int = 40, first_month: str = "2004-01",
                rho_cc: float = 0.8, rho_gt: float = 0.7, level: float = 450.0) -> DataBundle:
    """Draw a data set shaped like the Dutch labour-force application.

    The survey part comes from the claimant-count model with known
    hyperparameters.  A monthly random-walk factor has innovations with
    correlation ``rho_gt`` to the slope innovations.  Monthly auxiliary series
    are indices loading on that factor, as published at monthly frequency;
    weekly series load on the factor of their month plus a small weekly
    deviation.  Both panels are scaled to a maximum of 100.
    """
    rng = np.random.default_rng(seed)
    hp = lf_model.HyperParams(sigma_R_y=2.0, sigma_omega_y=0.4, sigma_lambda=0.8,
                              sigma_nu=np.array([1.0, 1.1, 1.0, 1.05, 0.95]), delta=0.35,
                              sigma_R_cc=1.5, sigma_omega_cc=0.3, sigma_eps_cc=2.0, rho_cc=rho_cc)
    se = 8.0 + rng.uniform(-1.0, 1.0, (n_months, lf_model.N_WAVES))
    spec = lf_model.ModelSpec(include_cc=True)
    model = lf_model.build(spec, hp, se)
    lay = lf_model.layout(spec)
    a1 = np.zeros(model.m)
    a1[0] = level
    a1[lay.cc] = 0.7 * level
    obs, states = ssm.simulate(model, n_months, rng, a1=a1)
    y = obs[:, : lf_model.N_WAVES]
    cc = obs[:, lf_model.N_WAVES]

    cal = weekly_calendar(first_month, n_months)
    slope_shock = np.diff(states[:, 1], prepend=states[0, 1]) / hp.sigma_R_y
    week_month = np.searchsorted(cal.months, cal.week_month)
    n_w = week_month.size
    u = rho_gt * slope_shock + np.sqrt(1 - rho_gt ** 2) * rng.standard_normal(n_months)
    f_month = np.cumsum(u)
    f_week = f_month[week_month] + 0.2 * rng.standard_normal(n_w)
    lam = rng.uniform(0.2, 1.0, n_gt) * rng.choice([-1.0, 1.0], n_gt)
    lam[: n_gt // 4] = 0.0  # a quarter of the panel is unrelated to the factor
    base = rng.uniform(30.0, 60.0, n_gt)
    noise_sd = rng.uniform(0.3, 1.0, n_gt)

    def index(f):
        raw = base + 3.0 * np.outer(f, lam) + rng.standard_normal((f.size, n_gt)) * noise_sd
        raw -= np.minimum(raw.min(axis=0), 0.0) - 1.0
        return raw / raw.max(axis=0) * 100.0

    monthly = index(f_month)
    weekly = index(f_week)
    names = [f"term{i + 1:02d}" for i in range(n_gt)]
    dates = np.arange(np.datetime64(first_month, "M"), np.datetime64(first_month, "M") + n_months)
    return DataBundle(dates, y, se, cc, monthly, names, weekly, list(names), cal.week_starts.copy(),
                      cal).validate()


if __name__ == "__main__":
    import sys

    from .io import write_bundle

    if len(sys.argv) not in (2, 3):
        sys.exit("usage: python -m hdnowcast.synthetic OUTDIR [SEED]")
    write_bundle(make_bundle(int(sys.argv[2]) if len(sys.argv) == 3 else 0), sys.argv[1])
