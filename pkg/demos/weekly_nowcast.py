"""Weekly nowcasts from the Python API on a freshly generated synthetic bundle.

Prints the relative MSFE of the trend slope against the survey-only model
for each week of the month.
"""
from hdnowcast import nowcast as nc
from hdnowcast import synthetic

bundle = synthetic.make_bundle(seed=1, n_months=120, n_gt=20)
opts = nc.NowcastOptions(gt_frequency="weekly", max_iter=200)
run = nc.recursive_nowcast(bundle, ["cc_gt"], nc.Schedule(114, 120, "weekly"), opts)
rep = run.reports["cc_gt"]
for week in sorted(rep.weekly_msfe):
    rel = {s: round(float(v), 3) for s, v in zip(nc.STATE_NAMES, rep.relative_weekly(week))}
    print(f"week {week}: relative MSFE {rel}")
