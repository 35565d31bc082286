"""Command-line interface: ``hdnowcast <command> [options]``.

Every command reads an optional ``key = value`` configuration file
(``--config``); flags override the file, which overrides the defaults.
Outputs are CSV files in ``--out`` together with ``manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics, factors, io, lf_model, mcsim, mle, nowcast, stationarity, targeting

log = logging.getLogger("hdnowcast")

DEFAULTS = {
    "out": "run",
    "data": ".",
    "seed": 0,
    # simulate
    "regime": "homoskedastic-dense",
    "rho": "0,0.2,0.4,0.6,0.8,0.9,0.99",
    "nsim": 200,
    "T": 150,
    "n": 100,
    "jobs": 1,
    "lr_null": False,
    # screening and targeting
    "panel": "monthly",
    "level": 0.05,
    "nboot": 999,
    "block_len": 0,
    # models
    "model": "baseline",
    "r": 1,
    "rmax": 8,
    "gt_frequency": "monthly",
    "loading_frequency": "monthly",
    "target": True,
    "i1_screen": False,
    "all_corr": False,
    "em": False,
    "max_iter": 500,
    "hypothesis": "",
    # nowcast
    "window": 36,
    "weeks": False,
    "cold_start": False,
}

BOOL_KEYS = {k for k, v in DEFAULTS.items() if isinstance(v, bool)}


def _coerce(key: str, value):
    default = DEFAULTS.get(key)
    if isinstance(value, str):
        if isinstance(default, bool):
            low = value.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"config key {key}: expected a boolean, got {value!r}")
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    return value


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the configuration file and command-line flags (in rising precedence)."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        for k, v in io.read_config(args.config).items():
            cfg[k] = _coerce(k, v)
    for k, v in vars(args).items():
        if k in ("command", "config", "verbose") or v is None:
            continue
        cfg[k] = v
    return cfg


def _options(cfg: dict) -> nowcast.NowcastOptions:
    return nowcast.NowcastOptions(r=int(cfg["r"]), gt_frequency=cfg["gt_frequency"],
                                  loading_frequency=cfg["loading_frequency"], target=bool(cfg["target"]),
                                  i1_screen=bool(cfg["i1_screen"]), all_corr=bool(cfg["all_corr"]),
                                  em_iteration=bool(cfg["em"]), warm_start=not cfg["cold_start"],
                                  max_iter=int(cfg["max_iter"]), level=float(cfg["level"]))


def _out_dir(cfg: dict) -> Path:
    p = Path(cfg["out"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def _panel(bundle: io.DataBundle, which: str):
    if which == "weekly":
        if bundle.gt_weekly is None:
            raise lf_model.DataError("no weekly auxiliary panel in the data directory")
        return bundle.gt_weekly, bundle.gt_weekly_names
    if bundle.gt_monthly is None:
        if bundle.gt_weekly is not None:
            return nowcast.aggregate_weekly(bundle.gt_weekly, bundle.calendar), bundle.gt_weekly_names
        raise lf_model.DataError("no auxiliary panel in the data directory")
    return bundle.gt_monthly, bundle.gt_monthly_names


def fit_models(bundle: io.DataBundle, model: str, opts: nowcast.NowcastOptions):
    """Full-sample fits of the baseline and of ``model``; returns (model fit, baseline fit)."""
    snap = nowcast.full_snapshot(bundle, opts.gt_frequency)
    base = nowcast.fit_variant(snap, "baseline", opts)
    if model == "baseline":
        return base, base
    slope = base.output.filtered_state[:, 1]
    return nowcast.fit_variant(snap, model, opts, init=base.params, slope=slope), base


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])


def _hypotheses(vf: nowcast.VariantFit, text: str) -> list:
    names = [p.name for p in vf.family.params if p.kind == "corr" and p.name != "delta"]
    if text:
        out = []
        for h in text.split(";"):
            h = h.strip()
            if h == "rho":
                out.append(names)
            elif h in names:
                out.append([h])
            else:
                group = [n for n in names if n.startswith(h) and n[len(h):].isdigit()]
                if not group:
                    raise ValueError(f"hypothesis {h!r} names no correlation parameter of this model ({names})")
                out.append(group)
        return out
    tests = [[n] for n in names]
    gt = [n for n in names if n.startswith("rho_gt")]
    if len(gt) > 1:
        tests.append(gt)
    if len(names) > 1:
        tests.append(names)
    return tests


def run_lr_tests(vf: nowcast.VariantFit, hypotheses: list, max_iter: int) -> list:
    out = []
    for restrict in hypotheses:
        res = mle.lr_test(vf.family, vf.data, vf.params, restrict, max_iter=max_iter)
        out.append(res)
    return out


# commands -------------------------------------------------------------------------

def cmd_simulate(cfg: dict) -> list:
    out = _out_dir(cfg)
    regimes = [r.strip() for r in str(cfg["regime"]).split(",") if r.strip()]
    files = []
    if cfg["lr_null"]:
        res = mcsim.run_lr_null(regimes, int(cfg["nsim"]), int(cfg["seed"]), int(cfg["T"]), int(cfg["n"]),
                                int(cfg["jobs"]), int(cfg["max_iter"]))
        mcsim.write_lr_csv(res, out / "lr_null.csv")
        files.append("lr_null.csv")
        for r in res:
            print(f"{r.regime}: mean LR {r.mean:.3f}, KS distance {r.ks:.3f}")
    else:
        rhos = [float(x) for x in str(cfg["rho"]).split(",")]
        rep = mcsim.run_study(regimes, rhos, int(cfg["nsim"]), int(cfg["seed"]), int(cfg["T"]), int(cfg["n"]),
                               int(cfg["jobs"]), int(cfg["max_iter"]))
        rep.to_csv(out / "mc_table.csv")
        files.append("mc_table.csv")
        for c in rep.cells:
            print(f"{c.regime} rho={c.rho}: relative MSFE L {c.relative('L'):.3f}, R {c.relative('R'):.3f}"
                  f" ({c.n_failed} failed)")
    return files


def cmd_screen(cfg: dict) -> list:
    bundle = io.load_bundle(cfg["data"], cfg)
    X, names = _panel(bundle, cfg["panel"])
    rep = stationarity.fdr_block_bootstrap(X, float(cfg["level"]), int(cfg["block_len"]) or None,
                                           int(cfg["nboot"]), int(cfg["seed"]), names=names)
    rep.to_csv(_out_dir(cfg) / "unitroot.csv")
    print(f"{int(rep.i1.sum())} of {len(names)} series kept as I(1)")
    return ["unitroot.csv"]


def cmd_target(cfg: dict) -> list:
    bundle = io.load_bundle(cfg["data"], cfg)
    opts = _options(cfg)
    base, _ = fit_models(bundle, "baseline", opts)
    X, names = _panel(bundle, "monthly")
    if cfg["panel"] == "weekly":
        X, names = nowcast.aggregate_weekly(_panel(bundle, "weekly")[0], bundle.calendar), bundle.gt_weekly_names
    rows = np.arange(lf_model.N_DIFFUSE_LFS, min(bundle.n, X.shape[0]))
    slope = base.output.filtered_state[:, 1]
    ok = rows[~np.isnan(bundle.y[rows]).all(axis=1)]
    res = targeting.target_panel(slope[ok], X[ok], names=names)
    res.to_csv(_out_dir(cfg) / "targeting.csv")
    print(f"selected {res.selected.size} of {len(names)} series (alpha={res.alpha}, lambda={res.lam:.4g})")
    return ["targeting.csv"]


def cmd_factors(cfg: dict) -> list:
    bundle = io.load_bundle(cfg["data"], cfg)
    X, names = _panel(bundle, cfg["panel"])
    ic = factors.ic_bai_ng(X, int(cfg["rmax"]))
    dec = factors.pca_nonstationary(X, int(cfg["r"]))
    out = _out_dir(cfg)
    rows = [[nm] + list(dec.loadings[i]) + [dec.idio_var[i]] for i, nm in enumerate(names)]
    _write_rows(out / "factors.csv", ["series"] + [f"loading{k + 1}" for k in range(dec.r)] + ["idio_var"], rows)
    _write_rows(out / "ic.csv", ["criterion", "r"], [("IC1", ic[0]), ("IC2", ic[1]), ("IC3", ic[2])])
    print(f"IC1={ic[0]} IC2={ic[1]} IC3={ic[2]}")
    return ["factors.csv", "ic.csv"]


def cmd_estimate(cfg: dict) -> list:
    bundle = io.load_bundle(cfg["data"], cfg)
    opts = _options(cfg)
    vf, base = fit_models(bundle, cfg["model"], opts)
    out = _out_dir(cfg)
    _write_rows(out / "params.csv", ["parameter", "value"], [(k, float(v)) for k, v in vf.params.items()])
    acc = nowcast.insample_accuracy(vf.output, base.output, variant=cfg["model"])
    nowcast.write_accuracy_csv([acc], out / "accuracy.csv")
    summary = [("loglik", vf.loglik), ("converged", int(vf.estimation.converged)),
               ("iterations", vf.estimation.n_iter), ("burn_in", vf.output.d_diffuse),
               ("n_series", 0 if vf.gt_columns is None else int(vf.gt_columns.size)), ("r", vf.spec.r)]
    files = ["params.csv", "accuracy.csv", "summary.csv"]
    if cfg["model"] != "baseline":
        for res in run_lr_tests(vf, _hypotheses(vf, cfg["hypothesis"]), int(cfg["max_iter"])):
            summary.append((f"lr_pvalue[{res.hypothesis}]", res.pvalue))
    _write_rows(out / "summary.csv", ["quantity", "value"], summary)
    for k, v in vf.params.items():
        print(f"{k:>16s} {v: .6g}")
    print(f"{'loglik':>16s} {vf.loglik: .6f}")
    return files


def cmd_nowcast(cfg: dict) -> list:
    bundle = io.load_bundle(cfg["data"], cfg)
    opts = _options(cfg)
    if cfg["weeks"] and opts.gt_frequency != "weekly":
        raise ValueError("--weeks needs --gt-frequency weekly")
    start = bundle.n - int(cfg["window"])
    sched = nowcast.Schedule(start, step="weekly" if cfg["weeks"] else "monthly")
    model = cfg["model"]
    variants = [model] if model != "baseline" else []
    run = nowcast.recursive_nowcast(bundle, variants, sched, opts)
    out = _out_dir(cfg)
    run.to_csv(out / "nowcast.csv", dates=[str(d) for d in bundle.dates])
    reports = list(run.reports.values())
    if not reports:
        base_only = nowcast.nowcast_accuracy(run.records, "baseline")
        reports = [base_only]
    nowcast.write_accuracy_csv(reports, out / "accuracy.csv")
    for rep in reports:
        print(f"{rep.variant}: relative MSFE theta/L/R = {np.round(rep.relative_msfe, 4).tolist()}"
              f" ({rep.n_flagged} flagged steps)")
        for wk in sorted(rep.weekly_msfe):
            print(f"  week {wk}: {np.round(rep.relative_weekly(wk), 4).tolist()}")
    return ["nowcast.csv", "accuracy.csv"]


def _series_names(vf: nowcast.VariantFit, bundle: io.DataBundle) -> list:
    names = [f"wave{j}" for j in range(1, lf_model.N_WAVES + 1)]
    if vf.spec.include_cc:
        names.append("claimant_counts")
    if vf.spec.include_gt:
        lay = lf_model.layout(vf.spec)
        names += [f"factor_space{k + 1}" for k in range(lay.gt_rows.stop - lay.gt_rows.start)]
        _, gt_names = _panel(bundle, "weekly" if vf.decomposition.freq == "weekly" else "monthly")
        cols = vf.gt_columns[vf.spec.i1_idio_mask]
        names += [gt_names[c] for c in cols]
    return names


def cmd_diagnose(cfg: dict) -> list:
    bundle = io.load_bundle(cfg["data"], cfg)
    vf, _ = fit_models(bundle, cfg["model"], _options(cfg))
    rows = diagnostics.residual_normality_report(vf.output, _series_names(vf, bundle))
    diagnostics.write_normality_csv(rows, _out_dir(cfg) / "normality.csv")
    for r in rows:
        print(f"{r.series:>18s} SW p={r.sw_pvalue:.3f} BS p={r.bs_pvalue:.3f}")
    return ["normality.csv"]


def cmd_lrtest(cfg: dict) -> list:
    bundle = io.load_bundle(cfg["data"], cfg)
    if cfg["model"] == "baseline":
        raise ValueError("the baseline model has no correlation parameters to test")
    vf, _ = fit_models(bundle, cfg["model"], _options(cfg))
    res = run_lr_tests(vf, _hypotheses(vf, cfg["hypothesis"]), int(cfg["max_iter"]))
    _write_rows(_out_dir(cfg) / "lrtest.csv", ["hypothesis", "statistic", "df", "pvalue", "loglik_restricted",
                                               "loglik_unrestricted"],
                [(r.hypothesis, r.statistic, r.df, r.pvalue, r.loglik_restricted, r.loglik_unrestricted) for r in res])
    for r in res:
        print(f"{r.hypothesis}: LR={r.statistic:.4f} df={r.df} p={r.pvalue:.4f}")
    return ["lrtest.csv"]


COMMANDS = {"simulate": cmd_simulate, "screen": cmd_screen, "target": cmd_target, "factors": cmd_factors,
            "estimate": cmd_estimate, "nowcast": cmd_nowcast, "diagnose": cmd_diagnose, "lrtest": cmd_lrtest}


def _bool_flag(p, name, help_text):
    dest = name.replace("-", "_")
    p.add_argument(f"--{name}", dest=dest, action="store_const", const=True, default=None, help=help_text)
    p.add_argument(f"--no-{name}", dest=dest, action="store_const", const=False, help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hdnowcast", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out", help="run directory for outputs")
        p.add_argument("--seed", type=int)
        if data:
            p.add_argument("--data", help="directory holding lfs.csv and the auxiliary files")

    def model_opts(p):
        p.add_argument("--model", choices=nowcast.VARIANTS)
        p.add_argument("--r", type=int, help="number of factors")
        p.add_argument("--gt-frequency", dest="gt_frequency", choices=("monthly", "weekly"))
        p.add_argument("--loading-frequency", dest="loading_frequency", choices=("monthly", "weekly"))
        _bool_flag(p, "target", "elastic-net targeting of the auxiliary panel (default on; --no-target)")
        _bool_flag(p, "i1-screen", "random-walk states for idiosyncratic components with a unit root")
        _bool_flag(p, "all-corr", "also correlate the claimant-count slope with the factors")
        _bool_flag(p, "em", "one extra loading update from the filtered factors")
        p.add_argument("--max-iter", dest="max_iter", type=int)
        p.add_argument("--level", type=float, help="false discovery rate for unit-root screening")

    p = sub.add_parser("simulate", help="Monte Carlo study")
    common(p, data=False)
    p.add_argument("--regime", help="comma-separated regimes: " + ", ".join(mcsim.REGIMES))
    p.add_argument("--rho", help="comma-separated correlations")
    p.add_argument("--nsim", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    _bool_flag(p, "lr-null", "distribution of the LR statistic under rho = 0 instead")

    p = sub.add_parser("screen", help="unit-root screening with FDR control")
    common(p)
    p.add_argument("--panel", choices=("monthly", "weekly"))
    p.add_argument("--level", type=float)
    p.add_argument("--nboot", type=int)
    p.add_argument("--block-len", dest="block_len", type=int)

    p = sub.add_parser("target", help="elastic-net selection of auxiliary series")
    common(p)
    p.add_argument("--panel", choices=("monthly", "weekly"))
    p.add_argument("--max-iter", dest="max_iter", type=int)

    p = sub.add_parser("factors", help="factor estimation and factor-count criteria")
    common(p)
    p.add_argument("--panel", choices=("monthly", "weekly"))
    p.add_argument("--r", type=int)
    p.add_argument("--rmax", type=int)

    for name, text in (("estimate", "maximum-likelihood fit of one model"),
                       ("nowcast", "recursive real-time nowcasts"),
                       ("diagnose", "normality of standardized prediction errors"),
                       ("lrtest", "likelihood-ratio tests of correlation parameters")):
        p = sub.add_parser(name, help=text)
        common(p)
        model_opts(p)
        if name in ("estimate", "lrtest"):
            p.add_argument("--hypothesis", help="';'-separated: a parameter, a prefix such as rho_gt, or rho")
        if name == "nowcast":
            p.add_argument("--window", type=int, help="number of final months to nowcast")
            _bool_flag(p, "weeks", "weekly steps with per-week accuracy")
            _bool_flag(p, "cold-start", "start every refit from default values")
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = resolve(args)
    try:
        files = COMMANDS[args.command](cfg)
    except (lf_model.DataError, ValueError, OSError, mle.OptimizerFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    io.write_manifest(_out_dir(cfg), args.command, cfg, cfg.get("seed"), files)
    return 0


if __name__ == "__main__":
    sys.exit(main())
