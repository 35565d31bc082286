"""Data bundle loading and writing, plain-text configuration and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Optional

import numpy as np

from .lf_model import N_WAVES, DataError
from .nowcast import Calendar, majority_day_calendar

log = logging.getLogger(__name__)

LFS_FILE = "lfs.csv"
CC_FILE = "cc.csv"
GT_MONTHLY_FILE = "gt_monthly.csv"
GT_WEEKLY_FILE = "gt_weekly.csv"
CALENDAR_FILE = "calendar.csv"


@dataclass
class DataBundle:
    dates: np.ndarray  # datetime64[M], one per month
    y: np.ndarray  # months x waves
    se: np.ndarray  # months x waves
    cc: Optional[np.ndarray] = None
    gt_monthly: Optional[np.ndarray] = None
    gt_monthly_names: Optional[list] = None
    gt_weekly: Optional[np.ndarray] = None
    gt_weekly_names: Optional[list] = None
    week_dates: Optional[np.ndarray] = None
    calendar: Optional[Calendar] = None
    dropped: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def validate(self):
        """Check shapes and ranges; row numbers in messages are CSV file lines."""
        d = np.asarray(self.dates, dtype="datetime64[M]")
        if d.size != self.y.shape[0]:
            raise DataError(f"{d.size} dates for {self.y.shape[0]} survey rows")
        steps = np.diff(d).astype(int)
        if np.any(steps <= 0):
            i = int(np.flatnonzero(steps <= 0)[0]) + 1
            raise DataError(f"{LFS_FILE}: row {i + 2}: dates not strictly increasing ({d[i]})")
        if np.any(steps > 1):
            i = int(np.flatnonzero(steps > 1)[0]) + 1
            raise DataError(f"{LFS_FILE}: row {i + 2}: gap in monthly dates before {d[i]}")
        if self.y.shape[1] != N_WAVES or self.se.shape != self.y.shape:
            raise DataError(f"survey data need {N_WAVES} waves with matching standard errors")
        obs = ~np.isnan(self.y)
        bad = obs & ~(self.se > 0)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise DataError(f"{LFS_FILE}: row {i + 2}, column se{j + 1}: standard error must be positive")
        if self.cc is not None and self.cc.shape != (self.n,):
            raise DataError(f"claimant counts have {self.cc.size} rows, survey data {self.n}")
        for name, X, names in (("monthly", self.gt_monthly, self.gt_monthly_names),
                               ("weekly", self.gt_weekly, self.gt_weekly_names)):
            if X is None:
                continue
            out = ~np.isnan(X) & ((X < 0) | (X > 100))
            if out.any():
                i, j = np.argwhere(out)[0]
                raise DataError(f"{name} auxiliary panel: row {i + 2}, column {names[j]}: value {X[i, j]} outside [0, 100]")
        if self.gt_monthly is not None and self.gt_monthly.shape[0] != self.n:
            raise DataError(f"monthly auxiliary panel has {self.gt_monthly.shape[0]} rows, survey data {self.n}")
        if self.gt_weekly is not None:
            if self.calendar is None:
                raise DataError("weekly auxiliary panel needs a calendar")
            if self.gt_weekly.shape[0] > self.calendar.week_starts.size:
                raise DataError("weekly auxiliary panel extends beyond the calendar")
            if self.calendar.months[0] != d[0]:
                raise DataError(f"calendar starts in {self.calendar.months[0]}, survey data in {d[0]}")
        return self


# CSV primitives -----------------------------------------------------------------

def _fmt(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def _read_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path.name}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataError(f"{path.name}: row {i + 2} has {len(r)} fields, header has {len(header)}")
    return header, body


def _parse_values(path: Path, body, start_col: int) -> np.ndarray:
    out = np.empty((len(body), len(body[0]) - start_col if body else 0))
    for i, r in enumerate(body):
        for j, cell in enumerate(r[start_col:]):
            try:
                out[i, j] = float(cell) if cell.strip() != "" else np.nan
            except ValueError:
                raise DataError(f"{path.name}: row {i + 2}, column {j + start_col + 1}: not a number ({cell!r})") from None
    return out


def _parse_dates(path: Path, body, unit: str) -> np.ndarray:
    try:
        return np.array([r[0] for r in body], dtype="datetime64[D]").astype(f"datetime64[{unit}]")
    except ValueError as exc:
        raise DataError(f"{path.name}: unreadable date ({exc})") from None


def _check_unique(path: Path, dates: np.ndarray):
    if dates.size > 1 and np.any(np.diff(dates) <= np.timedelta64(0)):
        i = int(np.flatnonzero(np.diff(dates) <= np.timedelta64(0))[0]) + 1
        raise DataError(f"{path.name}: row {i + 2}: duplicate or decreasing date {dates[i]}")


def _write_table(path: Path, header, dates, values):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for d, row in zip(dates, values):
            w.writerow([str(d)] + [_fmt(v) for v in np.atleast_1d(row)])


def _month_str(d) -> str:
    return str(np.datetime64(d, "M").astype("datetime64[D]"))


# bundle I/O ---------------------------------------------------------------------

def drop_sparse_columns(X: np.ndarray, names: list, max_zero_share: float = 0.5, label: str = ""):
    """Remove series that are zero in more than ``max_zero_share`` of their observed cells."""
    obs = ~np.isnan(X)
    share = ((X == 0) & obs).sum(axis=0) / np.maximum(obs.sum(axis=0), 1)
    keep = share <= max_zero_share
    dropped = []
    for j in np.flatnonzero(~keep):
        reason = f"{label}{names[j]}: zero in {share[j]:.0%} of cells"
        log.info("dropping auxiliary series %s", reason)
        dropped.append(reason)
    return X[:, keep], [n for n, k in zip(names, keep) if k], dropped


def load_bundle(directory, config: Optional[dict] = None) -> DataBundle:
    """Read and validate the CSV files in ``directory``.

    Required: lfs.csv.  Optional: cc.csv, gt_monthly.csv, gt_weekly.csv and
    calendar.csv (derived from the weekly dates by the majority-day rule when
    absent).  Auxiliary series that are mostly zero are dropped.
    """
    config = config or {}
    root = Path(directory)
    p = root / LFS_FILE
    header, body = _read_csv(p)
    expected = ["date"] + [f"y{j}" for j in range(1, N_WAVES + 1)] + [f"se{j}" for j in range(1, N_WAVES + 1)]
    if header != expected:
        raise DataError(f"{p.name}: header must be {','.join(expected)}")
    dates_d = _parse_dates(p, body, "D")
    _check_unique(p, dates_d)
    dates = dates_d.astype("datetime64[M]")
    if np.any(dates.astype("datetime64[D]") != dates_d):
        raise DataError(f"{p.name}: dates must be first days of months")
    vals = _parse_values(p, body, 1)
    y, se = vals[:, :N_WAVES], vals[:, N_WAVES:]
    bundle = DataBundle(dates, y, se)
    max_zero = float(config.get("max_zero_share", 0.5))

    p = root / CC_FILE
    if p.exists():
        header, body = _read_csv(p)
        if header != ["date", "value"]:
            raise DataError(f"{p.name}: header must be date,value")
        d = _parse_dates(p, body, "D")
        _check_unique(p, d)
        if d.size != dates.size or np.any(d.astype("datetime64[M]") != dates):
            raise DataError(f"{p.name}: dates must match {LFS_FILE}")
        bundle.cc = _parse_values(p, body, 1)[:, 0]

    p = root / GT_MONTHLY_FILE
    if p.exists():
        header, body = _read_csv(p)
        d = _parse_dates(p, body, "D")
        _check_unique(p, d)
        if d.size != dates.size or np.any(d.astype("datetime64[M]") != dates):
            raise DataError(f"{p.name}: dates must match {LFS_FILE}")
        X = _parse_values(p, body, 1)
        bundle.gt_monthly, bundle.gt_monthly_names, dr = drop_sparse_columns(X, header[1:], max_zero, "monthly ")
        bundle.dropped += dr

    p = root / GT_WEEKLY_FILE
    if p.exists():
        header, body = _read_csv(p)
        wd = _parse_dates(p, body, "D")
        _check_unique(p, wd)
        X = _parse_values(p, body, 1)
        bundle.gt_weekly, bundle.gt_weekly_names, dr = drop_sparse_columns(X, header[1:], max_zero, "weekly ")
        bundle.dropped += dr
        cp = root / CALENDAR_FILE
        if cp.exists():
            ch, cb = _read_csv(cp)
            if ch != ["week_start", "month"]:
                raise DataError(f"{cp.name}: header must be week_start,month")
            ws = _parse_dates(cp, cb, "D")
            wm = np.array([r[1] for r in cb], dtype="datetime64[M]")
            try:
                bundle.calendar = Calendar(ws, wm)
            except ValueError as exc:
                raise DataError(f"{cp.name}: {exc}") from None
        else:
            bundle.calendar = majority_day_calendar(wd)
        cal = bundle.calendar
        if wd.size > cal.week_starts.size or np.any(wd != cal.week_starts[: wd.size]):
            raise DataError(f"{p.name}: week dates do not follow the calendar")
        bundle.week_dates = wd
    return bundle.validate()


def write_bundle(bundle: DataBundle, directory):
    """Write ``bundle`` as CSV files that :func:`load_bundle` reads back unchanged."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    months = [_month_str(d) for d in bundle.dates]
    header = ["date"] + [f"y{j}" for j in range(1, N_WAVES + 1)] + [f"se{j}" for j in range(1, N_WAVES + 1)]
    _write_table(root / LFS_FILE, header, months, np.column_stack([bundle.y, bundle.se]))
    if bundle.cc is not None:
        _write_table(root / CC_FILE, ["date", "value"], months, bundle.cc[:, None])
    if bundle.gt_monthly is not None:
        _write_table(root / GT_MONTHLY_FILE, ["date"] + list(bundle.gt_monthly_names), months, bundle.gt_monthly)
    if bundle.gt_weekly is not None:
        _write_table(root / GT_WEEKLY_FILE, ["date"] + list(bundle.gt_weekly_names), bundle.week_dates,
                     bundle.gt_weekly)
        with open(root / CALENDAR_FILE, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["week_start", "month"])
            for ws, wm in zip(bundle.calendar.week_starts, bundle.calendar.week_month):
                w.writerow([str(ws), str(wm)])


# configuration and manifest --------------------------------------------------------

def read_config(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {i}: expected key = value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def config_hash(config: dict) -> str:
    blob = json.dumps({k: str(v) for k, v in sorted(config.items())}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _version(pkg: str) -> str:
    try:
        return metadata.version(pkg)
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(run_dir, command: str, config: dict, seed: Optional[int], outputs: list):
    manifest = {
        "command": command,
        "config": {k: str(v) for k, v in sorted(config.items())},
        "config_sha256": config_hash(config),
        "seed": seed,
        "outputs": sorted(outputs),
        "versions": {"python": platform.python_version(),
                     **{p: _version(p) for p in ("artifact", "numpy", "scipy", "numba", "statsmodels")}},
    }
    path = Path(run_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path
