"""Raw indicator series, monthly aggregation, transforms and panel assembly.

Months are handled as ``numpy.datetime64[M]`` values throughout; their string
form (``YYYY-MM``) is what appears in every file written by the package.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateColumnError,
    DuplicateDateError,
    InputFormatError,
    NonPositiveBaseError,
    TargetGapError,
)

FREQUENCIES = ("daily", "weekly", "monthly", "quarterly")
CATEGORIES = ("structured", "unstructured")
AGGREGATIONS = ("mean", "sum", "last")
TRANSFORMS = ("yoy_pct_change", "level", "log_level")


def to_month(value) -> np.datetime64:
    """Coerce ``'2014-08'``, a date, or a datetime64 into a month scalar."""
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[M]")
    if isinstance(value, (dt.date, dt.datetime)):
        return np.datetime64(f"{value.year:04d}-{value.month:02d}", "M")
    return np.datetime64(str(value)[:7], "M")


def month_str(month) -> str:
    return str(to_month(month))


def month_range(start, end) -> np.ndarray:
    start, end = to_month(start), to_month(end)
    return np.arange(start, end + 1, dtype="datetime64[M]")


@dataclass(frozen=True)
class RawSeries:
    """One indicator at its native frequency."""

    id: str
    dates: tuple
    values: np.ndarray
    name: str = ""
    frequency: str = "monthly"
    category: str = "structured"
    unit: str = ""
    aggregation: str = "mean"
    interpolated: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))
        if self.frequency not in FREQUENCIES:
            raise InputFormatError(f"{self.id}: unknown frequency {self.frequency!r}")
        if self.category not in CATEGORIES:
            raise InputFormatError(f"{self.id}: unknown category {self.category!r}")
        if self.aggregation not in AGGREGATIONS:
            raise InputFormatError(f"{self.id}: unknown aggregation {self.aggregation!r}")
        if len(self.dates) != values.shape[0] or values.ndim != 1:
            raise InputFormatError(f"{self.id}: dates and values differ in length")
        if not np.all(np.isfinite(values)):
            raise InputFormatError(f"{self.id}: non-finite observation")
        for i in range(1, len(self.dates)):
            if self.dates[i] == self.dates[i - 1]:
                raise DuplicateDateError(f"{self.id}: duplicate date {self.dates[i]}", row=i + 1)
            if self.dates[i] < self.dates[i - 1]:
                raise InputFormatError(f"{self.id}: dates out of order at {self.dates[i]}", row=i + 1)
        _check_frequency(self)

    def __len__(self):
        return len(self.dates)

    @property
    def months(self) -> np.ndarray:
        return np.array([to_month(d) for d in self.dates], dtype="datetime64[M]")


def _check_frequency(series: RawSeries) -> None:
    if len(series.dates) < 2:
        return
    ordinals = np.array([d.toordinal() for d in series.dates])
    day_gaps = np.diff(ordinals)
    months = np.array([d.year * 12 + d.month - 1 for d in series.dates])
    month_gaps = np.diff(months)
    freq = series.frequency
    if freq == "daily":
        ok = np.median(day_gaps) <= 7
    elif freq == "weekly":
        ok = day_gaps.min() >= 4 and np.median(day_gaps) <= 14
    elif freq == "monthly":
        ok = month_gaps.min() >= 1
    else:
        ok = month_gaps.min() >= 1 and np.all(month_gaps % 3 == 0)
    if not ok:
        raise InputFormatError(f"{series.id}: observation gaps inconsistent with {freq} frequency")


@dataclass(frozen=True)
class TransformSpec:
    kind: str = "yoy_pct_change"
    standardize: bool = True

    def __post_init__(self):
        if self.kind not in TRANSFORMS:
            raise InputFormatError(f"unknown transform {self.kind!r}")


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def load_series_csv(path, id, name="", frequency="monthly", category="structured",
                    unit="", aggregation="mean") -> RawSeries:
    """Read a two-column ``date,value`` CSV into a :class:`RawSeries`.

    A first row whose date field does not parse is taken as a header. Rows with
    an empty value field are skipped.
    """
    path = Path(path)
    dates, values = [], []
    with path.open(newline="") as fh:
        for rownum, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise InputFormatError("expected two columns (date, value)", row=rownum)
            date_text, value_text = row[0], row[1]
            try:
                date = _parse_date(date_text)
            except ValueError:
                if rownum == 1:
                    continue
                raise InputFormatError(f"unparseable date {date_text!r}", row=rownum) from None
            if not value_text.strip():
                continue
            try:
                value = float(value_text)
            except ValueError:
                raise InputFormatError(f"unparseable value {value_text!r}", row=rownum) from None
            if not math.isfinite(value):
                raise InputFormatError(f"non-finite value {value_text!r}", row=rownum)
            if dates and date == dates[-1]:
                raise DuplicateDateError(f"duplicate date {date}", row=rownum)
            if dates and date < dates[-1]:
                raise InputFormatError(f"date {date} out of order", row=rownum)
            dates.append(date)
            values.append(value)
    return RawSeries(id=id, dates=dates, values=values, name=name, frequency=frequency,
                     category=category, unit=unit, aggregation=aggregation)


def aggregate_to_monthly(series: RawSeries) -> RawSeries:
    """Collapse a series to one observation per calendar month.

    Monthly input comes back unchanged. Quarterly values are repeated over the
    three months of their quarter and the result is flagged ``interpolated``.
    """
    if series.frequency == "monthly":
        return series
    if series.frequency == "quarterly":
        dates, values = [], []
        for d, v in zip(series.dates, series.values):
            first = 3 * ((d.month - 1) // 3) + 1
            for m in range(first, first + 3):
                dates.append(dt.date(d.year, m, 1))
                values.append(v)
        return replace(series, dates=dates, values=values, frequency="monthly", interpolated=True)

    groups: dict[tuple[int, int], list[float]] = {}
    for d, v in zip(series.dates, series.values):
        groups.setdefault((d.year, d.month), []).append(float(v))
    dates, values = [], []
    for (year, month), vals in groups.items():
        dates.append(dt.date(year, month, 1))
        if series.aggregation == "mean":
            values.append(math.fsum(vals) / len(vals))
        elif series.aggregation == "sum":
            values.append(math.fsum(vals))
        else:
            values.append(vals[-1])
    return replace(series, dates=dates, values=values, frequency="monthly")


def yoy_transform(series: RawSeries) -> RawSeries:
    """Year-over-year percent change, ``100 * (x_t / x_{t-12} - 1)``."""
    if series.frequency != "monthly":
        raise InputFormatError(f"{series.id}: yoy_transform needs a monthly series")
    by_month = {to_month(d): (d, v) for d, v in zip(series.dates, series.values)}
    dates, values = [], []
    for month, (d, v) in by_month.items():
        base = by_month.get(month - 12)
        if base is None:
            continue
        if base[1] <= 0:
            raise NonPositiveBaseError(
                f"{series.id}: non-positive base at {month - 12} for {month}", month=str(month))
        dates.append(d)
        values.append(100.0 * (v / base[1] - 1.0))
    return replace(series, dates=dates, values=values)


def apply_transform(series: RawSeries, spec: TransformSpec) -> RawSeries:
    monthly = aggregate_to_monthly(series)
    if spec.kind == "yoy_pct_change":
        return yoy_transform(monthly)
    if spec.kind == "log_level":
        if np.any(monthly.values <= 0):
            bad = monthly.dates[int(np.argmax(monthly.values <= 0))]
            raise NonPositiveBaseError(f"{series.id}: log_level needs positive values", month=month_str(bad))
        return replace(monthly, values=np.log(monthly.values))
    return monthly


@dataclass(frozen=True)
class MonthlyPanel:
    """Aligned monthly design matrix and target.

    ``design`` holds standardized predictors with the ragged edge already
    carried forward; ``missing_mask`` keeps the true missingness pattern.
    """

    months: np.ndarray
    target: np.ndarray
    design: np.ndarray
    missing_mask: np.ndarray
    column_ids: tuple
    column_stats: np.ndarray  # (p, 2): mean, std over the training window
    train_end: np.datetime64
    test_end: np.datetime64
    target_id: str = "gdp"
    column_categories: tuple = ()
    target_stats: tuple = (0.0, 1.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n, p = self.design.shape
        if self.missing_mask.shape != (n, p) or self.target.shape != (n,) or len(self.months) != n:
            raise InputFormatError("panel arrays disagree in shape")
        if len(self.column_ids) != p:
            raise InputFormatError("column_ids length differs from design width")
        if not self.column_categories:
            object.__setattr__(self, "column_categories", ("structured",) * p)
        for arr in (self.design, self.missing_mask, self.target, self.column_stats, self.months):
            arr.setflags(write=False)

    @property
    def n_months(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    @property
    def n_train(self) -> int:
        """Number of rows at or before ``train_end``."""
        return int(np.searchsorted(self.months, to_month(self.train_end), side="right"))

    def row_of(self, month) -> int:
        month = to_month(month)
        i = int(np.searchsorted(self.months, month))
        if i >= len(self.months) or self.months[i] != month:
            raise KeyError(f"month {month} not in panel")
        return i

    def columns(self, ids) -> np.ndarray:
        index = {c: j for j, c in enumerate(self.column_ids)}
        return np.array([index[c] for c in ids], dtype=int)

    def masked_design(self) -> np.ndarray:
        """Design with every truly missing entry set to NaN (for the DFM)."""
        out = np.array(self.design, dtype=float)
        out[self.missing_mask] = np.nan
        return out

    def destandardize(self, values, column) -> np.ndarray:
        mean, std = self.column_stats[column]
        return np.asarray(values) * std + mean


def standardize_columns(raw: np.ndarray, n_train: int, ids, standardize=None):
    """Training-window z-scores; returns (scaled, stats)."""
    p = raw.shape[1]
    stats = np.zeros((p, 2))
    stats[:, 1] = 1.0
    out = np.array(raw, dtype=float)
    standardize = [True] * p if standardize is None else list(standardize)
    for j in range(p):
        if not standardize[j]:
            continue
        col = raw[:n_train, j]
        col = col[np.isfinite(col)]
        if col.size < 2:
            raise DegenerateColumnError(ids[j])
        mean = col.mean()
        std = col.std(ddof=1)
        if not std > 0:
            raise DegenerateColumnError(ids[j])
        stats[j] = mean, std
        out[:, j] = (raw[:, j] - mean) / std
    return out, stats


def fill_ragged_edge(design: np.ndarray) -> np.ndarray:
    """Carry the last observed value forward over each column's trailing gap."""
    out = np.array(design, dtype=float)
    for j in range(out.shape[1]):
        observed = np.flatnonzero(np.isfinite(out[:, j]))
        if observed.size and observed[-1] < out.shape[0] - 1:
            out[observed[-1] + 1:, j] = out[observed[-1], j]
    return out


def build_panel(months, target, raw_design, column_ids, train_end, test_end, *,
                target_id="gdp", categories=None, standardize=None, meta=None) -> MonthlyPanel:
    """Standardize, fill the ragged edge and wrap arrays into a panel."""
    months = np.asarray(months, dtype="datetime64[M]")
    target = np.asarray(target, dtype=float)
    raw_design = np.asarray(raw_design, dtype=float)
    n_train = int(np.searchsorted(months, to_month(train_end), side="right"))
    if np.any(~np.isfinite(target[:n_train])):
        bad = months[:n_train][~np.isfinite(target[:n_train])][0]
        raise TargetGapError(f"target {target_id!r} missing at {bad} inside the training window")
    mask = ~np.isfinite(raw_design)
    scaled, stats = standardize_columns(raw_design, n_train, list(column_ids), standardize)
    design = fill_ragged_edge(scaled)
    train_y = target[:n_train]
    target_stats = (float(train_y.mean()), float(train_y.std(ddof=1)) if n_train > 1 else 1.0)
    return MonthlyPanel(
        months=months, target=target, design=design, missing_mask=mask,
        column_ids=tuple(column_ids), column_stats=stats,
        train_end=to_month(train_end), test_end=to_month(test_end), target_id=target_id,
        column_categories=tuple(categories) if categories is not None else (),
        target_stats=target_stats, meta=dict(meta or {}),
    )


def _by_month(series: RawSeries) -> dict:
    return {to_month(d): float(v) for d, v in zip(series.dates, series.values)}


def assemble_panel(series_set, target_id, transforms, train_end, test_end, start=None) -> MonthlyPanel:
    """Join monthly series into a panel.

    ``transforms`` maps series id to :class:`TransformSpec`; ids not present
    get the default (YoY percent change, standardized). Predictor columns keep
    the order of ``series_set``. The panel starts at ``start`` or, by default,
    at the first month where the transformed target exists.
    """
    train_end, test_end = to_month(train_end), to_month(test_end)
    if train_end >= test_end:
        raise InputFormatError("train_end must precede test_end")
    ids = [s.id for s in series_set]
    if target_id not in ids:
        raise InputFormatError(f"target series {target_id!r} not in series set")
    transformed = {}
    for s in series_set:
        transformed[s.id] = apply_transform(s, transforms.get(s.id, TransformSpec()))
    target_map = _by_month(transformed[target_id])
    if start is None:
        if not target_map:
            raise TargetGapError(f"target {target_id!r} has no observations after transforming")
        start = min(target_map)
    months = month_range(start, test_end)
    predictors = [s for s in series_set if s.id != target_id]
    target = np.array([target_map.get(m, np.nan) for m in months])
    raw = np.full((len(months), len(predictors)), np.nan)
    for j, s in enumerate(predictors):
        values = _by_month(transformed[s.id])
        raw[:, j] = [values.get(m, np.nan) for m in months]
    standardize = [transforms.get(s.id, TransformSpec()).standardize for s in predictors]
    return build_panel(
        months, target, raw, [s.id for s in predictors], train_end, test_end,
        target_id=target_id, categories=[s.category for s in predictors],
        standardize=standardize,
        meta={"interpolated": [s.id for s in predictors if transformed[s.id].interpolated]},
    )


# manifest and panel files

MANIFEST_FIELDS = ("id", "path", "frequency", "category", "aggregation", "transform")


def load_manifest(path):
    """Read a CSV manifest; returns (series list, transform map).

    Required columns are ``id,path,frequency,category,aggregation,transform``;
    ``name``, ``unit`` and ``standardize`` are optional. Relative paths are
    resolved against the manifest's directory.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    series, transforms = [], {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in MANIFEST_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise InputFormatError(f"manifest {path} lacks columns {missing}")
        for rownum, row in enumerate(reader, start=2):
            file = Path(row["path"])
            if not file.is_absolute():
                file = path.parent / file
            try:
                s = load_series_csv(
                    file, id=row["id"], name=row.get("name") or row["id"],
                    frequency=row["frequency"], category=row["category"],
                    unit=row.get("unit") or "", aggregation=row["aggregation"])
            except FileNotFoundError:
                raise InputFormatError(f"series file not found: {file}", row=rownum) from None
            series.append(s)
            flag = (row.get("standardize") or "true").strip().lower()
            transforms[s.id] = TransformSpec(kind=row["transform"], standardize=flag not in ("0", "false", "no"))
    return series, transforms


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


def write_panel(panel: MonthlyPanel, csv_path, json_path) -> None:
    """Panel CSV (month, target, predictors) plus a JSON sidecar."""
    csv_path, json_path = Path(csv_path), Path(json_path)
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", panel.target_id, *panel.column_ids])
        for i, m in enumerate(panel.months):
            w.writerow([str(m), _fmt(panel.target[i]), *(_fmt(v) for v in panel.design[i])])
    missing = {cid: [str(panel.months[i]) for i in np.flatnonzero(panel.missing_mask[:, j])]
               for j, cid in enumerate(panel.column_ids)}
    sidecar = {
        "target_id": panel.target_id,
        "train_end": str(panel.train_end),
        "test_end": str(panel.test_end),
        "target_stats": list(panel.target_stats),
        "columns": [
            {"id": cid, "category": cat, "mean": float(panel.column_stats[j, 0]),
             "std": float(panel.column_stats[j, 1])}
            for j, (cid, cat) in enumerate(zip(panel.column_ids, panel.column_categories))
        ],
        "missing": missing,
        "meta": panel.meta,
    }
    json_path.write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")


def read_panel(csv_path, json_path) -> MonthlyPanel:
    sidecar = json.loads(Path(json_path).read_text())
    with Path(csv_path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    months = np.array([r[0] for r in body], dtype="datetime64[M]")
    values = np.array([[float(c) if c else np.nan for c in r[1:]] for r in body], dtype=float)
    ids = tuple(header[2:])
    cols = {c["id"]: c for c in sidecar["columns"]}
    mask = np.zeros((len(months), len(ids)), dtype=bool)
    index = {str(m): i for i, m in enumerate(months)}
    for j, cid in enumerate(ids):
        for m in sidecar["missing"].get(cid, []):
            mask[index[m], j] = True
    return MonthlyPanel(
        months=months, target=values[:, 0].copy(), design=values[:, 1:].copy(), missing_mask=mask,
        column_ids=ids, column_stats=np.array([[cols[c]["mean"], cols[c]["std"]] for c in ids]).reshape(-1, 2),
        train_end=to_month(sidecar["train_end"]), test_end=to_month(sidecar["test_end"]),
        target_id=sidecar["target_id"], column_categories=tuple(cols[c]["category"] for c in ids),
        target_stats=tuple(sidecar["target_stats"]), meta=sidecar.get("meta", {}),
    )
