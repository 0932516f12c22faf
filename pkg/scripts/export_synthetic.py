"""Write a synthetic panel as per-series CSV files plus a manifest, so the
file-based ingest path can be exercised without real data.

    python scripts/export_synthetic.py out_dir [--seed 1] [--months 185] [--p 91]

The series are written in levels with ``transform=level`` and the ragged
edge left blank; point a config's ``data.manifest`` at ``out_dir/manifest.csv``.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from nowcast.data import month_str
from nowcast.synthetic import generate_synthetic_panel


def write_series(path, months, values):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "value"])
        for m, v in zip(months, values):
            if np.isfinite(v):
                w.writerow([f"{month_str(m)}-01", repr(float(v))])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--months", type=int, default=185)
    parser.add_argument("--p", type=int, default=91)
    args = parser.parse_args()

    panel, _ = generate_synthetic_panel(args.seed, n_months=args.months, p=args.p)
    out = Path(args.out_dir)
    (out / "series").mkdir(parents=True, exist_ok=True)
    raw = panel.masked_design() * panel.column_stats[:, 1] + panel.column_stats[:, 0]
    rows = [("gdp", "series/gdp.csv", "structured")]
    write_series(out / "series" / "gdp.csv", panel.months, panel.target)
    for j, cid in enumerate(panel.column_ids):
        write_series(out / "series" / f"{cid}.csv", panel.months, raw[:, j])
        rows.append((cid, f"series/{cid}.csv", panel.column_categories[j]))
    with (out / "manifest.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "path", "frequency", "category", "aggregation", "transform", "standardize"])
        for cid, path, cat in rows:
            w.writerow([cid, path, "monthly", cat, "mean", "level", "false" if cid == "gdp" else "true"])
    print(f"wrote {len(rows)} series to {out}; train_end {month_str(panel.train_end)}, "
          f"test_end {month_str(panel.test_end)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
