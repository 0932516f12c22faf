"""Relative RMSE of AR and the six ML models over several synthetic seeds.

Runs the demo configuration (tuning included, factor models dropped) once
per seed and writes one row per seed to ``<out>/sweep.csv``.

    python scripts/seed_sweep.py --seeds 1 2 3 4 5
"""

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from nowcast.config import load_config
from nowcast.models import ML_IDS
from nowcast.pipeline import Pipeline

ROOT = Path(__file__).resolve().parents[1]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=ROOT / "configs" / "demo.yaml")
    parser.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    parser.add_argument("--out", default=ROOT / "runs" / "sweep")
    args = parser.parse_args()

    base = load_config(args.config)
    models = tuple(m for m in base.models if m.id in ("ar",) + ML_IDS)
    out = Path(args.out)
    rows = []
    for seed in args.seeds:
        pipe = Pipeline(dataclasses.replace(base, seed=seed, models=models), out / f"seed{seed}")
        pipe.run(["ingest", "select", "tune", "forecast", "evaluate"])
        report = json.loads((pipe.stage_dir("evaluate") / "eval_report.json").read_text())
        rel = {r["model"]: r["relative_rmse"] for r in report["models"]}
        best = min(ML_IDS, key=rel.get)
        rows.append({"seed": seed, **{m: rel[m] for m in ML_IDS}, "combination": rel.get("combination"),
                     "best": best, "best_gain": 1 - rel[best]})
        print(f"seed {seed}: best {best} {rel[best]:.3f}, all below AR: {all(rel[m] < 1 for m in ML_IDS)}")

    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    gains = sum(r["best_gain"] >= 0.2 for r in rows)
    print(f"best ML at least 20% below AR in {gains} of {len(rows)} seeds")
    return 0


if __name__ == "__main__":
    sys.exit(main())
