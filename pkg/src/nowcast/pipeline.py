"""Staged pipeline: ingest -> select -> tune -> forecast -> evaluate -> report.

Each stage writes into ``<out>/<stage>/`` and a ``_stamp.json`` holding a
fingerprint of its configuration section and of its upstream outputs. A
stage is skipped when the fingerprint matches and all outputs exist.
Downstream stages always read upstream results back from disk, so cached
and fresh runs see identical inputs.
"""

from __future__ import annotations

import contextlib
import csv
import hashlib
import json
import logging
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .data import assemble_panel, load_manifest, read_panel, write_panel
from .errors import ConfigError, StageError
from .evaluation import EvalReport, ForecastTrack, evaluate_tracks, expanding_window_forecast, rmse
from .models import ML_IDS, get_family
from .selection import InclusionReport, SelectionConfig, gibbs_spike_slab, top_k_variables
from .synthetic import generate_synthetic_panel
from .trees import default_threads
from .tuning import DEFAULT_SPACES, SearchSpace, bayes_optimize, make_time_folds

log = logging.getLogger(__name__)

STAGES = ("ingest", "select", "tune", "forecast", "evaluate", "report")
UPSTREAM = {
    "ingest": (), "select": ("ingest",), "tune": ("ingest",),
    "forecast": ("ingest", "select", "tune"), "evaluate": ("forecast",),
    "report": ("select", "evaluate"),
}
FORMAT_VERSION = 1


def sub_seed(master: int, stage: str, model_id: str = "") -> int:
    """Seed for one (stage, model) pair; depends only on the names involved."""
    ss = np.random.SeedSequence([master, zlib.crc32(stage.encode()), zlib.crc32(model_id.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary sibling of ``path`` and rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def atomic_write_text(path, text: str) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(text)


def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=str)


class Pipeline:
    def __init__(self, config: PipelineConfig, out_dir=None):
        self.config = config
        self.out = Path(out_dir if out_dir is not None else config.output_dir)

    # bookkeeping

    def stage_dir(self, stage) -> Path:
        return self.out / stage

    def _stamp_path(self, stage) -> Path:
        return self.stage_dir(stage) / "_stamp.json"

    def _read_stamp(self, stage):
        path = self._stamp_path(stage)
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def _require(self, stage):
        for up in UPSTREAM[stage]:
            stamp = self._read_stamp(up)
            if stamp is None or any(not (self.stage_dir(up) / f).exists() for f in stamp["outputs"]):
                raise StageError(stage, f"artifacts of stage {up!r} are absent; run it first")

    def _stage_inputs(self, stage) -> dict:
        cfg = self.config
        sections = {
            "ingest": {"data": asdict(cfg.data)},
            "select": {"selection": cfg.section("selection")},
            "tune": {"tuning": cfg.section("tuning"), "models": [asdict(m) for m in cfg.models]},
            "forecast": {"evaluation": cfg.section("evaluation"), "models": [asdict(m) for m in cfg.models]},
            "evaluate": {"evaluation": cfg.section("evaluation"), "models": list(cfg.model_ids)},
            "report": {"models": list(cfg.model_ids)},
        }[stage]
        upstream = {up: (self._read_stamp(up) or {}).get("outputs", {}) for up in UPSTREAM[stage]}
        return {"stage": stage, "version": FORMAT_VERSION, "seed": cfg.seed, "config": sections,
                "upstream": upstream}

    def fingerprint(self, stage) -> str:
        return hashlib.sha256(_canonical(self._stage_inputs(stage)).encode()).hexdigest()

    def is_fresh(self, stage) -> bool:
        stamp = self._read_stamp(stage)
        if stamp is None or stamp["fingerprint"] != self.fingerprint(stage):
            return False
        return all((self.stage_dir(stage) / f).exists() and _sha(self.stage_dir(stage) / f) == h
                   for f, h in stamp["outputs"].items())

    def _finish(self, stage, files):
        outputs = {f: _sha(self.stage_dir(stage) / f) for f in sorted(files)}
        stamp = {"fingerprint": self.fingerprint(stage), "outputs": outputs}
        atomic_write_text(self._stamp_path(stage), json.dumps(stamp, indent=1, sort_keys=True) + "\n")

    def run(self, stages=None, force=False) -> list:
        """Run ``stages`` (default: all) in order; returns the stages executed."""
        stages = STAGES if stages is None else tuple(stages)
        for s in stages:
            if s not in STAGES:
                raise ConfigError(f"unknown stage {s!r}; expected one of {STAGES}")
        ran = []
        for stage in STAGES:
            if stage not in stages:
                continue
            if stage != "report":  # emit_report names whatever is missing itself
                self._require(stage)
            if not force and self.is_fresh(stage):
                log.info("stage %s: up to date", stage)
                continue
            log.info("stage %s: running", stage)
            try:
                files = getattr(self, f"_run_{stage}")()
            except StageError:
                raise
            except Exception as exc:
                raise StageError(stage, exc) from exc
            self._finish(stage, files)
            ran.append(stage)
        return ran

    # shared readers

    def panel(self):
        d = self.stage_dir("ingest")
        return read_panel(d / "panel.csv", d / "panel.json")

    def inclusion(self) -> InclusionReport:
        return InclusionReport.from_csv(self.stage_dir("select") / "inclusion.csv")

    def tuned_params(self) -> dict:
        return json.loads((self.stage_dir("tune") / "params.json").read_text())

    def tracks(self) -> dict:
        d = self.stage_dir("forecast")
        return {m: ForecastTrack.from_csv(d / f"track_{m}.csv", m) for m in self.config.model_ids}

    # stages

    def _run_ingest(self):
        data = self.config.data
        if data.synthetic is not None:
            opts = dict(data.synthetic)
            opts.setdefault("seed", self.config.seed)
            if data.train_end is not None:
                opts.setdefault("train_end", data.train_end)
            panel, _ = generate_synthetic_panel(**opts)
        else:
            if not Path(data.manifest).exists():
                raise StageError("ingest", f"manifest not found: {data.manifest}")
            series, transforms = load_manifest(data.manifest)
            if data.train_end is None or data.test_end is None:
                raise ConfigError("data.train_end and data.test_end are required with a manifest")
            panel = assemble_panel(series, data.target_id, transforms, data.train_end, data.test_end,
                                   start=data.start)
        d = self.stage_dir("ingest")
        with atomic_path(d / "panel.csv") as a, atomic_path(d / "panel.json") as b:
            write_panel(panel, a, b)
        return ["panel.csv", "panel.json"]

    def _run_select(self):
        cfg = self.config.selection
        panel = self.panel()
        n = panel.n_train
        X = np.nan_to_num(panel.design[:n], nan=0.0)
        sel = SelectionConfig(n_iterations=cfg.n_iterations, burn_in=cfg.burn_in,
                              prior_inclusion_prob=cfg.prior_inclusion_prob, g=cfg.g,
                              noise_shape=cfg.noise_shape, noise_scale=cfg.noise_scale,
                              seed=sub_seed(self.config.seed, "select"))
        report = gibbs_spike_slab(X, panel.target[:n], sel, ids=panel.column_ids,
                                  categories=panel.column_categories)
        d = self.stage_dir("select")
        with atomic_path(d / "inclusion.csv") as tmp:
            report.to_csv(tmp)
        top = top_k_variables(report, min(cfg.top_k, panel.p))
        atomic_write_text(d / "selected.json", json.dumps(top, indent=1) + "\n")
        return ["inclusion.csv", "selected.json"]

    def _run_tune(self):
        cfg = self.config
        panel = self.panel()
        plan = make_time_folds(panel.n_train, cfg.tuning.k_folds)
        d = self.stage_dir("tune")
        params, files = {}, ["params.json"]
        for m in cfg.models:
            fam = get_family(m.id)
            merged = fam.params(m.params)
            space_spec = m.space if m.space is not None else DEFAULT_SPACES.get(m.id)
            if cfg.tuning.enabled and m.tune and fam.tunable and space_spec:
                space = SearchSpace.from_dict(space_spec)
                fixed = {k: v for k, v in m.params.items() if k not in space.names}
                result = bayes_optimize(fam, space, panel, plan, budget=cfg.tuning.budget,
                                        seed=sub_seed(cfg.seed, "tune", m.id), fixed=fixed,
                                        n_initial=cfg.tuning.n_initial)
                merged.update(result.best_params)
                name = f"trace_{m.id}.csv"
                with atomic_path(d / name) as tmp:
                    result.to_csv(tmp)
                files.append(name)
            params[m.id] = merged
        atomic_write_text(d / "params.json", json.dumps(params, indent=1, sort_keys=True) + "\n")
        return files

    def _run_forecast(self):
        cfg = self.config
        panel = self.panel()
        params = self.tuned_params()
        selected = json.loads((self.stage_dir("select") / "selected.json").read_text())
        ev = cfg.evaluation
        d = self.stage_dir("forecast")

        def one(model_id):
            p = dict(params[model_id])
            if model_id == "dfm_best" and not p.get("columns"):
                p["columns"] = selected
            return expanding_window_forecast(model_id, p, panel, test_start=ev.test_start,
                                             seed=sub_seed(cfg.seed, "forecast", model_id),
                                             refit_each_month=ev.refit_each_month, warm_start=ev.warm_start)

        with ThreadPoolExecutor(max_workers=min(default_threads(), len(cfg.models))) as pool:
            tracks = list(pool.map(one, cfg.model_ids))
        files, diagnostics = ["diagnostics.json"], {}
        for track in tracks:
            name = f"track_{track.model_id}.csv"
            with atomic_path(d / name) as tmp:
                track.to_csv(tmp)
            files.append(name)
            diagnostics[track.model_id] = track.diagnostics
        atomic_write_text(d / "diagnostics.json", json.dumps(diagnostics, indent=1, sort_keys=True) + "\n")
        return files

    def _run_evaluate(self):
        ev = self.config.evaluation
        tracks = self.tracks()
        dfme = ev.dfme if ev.dfme in tracks else None
        report = evaluate_tracks(tracks, baseline_id=ev.baseline, ml_ids=ML_IDS, dfme_id=dfme,
                                 small_sample_adjust=ev.small_sample_adjust, intercept=ev.intercept)
        d = self.stage_dir("evaluate")
        atomic_write_text(d / "eval_report.json", report.to_json() + "\n")
        with atomic_path(d / "eval_report.csv") as tmp:
            report.to_csv(tmp)
        return ["eval_report.json", "eval_report.csv"]

    def _run_report(self):
        return emit_report(self.out)


def _write_rows(path, header, rows):
    with atomic_path(path) as tmp, tmp.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(x) -> str:
    return repr(float(x))


def emit_report(out_dir) -> list:
    """Write table3.csv, table4.csv, inclusion.csv and plotdata_<model>.csv
    into ``<out_dir>/report`` from the select, forecast and evaluate artifacts."""
    out = Path(out_dir)
    d = out / "report"
    files = []
    inclusion = out / "select" / "inclusion.csv"
    if not inclusion.exists():
        raise StageError("report", "inclusion probabilities absent; run the 'select' stage")
    with atomic_path(d / "inclusion.csv") as tmp:
        tmp.write_bytes(inclusion.read_bytes())
    files.append("inclusion.csv")

    report_path = out / "evaluate" / "eval_report.json"
    if not report_path.exists():
        raise StageError("report", "cannot write table3.csv: evaluation artifacts absent; run the 'evaluate' stage")
    report = EvalReport.from_json(report_path.read_text())
    rows = [(r["model"], _num(r["rmse"]), _num(r["relative_rmse"]), _num(r["dm_pvalue"])) for r in report.rows]
    # models that never produced a forecast keep their row, with NaN entries
    rows += [(m, "nan", "nan", "nan") for m in report.failed_models]
    _write_rows(d / "table3.csv", ["model", "rmse", "relative_rmse", "dm_pvalue"], rows)
    files.append("table3.csv")
    rows = [(r["model"], _num(r["beta2"]), _num(r["aic"]), _num(r["p_value"]), _num(r["dm_pvalue"]))
            for r in report.consistency]
    _write_rows(d / "table4.csv", ["model", "beta2", "aic", "p_value", "dm_pvalue"], rows)
    files.append("table4.csv")

    by_model = {r["model"]: r for r in report.rows}
    if "combination" in by_model:
        individual = [by_model[m]["rmse"] for m in ML_IDS if m in by_model]
        if by_model["combination"]["rmse"] > max(individual) + 1e-12:
            raise StageError("report", "combination RMSE exceeds the largest individual ML RMSE")

    forecast_dir = out / "forecast"
    for path in sorted(forecast_dir.glob("track_*.csv")):
        model_id = path.stem[len("track_"):]
        track = ForecastTrack.from_csv(path, model_id)
        rows = [(str(m), _num(a), _num(p)) for m, a, p in zip(track.months, track.actuals, track.predictions)]
        name = f"plotdata_{model_id}.csv"
        _write_rows(d / name, ["month", "actual", "prediction"], rows)
        files.append(name)
    if "combination" in by_model:
        tracks = [ForecastTrack.from_csv(forecast_dir / f"track_{m}.csv", m) for m in ML_IDS
                  if (forecast_dir / f"track_{m}.csv").exists()]
        keep = np.logical_and.reduce([np.isfinite(t.predictions) for t in tracks])
        preds = np.mean([t.predictions[keep] for t in tracks], axis=0)
        months, actual = tracks[0].months[keep], tracks[0].actuals[keep]
        if abs(rmse(actual - preds) - by_model["combination"]["rmse"]) > 1e-9:
            raise StageError("report", "combination track disagrees with the evaluation report")
        rows = [(str(m), _num(a), _num(p)) for m, a, p in zip(months, actual, preds)]
        _write_rows(d / "plotdata_combination.csv", ["month", "actual", "prediction"], rows)
        files.append("plotdata_combination.csv")
    return files
