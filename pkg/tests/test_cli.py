import csv
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from nowcast.cli import main
from nowcast.pipeline import STAGES, sub_seed

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "small.yaml"
REPORTS = ("table3.csv", "table4.csv", "inclusion.csv")


def run(*args):
    return main([*args, "--config", str(CONFIG)])


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("full")
    assert run("run", "--out", str(out)) == 0
    return out


def snapshot(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "_stamp.json"}


def test_full_run_artifacts(full_run):
    assert (full_run / "evaluate" / "eval_report.json").exists()
    for name in REPORTS:
        assert (full_run / "report" / name).exists()
    with (full_run / "report" / "table3.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    models = [r["model"] for r in rows]
    assert models == ["ar", "ridge", "lasso", "random_forest", "gbm", "dfm_best", "dfm_electricity",
                      "combination"]
    assert float(rows[0]["relative_rmse"]) == 1.0
    with (full_run / "report" / "table4.csv").open() as fh:
        assert [r["model"] for r in csv.DictReader(fh)] == ["ridge", "lasso", "random_forest", "gbm"]
    assert (full_run / "report" / "plotdata_combination.csv").exists()
    assert (full_run / "tune" / "trace_ridge.csv").exists()


def test_rerun_is_cached_and_identical(full_run, caplog):
    before = snapshot(full_run)
    stamps = {p: p.read_bytes() for p in full_run.rglob("_stamp.json")}
    with caplog.at_level("INFO"):
        assert run("run", "--out", str(full_run), "-v") == 0
    assert "stage forecast: up to date" in caplog.text
    assert snapshot(full_run) == before
    assert {p: p.read_bytes() for p in full_run.rglob("_stamp.json")} == stamps


def test_fresh_directory_is_byte_identical(full_run, tmp_path):
    assert run("run", "--out", str(tmp_path)) == 0
    for name in REPORTS:
        assert (tmp_path / "report" / name).read_bytes() == (full_run / "report" / name).read_bytes()


def test_deleted_intermediate_is_rebuilt(full_run, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(full_run, out)
    before = snapshot(out)
    for rel in ("forecast/track_gbm.csv", "select/inclusion.csv", "tune/params.json"):
        (out / rel).unlink()
        assert run("run", "--out", str(out)) == 0
        assert snapshot(out) == before


def test_stage_filter_refreshes_only_that_stage(full_run, tmp_path, caplog):
    out = tmp_path / "copy"
    shutil.copytree(full_run, out)
    mtimes = {p: p.stat().st_mtime_ns for p in out.rglob("*") if p.is_file()}
    with caplog.at_level("INFO"):
        assert run("run", "--stage", "tune", "--out", str(out), "-v") == 0
    assert "stage tune: running" in caplog.text
    changed = {p.relative_to(out).parts[0] for p in out.rglob("*")
               if p.is_file() and p.stat().st_mtime_ns != mtimes.get(p)}
    assert changed == {"tune"}
    # the forced tune run reproduces its outputs, so downstream stays fresh
    assert run("run", "--out", str(out)) == 0
    assert snapshot(out) == snapshot(full_run)


def test_missing_manifest(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("seed: 1\ndata:\n  manifest: nowhere.csv\nmodels:\n  ar: {}\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) != 0
    assert "manifest not found" in capsys.readouterr().err


def test_report_after_selection_only(tmp_path, capsys):
    assert run("run", "--stage", "ingest", "--out", str(tmp_path)) == 0
    assert run("run", "--stage", "select", "--out", str(tmp_path)) == 0
    assert run("report", "--out", str(tmp_path)) != 0
    err = capsys.readouterr().err
    assert "table3.csv" in err and "evaluate" in err
    assert (tmp_path / "report" / "inclusion.csv").exists()
    assert not (tmp_path / "report" / "table3.csv").exists()


def test_stage_needs_upstream(tmp_path, capsys):
    assert run("run", "--stage", "forecast", "--out", str(tmp_path)) != 0
    assert "forecast" in capsys.readouterr().err


def test_seed_override_changes_results(full_run, tmp_path):
    assert run("run", "--seed", "12", "--out", str(tmp_path)) == 0
    assert (tmp_path / "report" / "table3.csv").read_bytes() != (full_run / "report" / "table3.csv").read_bytes()


def test_usage_errors(capsys):
    assert main(["run"]) == 2
    assert main(["run", "--config", "does/not/exist.yaml"]) == 2
    with pytest.raises(SystemExit):
        main(["run", "--config", str(CONFIG), "--stage", "nope"])


def test_selftest(capsys):
    assert main(["selftest"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 5 and all(line.startswith("PASS") for line in lines)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nowcast.cli", "selftest"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.count("PASS") == 5


def test_sub_seeds_depend_only_on_names():
    assert sub_seed(5, "forecast", "ridge") == sub_seed(5, "forecast", "ridge")
    assert len({sub_seed(5, s, m) for s in STAGES for m in ("ridge", "gbm", "")}) == 3 * len(STAGES)


def test_manifest_backed_run(tmp_path):
    script = CONFIG.parents[1] / "scripts" / "export_synthetic.py"
    subprocess.run([sys.executable, str(script), str(tmp_path / "data"), "--p", "12", "--months", "72"],
                   check=True, capture_output=True)
    cfg = tmp_path / "data" / "run.yaml"
    cfg.write_text("seed: 3\n"
                   "data: {manifest: manifest.csv, train_end: 2010-07, test_end: 2013-12}\n"
                   "selection: {n_iterations: 2000, burn_in: 200, top_k: 4}\n"
                   "tuning: {enabled: false}\n"
                   "models: {ar: {}, ridge: {params: {lambda: 5.0}}, dfm_electricity: {params: {max_iter: 20}}}\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    with (tmp_path / "out" / "report" / "table3.csv").open() as fh:
        rows = {r["model"]: r for r in csv.DictReader(fh)}
    # this small panel has no electricity column, so that model fails every month
    assert rows["dfm_electricity"]["rmse"] == "nan"
    assert float(rows["ridge"]["relative_rmse"]) < 1.0
