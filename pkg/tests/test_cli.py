import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import make_case, straight_track
from wzsentinel import __version__
from wzsentinel.cli import main
from wzsentinel.hdmap import default_map_path
from wzsentinel.sim import default_config_path
from wzsentinel.trajdata import write_case_csv

MAP = str(default_map_path())
CFG = str(default_config_path())


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    assert main(["simulate", "--config", CFG, "--map", MAP, "--out", str(root / "cases"), "--cases", "2"]) == 0
    assert main(["predict", "--cases", str(root / "cases"), "--map", MAP, "--predictor", "maneuver", "--out", str(root / "preds")]) == 0
    return root


def test_version():
    out = subprocess.run([sys.executable, "-m", "wzsentinel.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == f"wzsentinel {__version__}"


def test_simulate_outputs(pipeline):
    files = sorted(p.name for p in (pipeline / "cases").iterdir())
    assert "manifest.json" in files and "run_manifest.jsonl" in files
    assert len([f for f in files if f.startswith("trajectory_data_case_")]) == 2
    entry = json.loads((pipeline / "cases" / "run_manifest.jsonl").read_text().splitlines()[0])
    assert entry["subcommand"] == "simulate" and entry["version"] == __version__
    assert {"config", "inputs", "outputs", "duration_s"} <= set(entry)


def test_simulate_usage_and_io_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--config", CFG, "--out", str(tmp_path)])
    assert info.value.code == 1
    assert "usage" in capsys.readouterr().err
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--config", CFG, "--map", MAP, "--out", str(blocker / "sub"), "--cases", "1"]) == 2
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("warp_factor=9\n")
    assert main(["simulate", "--config", str(bad_cfg), "--map", MAP, "--out", str(tmp_path / "o")]) == 1


def test_predict_cv_rows(tmp_path):
    cases = tmp_path / "cases"
    cases.mkdir()
    write_case_csv(make_case(1, [straight_track(1, 0, 5.25, 20.0), straight_track(2, 30, 5.25, 20.0)]), cases)
    assert main(["predict", "--cases", str(cases), "--predictor", "cv", "--modes", "3", "--horizon", "30", "--history", "10", "--out", str(tmp_path / "p")]) == 0
    (pred,) = sorted((tmp_path / "p").glob("prediction_*.csv"))
    rows = list(csv.DictReader(pred.open()))
    for tid in ("1", "2"):
        assert sum(1 for r in rows if r["track_id"] == tid) == 3 * 30
    assert main(["evaluate", "--preds", str(tmp_path / "p"), "--gt", str(cases), "--out", str(tmp_path / "m.csv")]) == 0
    metrics = list(csv.DictReader((tmp_path / "m.csv").open()))
    assert metrics[-1]["case_id"] == "ALL"
    assert float(metrics[0]["ade"]) == pytest.approx(0.0, abs=1e-4)


def test_predict_errors(tmp_path, pipeline):
    assert main(["predict", "--cases", str(pipeline / "cases"), "--modes", "0", "--out", str(tmp_path / "p")]) == 1
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "trajectory_data_case_1.csv").write_text(
        "track_id,timestamp_ms,frame_id,agent_type,x,y,vx,vy,psi_rad,length,width\n1,100,1,car,0,0,0,0,0,4,2\n1,200,2,car,0,oops,0,0,0,4,2\n"
    )
    assert main(["predict", "--cases", str(bad), "--predictor", "cv", "--out", str(tmp_path / "p2")]) == 3


def test_evaluate_aggregate_row(pipeline, tmp_path):
    out = tmp_path / "metrics.csv"
    assert main(["evaluate", "--preds", str(pipeline / "preds"), "--gt", str(pipeline / "cases"), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["case_id"] for r in rows] == ["1", "2", "ALL"]
    for col in ("ade", "fde", "min_joint_ade", "min_joint_fde"):
        assert float(rows[-1][col]) == pytest.approx(np.mean([float(r[col]) for r in rows[:-1]]), abs=2e-6)


def test_evaluate_vehicle_mismatch(pipeline, tmp_path):
    preds = tmp_path / "preds"
    preds.mkdir()
    src = sorted((pipeline / "preds").glob("prediction_*.csv"))[0]
    lines = src.read_text().splitlines()
    first_id = lines[1].split(",")[0]
    (preds / src.name).write_text("\n".join([lines[0]] + [l for l in lines[1:] if l.split(",")[0] != first_id]) + "\n")
    assert main(["evaluate", "--preds", str(preds), "--gt", str(pipeline / "cases"), "--out", str(tmp_path / "m.csv")]) == 4


def test_warn_and_report(pipeline, tmp_path):
    out = tmp_path / "warn"
    assert main(["warn", "--preds", str(pipeline / "preds"), "--cases", str(pipeline / "cases"), "--out", str(out)]) == 0
    conflicts = out / "case_1" / "conflicts.csv"
    header = conflicts.read_text().splitlines()[0]
    assert header == "frame_id,horizon_step,track_i,track_j,distance_m,probability,is_conflict,is_high_risk"
    assert main(["warn", "--preds", str(pipeline / "preds"), "--prob-threshold", "1.5", "--out", str(tmp_path / "x")]) == 1
    assert main(["warn", "--preds", str(pipeline / "preds"), "--lambda", "-2", "--out", str(tmp_path / "x")]) == 1
    sparse = tmp_path / "sparse"
    assert main(["warn", "--preds", str(pipeline / "preds"), "--dist-threshold", "0.001", "--out", str(sparse)]) == 0
    assert (sparse / "case_1" / "warnings.csv").read_text().splitlines() == [header]

    rep = tmp_path / "rep"
    argv = ["report", "--conflicts", str(conflicts), "--gt", str(pipeline / "cases"), "--preds", str(pipeline / "preds"), "--out", str(rep)]
    assert main(argv) == 0
    names = sorted(p.name for p in rep.glob("*.svg"))
    assert names == ["conflict_probability.svg", "conflict_probability_critical.svg", "trajectories_case_1.svg", "trajectories_case_2.svg"]
    first = {n: (rep / n).read_bytes() for n in names}
    assert main(argv) == 0
    assert all((rep / n).read_bytes() == b for n, b in first.items())
    assert main(["report", "--conflicts", str(conflicts), "--pair", "900", "901", "--out", str(tmp_path / "r2")]) == 1


def test_idempotent_outputs(pipeline, tmp_path):
    before = {p.name: p.read_bytes() for p in (pipeline / "preds").glob("prediction_*.csv")}
    assert main(["predict", "--cases", str(pipeline / "cases"), "--map", MAP, "--out", str(pipeline / "preds")]) == 0
    after = {p.name: p.read_bytes() for p in (pipeline / "preds").glob("prediction_*.csv")}
    assert before == after
    runs = (pipeline / "preds" / "run_manifest.jsonl").read_text().splitlines()
    assert len(runs) >= 2  # append-only
