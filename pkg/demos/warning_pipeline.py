"""Simulate a few work-zone cases, predict, score conflicts and draw the figures.

Run from the repository root:

    python3 demos/warning_pipeline.py [out_dir]
"""

import sys
from pathlib import Path

from wzsentinel.conflict import generate_warnings, write_conflicts_csv, write_warnings_csv
from wzsentinel.hdmap import work_zone_map
from wzsentinel.metrics import aggregate, joint_metrics
from wzsentinel.predict import PredictorConfig, predict_cv, predict_maneuver
from wzsentinel.report import write_conflict_report, write_trajectory_overlay
from wzsentinel.sim import SimConfig, run_case
from wzsentinel.trajdata import extract_windows


def main(out_dir="demo_out", n_cases=3):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lmap = work_zone_map()
    config = PredictorConfig(K=6, F=30)
    reports = {"cv": [], "maneuver": []}
    records, warnings = [], []
    for cid in range(1, n_cases + 1):
        case = run_case(SimConfig(), lmap, cid)
        for window in extract_windows(case, 10, 30):
            cv = predict_cv(window, config)
            man = predict_maneuver(window, lmap, config)
            reports["cv"].append(joint_metrics(cv, window.truth()))
            reports["maneuver"].append(joint_metrics(man, window.truth()))
            recs, warns = generate_warnings(man)
            records += recs
            warnings += warns
            write_trajectory_overlay(case, out, man)
        print(f"case {cid}: {len(case.tracks)} vehicles")

    for name, reps in reports.items():
        r = aggregate(reps)
        print(f"{name:9s} ADE {r.ade:.3f}  FDE {r.fde:.3f}  minJointADE {r.min_joint_ade:.3f}  minJointFDE {r.min_joint_fde:.3f}")

    write_conflicts_csv(records, out / "conflicts.csv")
    write_warnings_csv(warnings, out / "warnings.csv")
    write_conflict_report(records, out)
    print(f"{len(records)} conflict records, {len(warnings)} warnings -> {out}/")


if __name__ == "__main__":
    main(*sys.argv[1:2])
