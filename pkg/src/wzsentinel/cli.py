"""Command-line pipeline: simulate -> predict -> evaluate -> warn -> report.

Exit codes: 0 ok, 1 usage or configuration error, 2 I/O error, 3 malformed
input file, 4 predictions inconsistent with ground truth.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .conflict import (
    DEFAULT_DIST_THRESHOLD,
    DEFAULT_PROB_THRESHOLD,
    MODE_POLICIES,
    ConflictParams,
    calibrated_lambda,
    generate_warnings,
    read_conflicts_csv,
    write_conflicts_csv,
    write_warnings_csv,
)
from .hdmap import MapError, default_map_path, load_map
from .metrics import LengthMismatch, MetricReport, ModeCountMismatch, VehicleMismatch, aggregate, joint_metrics
from .predict import PREDICTORS, PredictorConfig, parse_prediction_filename, read_predictions_csv, run_predictor, write_predictions_csv
from .report import UnknownPair, write_conflict_report, write_trajectory_overlay
from .sim import ConfigError, DensityUnreachable, load_config, run_dataset
from .trajdata import CaseFormatError, WindowTooLong, case_id_from_path, extract_windows, parse_case_csv

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_PARSE, EXIT_CONSISTENCY = 0, 1, 2, 3, 4
RUN_MANIFEST = "run_manifest.jsonl"
METRIC_COLUMNS = ("case_id", "n_windows", "n_agents", "ade", "fde", "min_joint_ade", "min_joint_fde")


class UsageError(Exception):
    pass


class InputError(Exception):
    """Malformed input file (exit 3)."""


class ConsistencyError(Exception):
    """Predictions and ground truth disagree (exit 4)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _append_manifest(out_dir: Path, subcommand: str, args, inputs, outputs, started: float) -> None:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    entry = {
        "subcommand": subcommand,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "duration_s": round(time.monotonic() - started, 6),
    }
    with open(out_dir / RUN_MANIFEST, "a", newline="\n") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _case_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    files = sorted(directory.glob("trajectory_data_case_*.csv"), key=case_id_from_path)
    if not files:
        raise FileNotFoundError(f"no trajectory_data_case_*.csv files in {directory}")
    return files


def _prediction_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    files = sorted(directory.glob("prediction_case_*_frame_*.csv"), key=parse_prediction_filename)
    if not files:
        raise FileNotFoundError(f"no prediction_case_*_frame_*.csv files in {directory}")
    return files


def _load_case(path):
    try:
        return parse_case_csv(path)
    except CaseFormatError as exc:
        raise InputError(str(exc)) from None


def _load_predictions(path, dims=None):
    try:
        return read_predictions_csv(path, dims)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _load_map(path):
    try:
        return load_map(path if path is not None else default_map_path())
    except MapError as exc:
        raise UsageError(f"map: {exc}") from None


# --- subcommands ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    started = time.monotonic()
    try:
        config = load_config(args.config)
        overrides = {}
        if args.cases is not None:
            overrides["n_cases"] = args.cases
        if args.seed is not None:
            overrides["seed"] = args.seed
        config = config.with_overrides(**overrides)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    lmap = _load_map(args.map)
    out = Path(args.out)
    try:
        manifest = run_dataset(config, lmap, out, workers=args.workers)
    except DensityUnreachable as exc:
        raise UsageError(str(exc)) from None
    outputs = [out / c["file"] for c in manifest["cases"]] + [out / "manifest.json"]
    _append_manifest(out, "simulate", args, [args.config, args.map], outputs, started)
    print(f"wrote {len(manifest['cases'])} cases to {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    started = time.monotonic()
    if args.modes < 1:
        raise UsageError("--modes must be >= 1")
    if args.horizon < 1 or args.history < 1:
        raise UsageError("--horizon and --history must be >= 1")
    try:
        config = PredictorConfig(K=args.modes, F=args.horizon)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    lmap = _load_map(args.map) if (args.map is not None or args.predictor == "maneuver") else None
    files = _case_files(args.cases)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for path in files:
        case = _load_case(path)
        try:
            windows = extract_windows(case, args.history, args.horizon)
        except WindowTooLong as exc:
            raise UsageError(f"{path}: {exc}") from None
        for window in windows:
            pset = run_predictor(args.predictor, window, config, lmap)
            outputs.append(write_predictions_csv(pset, out))
    _append_manifest(out, "predict", args, files, outputs, started)
    print(f"wrote {len(outputs)} prediction files to {out}")
    return EXIT_OK


def _truth_for(case, pset, history: int) -> dict[int, np.ndarray]:
    first, last = pset.frame_id - history + 1, pset.frame_id + pset.F
    expected = {tid for tid, tr in case.tracks.items() if tr.covers(first, last)}
    got = set(pset.track_ids)
    if got != expected:
        raise ConsistencyError(
            f"case {case.case_id} frame {pset.frame_id}: predicted vehicles {sorted(got)} "
            f"but ground truth has {sorted(expected)}"
        )
    return {
        tid: np.array([[p.x, p.y] for p in case.tracks[tid].slice(pset.frame_id + 1, last)])
        for tid in pset.track_ids
    }


def _metric_row(label, r: MetricReport) -> str:
    vals = [r.ade, r.fde, r.min_joint_ade, r.min_joint_fde]
    return ",".join([str(label), str(r.n_windows), str(r.n_agents)] + [f"{v:.6f}" for v in vals])


def evaluate_directories(preds_dir, gt_dir, history: int = 10, modes: int | None = None):
    """Per-case reports (keyed by case id) and their unweighted mean over cases."""
    gt = {case_id_from_path(p): p for p in _case_files(gt_dir)}
    per_case: dict[int, list[MetricReport]] = {}
    cases = {}
    K = modes
    for path in _prediction_files(preds_dir):
        case_id, _ = parse_prediction_filename(path)
        if case_id not in gt:
            raise ConsistencyError(f"{path.name}: no ground-truth case {case_id} in {gt_dir}")
        if case_id not in cases:
            cases[case_id] = _load_case(gt[case_id])
        pset = _load_predictions(path)
        if K is None:
            K = pset.K
        try:
            report = joint_metrics(pset, _truth_for(cases[case_id], pset, history), K=K)
        except (VehicleMismatch, ModeCountMismatch, LengthMismatch) as exc:
            raise ConsistencyError(f"{path.name}: {exc}") from None
        per_case.setdefault(case_id, []).append(report)
    case_reports = {cid: aggregate(reps) for cid, reps in sorted(per_case.items())}
    overall = aggregate([replace(r, n_windows=1) for r in case_reports.values()])
    overall = replace(overall, n_windows=sum(r.n_windows for r in case_reports.values()))
    return case_reports, overall


def cmd_evaluate(args) -> int:
    started = time.monotonic()
    case_reports, overall = evaluate_directories(args.preds, args.gt, args.history, args.modes)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(METRIC_COLUMNS)]
    lines += [_metric_row(cid, r) for cid, r in case_reports.items()]
    lines.append(_metric_row("ALL", overall))
    with open(out, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    _append_manifest(out.parent, "evaluate", args, [args.preds, args.gt], [out], started)
    print(f"minJointADE {overall.min_joint_ade:.4f} m, minJointFDE {overall.min_joint_fde:.4f} m over {overall.n_windows} windows")
    return EXIT_OK


def _case_dims(cases_dir) -> dict[int, dict[int, tuple[float, float]]]:
    if cases_dir is None:
        return {}
    out = {}
    for path in _case_files(cases_dir):
        case = _load_case(path)
        out[case.case_id] = {tid: (tr.points[0].length, tr.points[0].width) for tid, tr in case.tracks.items()}
    return out


def cmd_warn(args) -> int:
    started = time.monotonic()
    if not 0.0 < args.prob_threshold < 1.0:
        raise UsageError(f"--prob-threshold must lie in (0, 1), got {args.prob_threshold}")
    if not args.dist_threshold > 0:
        raise UsageError(f"--dist-threshold must be positive, got {args.dist_threshold}")
    try:
        lam = args.lam if args.lam is not None else calibrated_lambda(args.dist_threshold, args.prob_threshold)
        params = ConflictParams(lam, args.dist_threshold, args.prob_threshold)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(str(exc)) from None
    dims = _case_dims(args.cases)
    by_case: dict[int, list] = {}
    files = _prediction_files(args.preds)
    for path in files:
        case_id, _ = parse_prediction_filename(path)
        by_case.setdefault(case_id, []).append(_load_predictions(path, dims.get(case_id)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    n_warn = 0
    for case_id, psets in sorted(by_case.items()):
        records, warnings = generate_warnings(psets, params, args.mode_policy)
        case_dir = out / f"case_{case_id}"
        case_dir.mkdir(exist_ok=True)
        write_conflicts_csv(records, case_dir / "conflicts.csv")
        write_warnings_csv(warnings, case_dir / "warnings.csv", params)
        outputs += [case_dir / "conflicts.csv", case_dir / "warnings.csv"]
        n_warn += len(warnings)
    _append_manifest(out, "warn", args, files, outputs, started)
    print(f"{n_warn} warnings across {len(by_case)} cases")
    return EXIT_OK


def cmd_report(args) -> int:
    started = time.monotonic()
    try:
        records = read_conflicts_csv(args.conflicts)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = Path(args.out)
    try:
        outputs = write_conflict_report(
            records, out, tuple(args.pair) if args.pair else None, args.dist_threshold, args.prob_threshold
        )
    except UnknownPair as exc:
        raise UsageError(str(exc)) from None
    inputs = [args.conflicts]
    if args.gt is not None:
        preds = {}
        if args.preds is not None:
            for path in _prediction_files(args.preds):
                case_id, _ = parse_prediction_filename(path)
                preds.setdefault(case_id, path)  # earliest issue frame per case
        for path in _case_files(args.gt):
            case = _load_case(path)
            pset = _load_predictions(preds[case.case_id]) if case.case_id in preds else None
            if pset is not None:
                frame = case.tracks
                origins = []
                for tid in pset.track_ids:
                    pts = [p for p in frame[tid].points if p.frame_id == pset.frame_id] if tid in frame else []
                    origins.append([pts[0].x, pts[0].y] if pts else [math.nan, math.nan])
                if not np.isnan(origins).any():
                    pset = replace(pset, origins=np.array(origins), headings=None)
            outputs.append(write_trajectory_overlay(case, out, pset))
        inputs.append(args.gt)
    _append_manifest(out, "report", args, inputs, outputs, started)
    print(f"wrote {len(outputs)} figures to {out}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wzsentinel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate trajectory cases")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--map", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--cases", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=None, help="worker processes (capped by WZ_SENTINEL_THREADS)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", help="multi-modal trajectory prediction")
    p.add_argument("--cases", required=True, type=Path)
    p.add_argument("--map", type=Path, help="lanelet map (default: bundled work-zone map)")
    p.add_argument("--predictor", choices=sorted(PREDICTORS), default="maneuver")
    p.add_argument("--modes", type=int, default=6)
    p.add_argument("--horizon", type=int, default=30)
    p.add_argument("--history", type=int, default=10)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="ADE/FDE and joint metrics")
    p.add_argument("--preds", required=True, type=Path)
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--history", type=int, default=10, help="history length the predictions were made with")
    p.add_argument("--modes", type=int, help="expected mode count")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("warn", help="conflict records and proactive warnings")
    p.add_argument("--preds", required=True, type=Path)
    p.add_argument("--lambda", dest="lam", type=float, help="decay constant (default: calibrated to the thresholds)")
    p.add_argument("--dist-threshold", type=float, default=DEFAULT_DIST_THRESHOLD)
    p.add_argument("--prob-threshold", type=float, default=DEFAULT_PROB_THRESHOLD)
    p.add_argument("--mode-policy", choices=MODE_POLICIES, default="worst_case")
    p.add_argument("--cases", type=Path, help="case directory supplying vehicle dimensions")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_warn)

    p = sub.add_parser("report", help="SVG figures")
    p.add_argument("--conflicts", required=True, type=Path)
    p.add_argument("--pair", type=int, nargs=2, metavar=("I", "J"))
    p.add_argument("--gt", type=Path, help="case directory for trajectory overlays")
    p.add_argument("--preds", type=Path, help="prediction directory for trajectory overlays")
    p.add_argument("--dist-threshold", type=float, default=DEFAULT_DIST_THRESHOLD)
    p.add_argument("--prob-threshold", type=float, default=DEFAULT_PROB_THRESHOLD)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"wzsentinel {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"wzsentinel {args.command}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConsistencyError as exc:
        print(f"wzsentinel {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except OSError as exc:
        print(f"wzsentinel {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
