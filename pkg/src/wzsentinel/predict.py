"""Multi-modal trajectory predictors.

Every predictor maps an :class:`~wzsentinel.trajdata.ObservationWindow`
to a :class:`PredictionSet` holding K future trajectories of F points per
vehicle (positions shaped [N, K, F, 2]) and a probability per mode.  A
learned model can replace the reference predictors here as long as it
returns the same structure.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .hdmap import InfeasibleStrategy, LaneletMap, closest_point
from .trajdata import ObservationWindow, TrackPoint, format_float

DEFAULT_DIMS = {"car": (4.5, 1.8), "truck": (12.0, 2.5)}
MANEUVERS = ("keep", "keep_decel", "keep_accel", "merge_left", "merge_right", "ctrv")
PREDICTION_COLUMNS = ("track_id", "mode", "step", "x", "y", "prob")

_PRED_NAME = re.compile(r"^prediction_case_(\d+)_frame_(\d+)\.csv$")


class EmptyHistory(ValueError):
    pass


class HorizonTooShort(ValueError):
    pass


class PredictionShapeError(ValueError):
    pass


@dataclass(frozen=True)
class PredictorConfig:
    """Predictor settings.

    ``decel``/``accel`` are the comfortable longitudinal rates (m/s^2) of
    the slowing and speeding keep-lane modes, ``merge_duration`` sets the
    lateral blend length (speed x duration, at least ``min_merge_length``).
    The remaining fields weight the maneuver cost.
    """

    K: int = 6
    F: int = 30
    dt: float = 0.1
    decel: float = 2.0
    accel: float = 1.0
    merge_duration: float = 3.0
    min_merge_length: float = 20.0
    temperature: float = 1.0
    closure_weight: float = 100.0
    ctrv_cost: float = 1.5
    max_yaw_rate: float = 1.0

    def __post_init__(self):
        if self.K < 1 or self.F < 1 or not self.dt > 0:
            raise ValueError(f"need K >= 1, F >= 1, dt > 0; got K={self.K}, F={self.F}, dt={self.dt}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


def headings_from_positions(traj: np.ndarray, origin: np.ndarray | None = None, fallback=0.0) -> np.ndarray:
    """Direction-of-travel heading at each point of ``traj`` (..., F, 2).

    Step t uses the displacement from point t-1 (``origin`` for t = 0, or
    the forward difference if no origin is given).  Where the vehicle does
    not move the previous heading is carried forward.
    """
    traj = np.asarray(traj, dtype=float)
    F = traj.shape[-2]
    lead = traj.shape[:-2]
    out = np.empty(lead + (F,))
    prev = np.broadcast_to(np.asarray(fallback, dtype=float), lead).copy()
    for t in range(F):
        if t > 0:
            d = traj[..., t, :] - traj[..., t - 1, :]
        elif origin is not None:
            d = traj[..., 0, :] - np.asarray(origin, dtype=float)
        elif F > 1:
            d = traj[..., 1, :] - traj[..., 0, :]
        else:
            d = np.zeros(lead + (2,))
        moving = np.hypot(d[..., 0], d[..., 1]) > 1e-6
        h = np.where(moving, np.arctan2(d[..., 1], d[..., 0]), prev)
        out[..., t] = h
        prev = h
    return out


def propose_anchor(modes: np.ndarray) -> tuple[np.ndarray, float]:
    """Anchor of a K-mode prediction: mode 0 at the middle future step F // 2.

    The heading is the direction of travel into that step.
    """
    modes = np.asarray(modes, dtype=float)
    F = modes.shape[-2]
    if F < 2:
        raise HorizonTooShort(f"anchor needs F >= 2, got {F}")
    i = F // 2
    traj = modes[0]
    heading = float(headings_from_positions(traj[: i + 1][None], None)[0, -1])
    return traj[i].copy(), heading


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """K-mode futures for the N vehicles of one observation window.

    ``positions`` is [N, K, F, 2], ``mode_probs`` [N, K] with rows summing
    to one, ``headings`` [N, K, F].  ``frame_id`` is the last observed
    frame; horizon step k (1-based) refers to frame ``frame_id + k``.
    """

    track_ids: tuple[int, ...]
    positions: np.ndarray
    mode_probs: np.ndarray
    headings: np.ndarray | None = None
    lengths: np.ndarray | None = None
    widths: np.ndarray | None = None
    origins: np.ndarray | None = None
    frame_id: int = 0
    case_id: int = 0
    dt: float = 0.1
    maneuvers: tuple[tuple[str, ...], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        ids = tuple(int(t) for t in self.track_ids)
        pos = np.asarray(self.positions, dtype=float)
        probs = np.asarray(self.mode_probs, dtype=float)
        if pos.ndim != 4 or pos.shape[-1] != 2:
            raise PredictionShapeError(f"positions must be [N, K, F, 2], got {pos.shape}")
        N, K, F, _ = pos.shape
        if len(ids) != N or len(set(ids)) != N:
            raise PredictionShapeError(f"{len(ids)} unique track ids required for N={N}")
        if K < 1 or F < 1:
            raise PredictionShapeError("need K >= 1 and F >= 1")
        if probs.shape != (N, K):
            raise PredictionShapeError(f"mode_probs must be [N, K]={N, K}, got {probs.shape}")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
            raise PredictionShapeError("mode probabilities must be non-negative and sum to 1")
        origins = None if self.origins is None else np.asarray(self.origins, dtype=float).reshape(N, 2)
        if self.headings is None:
            fallback = 0.0
            head = headings_from_positions(
                pos, None if origins is None else origins[:, None, :], fallback
            )
        else:
            head = np.asarray(self.headings, dtype=float)
            if head.shape != (N, K, F):
                raise PredictionShapeError(f"headings must be [N, K, F], got {head.shape}")
        lengths = np.full(N, DEFAULT_DIMS["car"][0]) if self.lengths is None else np.asarray(self.lengths, float)
        widths = np.full(N, DEFAULT_DIMS["car"][1]) if self.widths is None else np.asarray(self.widths, float)
        if lengths.shape != (N,) or widths.shape != (N,):
            raise PredictionShapeError("lengths and widths must have one entry per vehicle")
        object.__setattr__(self, "track_ids", ids)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "mode_probs", probs)
        object.__setattr__(self, "headings", head)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "origins", origins)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.positions.shape

    @property
    def K(self) -> int:
        return self.positions.shape[1]

    @property
    def F(self) -> int:
        return self.positions.shape[2]

    def index(self, track_id: int) -> int:
        return self.track_ids.index(track_id)

    def modes(self, track_id: int) -> np.ndarray:
        return self.positions[self.index(track_id)]

    def anchor(self, track_id: int) -> tuple[np.ndarray, float]:
        return propose_anchor(self.modes(track_id))


# --- kinematic helpers --------------------------------------------------------


def ctrv_rollout(x0, y0, theta0, speed, omega, times) -> np.ndarray:
    """Closed-form constant turn rate and velocity positions at ``times``.

    Written with sin(z)/z so omega -> 0 is continuous (exactly straight at 0).
    """
    t = np.asarray(times, dtype=float)
    half = 0.5 * omega * t
    sinc = np.sinc(half / np.pi)  # numpy sinc is sin(pi x)/(pi x)
    chord = speed * t * sinc
    mid = theta0 + half
    return np.column_stack([x0 + chord * np.cos(mid), y0 + chord * np.sin(mid)])


def estimate_yaw_rate(points, dt: float = 0.1) -> float:
    """Least-squares slope of the unwrapped heading over the history."""
    if len(points) < 2:
        return 0.0
    psi = np.unwrap([p.psi_rad for p in points])
    t = np.arange(len(points)) * dt
    tc = t - t.mean()
    return float((tc * (psi - psi.mean())).sum() / (tc**2).sum())


def estimate_acceleration(points, dt: float = 0.1) -> float:
    """Least-squares slope of speed over the history."""
    if len(points) < 2:
        return 0.0
    v = np.array([p.speed for p in points])
    t = np.arange(len(points)) * dt
    tc = t - t.mean()
    return float((tc * (v - v.mean())).sum() / (tc**2).sum())


def softmax(costs, temperature: float = 1.0) -> np.ndarray:
    z = -np.asarray(costs, dtype=float) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _travel_heading(p: TrackPoint) -> float:
    return math.atan2(p.vy, p.vx) if p.speed > 1e-6 else p.psi_rad


def _dims(points) -> tuple[np.ndarray, np.ndarray]:
    return np.array([p.length for p in points]), np.array([p.width for p in points])


def _require_history(window: ObservationWindow) -> None:
    for tid, hist in window.history.items():
        if len(hist) == 0:
            raise EmptyHistory(f"vehicle {tid} has no history")


def _cv_modes(last: TrackPoint, config: PredictorConfig) -> np.ndarray:
    t = np.arange(1, config.F + 1) * config.dt
    traj = np.column_stack([last.x + t * last.vx, last.y + t * last.vy])
    return traj


def _assemble(window, config, trajs, probs, headings=None, maneuvers=None) -> PredictionSet:
    lasts = [window.last_state(tid) for tid in window.track_ids]
    lengths, widths = _dims(lasts)
    origins = np.array([[p.x, p.y] for p in lasts]).reshape(-1, 2)
    if headings is None:
        fallback = np.array([_travel_heading(p) for p in lasts])[:, None]
        headings = headings_from_positions(trajs, origins[:, None, :], fallback)
    return PredictionSet(
        track_ids=window.track_ids,
        positions=trajs,
        mode_probs=probs,
        headings=headings,
        lengths=lengths,
        widths=widths,
        origins=origins,
        frame_id=window.issue_frame,
        case_id=window.case_id,
        dt=config.dt,
        maneuvers=maneuvers,
    )


def predict_cv(window: ObservationWindow, config: PredictorConfig = PredictorConfig()) -> PredictionSet:
    """Constant-velocity extrapolation of the last observed state, K identical modes."""
    _require_history(window)
    N, K, F = len(window.track_ids), config.K, config.F
    trajs = np.empty((N, K, F, 2))
    for i, tid in enumerate(window.track_ids):
        trajs[i] = _cv_modes(window.last_state(tid), config)[None]
    probs = np.full((N, K), 1.0 / K)
    return _assemble(window, config, trajs, probs)


def predict_ctrv(window: ObservationWindow, config: PredictorConfig = PredictorConfig()) -> PredictionSet:
    """Constant turn rate and velocity rollout, K identical modes.

    The turn rate is the least-squares heading slope over the history;
    below 1e-4 rad/s the constant-velocity form is used unchanged.
    """
    _require_history(window)
    N, K, F = len(window.track_ids), config.K, config.F
    trajs = np.empty((N, K, F, 2))
    t = np.arange(1, F + 1) * config.dt
    for i, tid in enumerate(window.track_ids):
        hist = window.history[tid]
        last = hist[-1]
        omega = float(np.clip(estimate_yaw_rate(hist, window.dt), -config.max_yaw_rate, config.max_yaw_rate))
        if abs(omega) < 1e-4:
            traj = _cv_modes(last, config)
        else:
            traj = ctrv_rollout(last.x, last.y, _travel_heading(last), last.speed, omega, t)
        trajs[i] = traj[None]
    probs = np.full((N, K), 1.0 / K)
    return _assemble(window, config, trajs, probs)


# --- map-aware maneuver predictor ------------------------------------------------


def _profile(kind: str, v: float, t: np.ndarray, config: PredictorConfig, v_limit: float):
    """Distance travelled at ``t`` and speed at the horizon end for a longitudinal profile."""
    if kind == "decel":
        b = config.decel
        t_stop = v / b if b > 0 else math.inf
        tt = np.minimum(t, t_stop)
        return v * tt - 0.5 * b * tt**2, max(v - b * t[-1], 0.0)
    if kind == "accel" and v < v_limit:
        a = config.accel
        t_cap = (v_limit - v) / a
        tt = np.minimum(t, t_cap)
        dist = v * tt + 0.5 * a * tt**2 + v_limit * np.maximum(t - t_cap, 0.0)
        return dist, min(v + a * t[-1], v_limit)
    return v * t, v


def _along_path(path: np.ndarray, dist: np.ndarray) -> np.ndarray:
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(path, axis=0).T))])
    return np.column_stack([np.interp(dist, cum, path[:, 0]), np.interp(dist, cum, path[:, 1])])


def maneuver_hypotheses(window: ObservationWindow, track_id: int, lmap: LaneletMap, config: PredictorConfig):
    """All feasible maneuvers for one vehicle as ``(name, trajectory, cost)`` tuples."""
    hist = window.history[track_id]
    if not hist:
        raise EmptyHistory(f"vehicle {track_id} has no history")
    last = hist[-1]
    proj = lmap.project((last.x, last.y), last.psi_rad)
    lane = lmap[proj.lanelet_id]
    v = last.speed
    v_limit = lane.speed_limit
    F, dt = config.F, config.dt
    t = np.arange(1, F + 1) * dt
    horizon = F * dt

    lane_dir = np.array([math.cos(proj.heading_of_lane), math.sin(proj.heading_of_lane)])
    normal = np.array([-lane_dir[1], lane_dir[0]])
    v_lat = float(np.dot([last.vx, last.vy], normal))
    lane_width = 2.0 * lane.half_width_at(proj.s)
    drift = proj.lateral_offset + v_lat * config.merge_duration
    v_ref = max(v + estimate_acceleration(hist, window.dt) * horizon, 0.0)
    merge_length = max(v * config.merge_duration, config.min_merge_length)

    to_taper = lmap.distance_to_taper(proj.lanelet_id, proj.s)
    pressure = 0.0 if to_taper is None else config.closure_weight / (to_taper + 10.0)

    def speed_cost(v_end):
        scale = max(v_limit, 1.0)
        return abs(v_end - v_ref) / scale + max(v_end - v_limit, 0.0) / scale

    centre = lane.point_at(proj.s)[0]
    hyps = []
    for name, kind in (("keep", "const"), ("keep_decel", "decel"), ("keep_accel", "accel")):
        dist, v_end = _profile(kind, v, t, config, v_limit)
        path = lmap.sample_path(proj, "keep", float(dist[-1]) + 5.0, merge_length)
        cost = abs(drift) / lane_width + speed_cost(v_end) + pressure
        hyps.append((name, _along_path(path, dist), cost))

    for name in ("merge_left", "merge_right"):
        try:
            path = lmap.sample_path(proj, name, v * horizon + 5.0, merge_length)
        except InfeasibleStrategy:
            continue
        target = lmap[lane.adjacent_left if name == "merge_left" else lane.adjacent_right]
        _, target_offset, *_ = closest_point(target.centerline, target.center_s, centre)
        target_offset = -target_offset  # offset of the target centre seen from this lane
        cost = abs(target_offset - drift) / lane_width + speed_cost(v)
        hyps.append((name, _along_path(path, v * t), cost))

    omega = float(np.clip(estimate_yaw_rate(hist, window.dt), -config.max_yaw_rate, config.max_yaw_rate))
    hyps.append(("ctrv", ctrv_rollout(last.x, last.y, _travel_heading(last), v, omega, t), config.ctrv_cost))
    return hyps


def predict_maneuver(
    window: ObservationWindow, lmap: LaneletMap, config: PredictorConfig = PredictorConfig()
) -> PredictionSet:
    """Map-aware maneuver predictor.

    Builds keep-lane (constant, slowing, speeding), merge-left,
    merge-right and CTRV hypotheses per vehicle, drops infeasible merges,
    and weights the rest by a softmax over negative maneuver cost.  Modes
    are ordered by probability, so mode 0 is the most likely maneuver.
    When fewer than K maneuvers are feasible the most likely one is
    repeated with probability zero; when more, the K most likely are kept
    and renormalised.
    """
    _require_history(window)
    N, K, F = len(window.track_ids), config.K, config.F
    trajs = np.empty((N, K, F, 2))
    probs = np.zeros((N, K))
    names = []
    for i, tid in enumerate(window.track_ids):
        hyps = maneuver_hypotheses(window, tid, lmap, config)
        p = softmax([h[2] for h in hyps], config.temperature)
        order = sorted(range(len(hyps)), key=lambda j: (-p[j], j))[:K]
        kept = p[order] / p[order].sum()
        row = []
        for k in range(K):
            j = order[k] if k < len(order) else order[0]
            trajs[i, k] = hyps[j][1]
            probs[i, k] = kept[k] if k < len(order) else 0.0
            row.append(hyps[j][0])
        names.append(tuple(row))
    return _assemble(window, config, trajs, probs, maneuvers=tuple(names))


Predictor = Callable[..., PredictionSet]

PREDICTORS: Mapping[str, Predictor] = {
    "cv": predict_cv,
    "ctrv": predict_ctrv,
    "maneuver": predict_maneuver,
}


def run_predictor(name: str, window: ObservationWindow, config: PredictorConfig, lmap: LaneletMap | None = None):
    if name not in PREDICTORS:
        raise ValueError(f"unknown predictor {name!r}; choose from {sorted(PREDICTORS)}")
    if name == "maneuver":
        if lmap is None:
            raise ValueError("the maneuver predictor needs a map")
        return predict_maneuver(window, lmap, config)
    return PREDICTORS[name](window, config)


# --- CSV dump -------------------------------------------------------------------


def prediction_filename(case_id: int, frame_id: int) -> str:
    return f"prediction_case_{case_id}_frame_{frame_id}.csv"


def parse_prediction_filename(path) -> tuple[int, int]:
    m = _PRED_NAME.match(Path(path).name)
    if m is None:
        raise ValueError(f"{Path(path).name!r} does not match prediction_case_<id>_frame_<f>.csv")
    return int(m.group(1)), int(m.group(2))


def write_predictions_csv(pset: PredictionSet, path) -> Path:
    """One row per (vehicle, mode, step); the mode probability repeats on each row."""
    path = Path(path)
    if path.is_dir():
        path = path / prediction_filename(pset.case_id, pset.frame_id)
    lines = [",".join(PREDICTION_COLUMNS)]
    for i, tid in enumerate(pset.track_ids):
        for k in range(pset.K):
            prob = format_float(pset.mode_probs[i, k], 6)
            for step in range(pset.F):
                x, y = pset.positions[i, k, step]
                lines.append(f"{tid},{k},{step + 1},{format_float(x, 4)},{format_float(y, 4)},{prob}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_predictions_csv(path, dims: Mapping[int, tuple[float, float]] | None = None) -> PredictionSet:
    """Load a prediction dump.

    Headings are rebuilt from the positions.  Probabilities are
    renormalised per vehicle to undo the 6-decimal rounding.  ``dims`` maps
    track ids to (length, width); unknown vehicles get car dimensions.
    """
    path = Path(path)
    case_id, frame_id = parse_prediction_filename(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or tuple(h.strip() for h in lines[0].split(",")) != PREDICTION_COLUMNS:
        raise ValueError(f"{path}: header must be {','.join(PREDICTION_COLUMNS)}")
    rows: dict[int, dict[int, dict[int, tuple[float, float, float]]]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        try:
            tid, k, step = int(cells[0]), int(cells[1]), int(cells[2])
            x, y, prob = float(cells[3]), float(cells[4]), float(cells[5])
        except (ValueError, IndexError):
            raise ValueError(f"{path}, row {lineno}: malformed prediction row") from None
        rows.setdefault(tid, {}).setdefault(k, {})[step] = (x, y, prob)
    if not rows:
        raise ValueError(f"{path}: no prediction rows")
    tids = sorted(rows)
    K = len(rows[tids[0]])
    F = len(next(iter(rows[tids[0]].values())))
    pos = np.empty((len(tids), K, F, 2))
    probs = np.empty((len(tids), K))
    for i, tid in enumerate(tids):
        if sorted(rows[tid]) != list(range(K)):
            raise ValueError(f"{path}: vehicle {tid} has modes {sorted(rows[tid])}, expected 0..{K - 1}")
        for k in range(K):
            steps = rows[tid][k]
            if sorted(steps) != list(range(1, F + 1)):
                raise ValueError(f"{path}: vehicle {tid} mode {k} steps are not 1..{F}")
            for step, (x, y, prob) in steps.items():
                pos[i, k, step - 1] = (x, y)
            probs[i, k] = steps[1][2]
        total = probs[i].sum()
        probs[i] = probs[i] / total if total > 0 else np.full(K, 1.0 / K)
    lengths = widths = None
    if dims is not None:
        lengths = np.array([dims.get(t, DEFAULT_DIMS["car"])[0] for t in tids])
        widths = np.array([dims.get(t, DEFAULT_DIMS["car"])[1] for t in tids])
    return PredictionSet(
        track_ids=tuple(tids),
        positions=pos,
        mode_probs=probs,
        lengths=lengths,
        widths=widths,
        frame_id=frame_id,
        case_id=case_id,
    )
