"""Pairwise conflict scoring and proactive warnings.

For every prediction frame, horizon step and unordered vehicle pair the
footprint separation d is turned into a conflict probability
``exp(-d / lam)``.  A pair is a conflict when d < dist_threshold and
high risk when the probability exceeds prob_threshold; high-risk pairs
raise one warning per frame at their earliest horizon step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import OrientedBox, box_points_batch, min_box_distance, point_set_distance
from .predict import PredictionSet
from .trajdata import format_float

DEFAULT_DIST_THRESHOLD = 7.0
DEFAULT_PROB_THRESHOLD = 0.7
MODE_POLICIES = ("worst_case", "best_mode", "expected")
RECORD_COLUMNS = (
    "frame_id",
    "horizon_step",
    "track_i",
    "track_j",
    "distance_m",
    "probability",
    "is_conflict",
    "is_high_risk",
)


class InvalidLambda(ValueError):
    pass


def calibrated_lambda(dist_threshold: float = DEFAULT_DIST_THRESHOLD, prob_threshold: float = DEFAULT_PROB_THRESHOLD) -> float:
    """Decay constant at which ``exp(-dist_threshold / lam) == prob_threshold``.

    With this choice the distance and probability criteria flag the same
    pairs.
    """
    return dist_threshold / math.log(1.0 / prob_threshold)


DEFAULT_LAMBDA = calibrated_lambda()


def conflict_probability(d, lam: float = DEFAULT_LAMBDA):
    """``exp(-d / lam)`` for a separation ``d`` >= 0 (scalar or array)."""
    if not lam > 0:
        raise InvalidLambda(f"decay constant must be positive, got {lam}")
    if np.ndim(d) == 0:
        if d < 0:
            raise ValueError(f"distance must be non-negative, got {d}")
        return math.exp(-d / lam)
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    return np.exp(-d / lam)


@dataclass(frozen=True)
class ConflictParams:
    lam: float = DEFAULT_LAMBDA
    dist_threshold: float = DEFAULT_DIST_THRESHOLD
    prob_threshold: float = DEFAULT_PROB_THRESHOLD

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidLambda(f"decay constant must be positive, got {self.lam}")
        if not self.dist_threshold > 0:
            raise ValueError(f"dist_threshold must be positive, got {self.dist_threshold}")
        if not 0 < self.prob_threshold < 1:
            raise ValueError(f"prob_threshold must lie in (0, 1), got {self.prob_threshold}")


@dataclass(frozen=True)
class ConflictRecord:
    frame_id: int
    horizon_step: int
    track_i: int
    track_j: int
    distance_m: float
    probability: float
    is_conflict: bool
    is_high_risk: bool

    @property
    def pair(self) -> tuple[int, int]:
        return (self.track_i, self.track_j)


@dataclass(frozen=True)
class WarningRecord:
    issue_frame: int
    track_i: int
    track_j: int
    horizon_step: int
    distance_m: float
    probability: float

    @property
    def pair(self) -> tuple[int, int]:
        return (self.track_i, self.track_j)


def make_record(frame_id, step, i, j, distance, params: ConflictParams) -> ConflictRecord:
    if i > j:
        i, j = j, i
    distance = float(distance)
    prob = conflict_probability(distance, params.lam)
    return ConflictRecord(
        frame_id=int(frame_id),
        horizon_step=int(step),
        track_i=int(i),
        track_j=int(j),
        distance_m=distance,
        probability=prob,
        is_conflict=distance < params.dist_threshold,
        is_high_risk=prob > params.prob_threshold,
    )


def evaluate_pairs(
    boxes: Mapping[int, OrientedBox],
    params: ConflictParams = ConflictParams(),
    frame_id: int = 0,
    horizon_step: int = 0,
) -> list[ConflictRecord]:
    """Score every unordered pair of vehicles at one instant."""
    ids = sorted(boxes)
    return [
        make_record(frame_id, horizon_step, i, j, min_box_distance(boxes[i], boxes[j]), params)
        for i, j in combinations(ids, 2)
    ]


def _pair_distances(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """Separation for every mode combination and step.

    ``pa``, ``pb`` are [K, F, 8, 2] footprint samples; returns [K, K, F].
    """
    return point_set_distance(pa[:, None], pb[None, :])


def _reduce(dist: np.ndarray, probs_i, probs_j, policy: str, lam: float) -> np.ndarray:
    """Collapse [K, K, F] mode-combination distances to one distance per step."""
    if policy == "worst_case":
        return dist.min(axis=(0, 1))
    if policy == "best_mode":
        a = int(np.argmax(probs_i))
        b = int(np.argmax(probs_j))
        return dist[a, b]
    if policy == "expected":
        w = np.outer(probs_i, probs_j)[..., None]
        p = (w * np.exp(-dist / lam)).sum(axis=(0, 1))
        # report the separation whose probability equals the expected probability
        with np.errstate(divide="ignore"):
            return np.maximum(-lam * np.log(p), 0.0)
    raise ValueError(f"unknown mode policy {policy!r}; choose from {MODE_POLICIES}")


def conflict_records(
    pset: PredictionSet, params: ConflictParams = ConflictParams(), mode_policy: str = "worst_case"
) -> list[ConflictRecord]:
    """Conflict records for every horizon step and vehicle pair of one prediction set."""
    if mode_policy not in MODE_POLICIES:
        raise ValueError(f"unknown mode policy {mode_policy!r}; choose from {MODE_POLICIES}")
    N, K, F, _ = pset.shape
    pts = box_points_batch(
        pset.positions[..., 0],
        pset.positions[..., 1],
        pset.headings,
        pset.lengths[:, None, None],
        pset.widths[:, None, None],
    )  # [N, K, F, 8, 2]
    out = []
    for a, b in combinations(range(N), 2):
        d = _reduce(_pair_distances(pts[a], pts[b]), pset.mode_probs[a], pset.mode_probs[b], mode_policy, params.lam)
        ti, tj = pset.track_ids[a], pset.track_ids[b]
        for step in range(F):
            out.append(make_record(pset.frame_id, step + 1, ti, tj, d[step], params))
    return out


def generate_warnings(
    predictions: PredictionSet | Iterable[PredictionSet],
    params: ConflictParams = ConflictParams(),
    mode_policy: str = "worst_case",
) -> tuple[list[ConflictRecord], list[WarningRecord]]:
    """Evaluate all frames, horizon steps and pairs; issue de-duplicated warnings.

    ``mode_policy`` decides how K x K mode combinations become one
    separation: ``worst_case`` takes the minimum over all combinations,
    ``best_mode`` uses each vehicle's most probable mode, ``expected``
    averages the probability with mode weights and reports the equivalent
    separation ``-lam * ln(P)``.

    Returns records sorted by (frame, step, i, j) and at most one warning
    per (pair, frame) at its earliest high-risk step.
    """
    if isinstance(predictions, PredictionSet):
        predictions = [predictions]
    records: list[ConflictRecord] = []
    for pset in predictions:
        records.extend(conflict_records(pset, params, mode_policy))
    records.sort(key=lambda r: (r.frame_id, r.horizon_step, r.track_i, r.track_j))
    first: dict[tuple[int, int, int], ConflictRecord] = {}
    for r in records:
        if r.is_high_risk:
            first.setdefault((r.frame_id, r.track_i, r.track_j), r)
    warnings = [
        WarningRecord(r.frame_id, r.track_i, r.track_j, r.horizon_step, r.distance_m, r.probability)
        for r in first.values()
    ]
    warnings.sort(key=lambda w: (w.issue_frame, w.track_i, w.track_j))
    return records, warnings


# --- CSV export -------------------------------------------------------------------


def _record_line(frame, step, i, j, d, p, conflict, high) -> str:
    return ",".join(
        [str(frame), str(step), str(i), str(j), format_float(d, 4), format_float(p, 6), str(int(conflict)), str(int(high))]
    )


def write_conflicts_csv(records: Sequence[ConflictRecord], path) -> None:
    lines = [",".join(RECORD_COLUMNS)]
    lines += [
        _record_line(r.frame_id, r.horizon_step, r.track_i, r.track_j, r.distance_m, r.probability, r.is_conflict, r.is_high_risk)
        for r in records
    ]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_warnings_csv(warnings: Sequence[WarningRecord], path, params: ConflictParams = ConflictParams()) -> None:
    """Warnings in the conflict record layout (frame_id is the issue frame)."""
    lines = [",".join(RECORD_COLUMNS)]
    lines += [
        _record_line(
            w.issue_frame, w.horizon_step, w.track_i, w.track_j, w.distance_m, w.probability,
            w.distance_m < params.dist_threshold, True,
        )
        for w in warnings
    ]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_conflicts_csv(path) -> list[ConflictRecord]:
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or tuple(lines[0].split(",")) != RECORD_COLUMNS:
        raise ValueError(f"{path}: header must be {','.join(RECORD_COLUMNS)}")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        c = line.split(",")
        try:
            out.append(
                ConflictRecord(
                    int(c[0]), int(c[1]), int(c[2]), int(c[3]), float(c[4]), float(c[5]), c[6] == "1", c[7] == "1"
                )
            )
        except (ValueError, IndexError):
            raise ValueError(f"{path}, row {lineno}: malformed record") from None
    return out
