"""Minimal lanelet map: boundary polylines, centerlines, projection and path sampling.

Maps are stored as JSON::

    {"lanelets": [{"id": 1, "left": [[x, y], ...], "right": [[x, y], ...],
                   "successors": [2], "adjacent_left": null, "adjacent_right": 3,
                   "speed_limit": 25.0, "closed": false,
                   "taper_start_s": null, "taper_end_s": null}, ...]}

``taper_start_s``/``taper_end_s`` sit on the open lanelet that feeds a
closure and are arc lengths measured from that lanelet's start along
its successor chain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .geometry import normalize_angle

RESAMPLE_SPACING = 0.5
MAX_PROJECTION_DISTANCE = 10.0
HEADING_WEIGHT = 5.0  # metres of lateral offset per radian of heading mismatch
DEFAULT_MERGE_LENGTH = 40.0

_KEYS = (
    "id",
    "left",
    "right",
    "successors",
    "adjacent_left",
    "adjacent_right",
    "speed_limit",
    "closed",
    "taper_start_s",
    "taper_end_s",
)


class MapError(ValueError):
    pass


class SchemaError(MapError):
    pass


class AsymmetricAdjacency(MapError):
    pass


class DegenerateBoundary(MapError):
    pass


class OffMap(MapError):
    pass


class InfeasibleStrategy(MapError):
    pass


# --- polyline helpers ------------------------------------------------------


def polyline_length(points: np.ndarray) -> float:
    return float(np.hypot(*np.diff(points, axis=0).T).sum())


def cumulative_length(points: np.ndarray) -> np.ndarray:
    seg = np.hypot(*np.diff(points, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample(points: np.ndarray, n: int) -> np.ndarray:
    """``n`` points evenly spaced in arc length along ``points``."""
    s = cumulative_length(points)
    targets = np.linspace(0.0, s[-1], n)
    return np.column_stack([np.interp(targets, s, points[:, 0]), np.interp(targets, s, points[:, 1])])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def _polylines_cross(a: np.ndarray, b: np.ndarray) -> bool:
    for i in range(len(a) - 1):
        amin, amax = np.minimum(a[i], a[i + 1]), np.maximum(a[i], a[i + 1])
        for j in range(len(b) - 1):
            bmin, bmax = np.minimum(b[j], b[j + 1]), np.maximum(b[j], b[j + 1])
            if np.any(amax < bmin) or np.any(bmax < amin):
                continue
            if _segments_intersect(a[i], a[i + 1], b[j], b[j + 1]):
                return True
    return False


def _self_intersects(a: np.ndarray) -> bool:
    for i in range(len(a) - 1):
        for j in range(i + 2, len(a) - 1):
            if _segments_intersect(a[i], a[i + 1], a[j], a[j + 1]):
                return True
    return False


def closest_point(points: np.ndarray, cum: np.ndarray, p) -> tuple[float, float, float, float]:
    """Closest point on a polyline to ``p``.

    Returns ``(s, signed_offset, distance, tangent_heading)``; the offset is
    positive to the left of the direction of travel.
    """
    a = points[:-1]
    d = np.diff(points, axis=0)
    seg_len2 = (d**2).sum(axis=1)
    rel = np.asarray(p, dtype=float) - a
    t = np.clip((rel * d).sum(axis=1) / np.where(seg_len2 > 0, seg_len2, 1.0), 0.0, 1.0)
    proj = a + t[:, None] * d
    dist = np.hypot(*(np.asarray(p) - proj).T)
    i = int(np.argmin(dist))
    seg = d[i]
    cross = seg[0] * rel[i, 1] - seg[1] * rel[i, 0]
    sign = 1.0 if cross >= 0 else -1.0
    s = cum[i] + t[i] * math.sqrt(seg_len2[i])
    return float(s), sign * float(dist[i]), float(dist[i]), math.atan2(seg[1], seg[0])


def point_at(points: np.ndarray, cum: np.ndarray, s: float) -> tuple[np.ndarray, float]:
    """Position and tangent heading at arc length ``s``, extrapolating linearly past either end."""
    i = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(points) - 2))
    seg = points[i + 1] - points[i]
    L = cum[i + 1] - cum[i]
    heading = math.atan2(seg[1], seg[0])
    u = (s - cum[i]) / L if L > 0 else 0.0
    return points[i] + u * seg, heading


def smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


# --- map types ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Lanelet:
    id: int
    left_boundary: np.ndarray
    right_boundary: np.ndarray
    successors: tuple[int, ...] = ()
    adjacent_left: int | None = None
    adjacent_right: int | None = None
    speed_limit: float = 25.0
    closed: bool = False
    taper_start_s: float | None = None
    taper_end_s: float | None = None
    centerline: np.ndarray = field(init=False, repr=False)
    center_s: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        left = np.asarray(self.left_boundary, dtype=float)
        right = np.asarray(self.right_boundary, dtype=float)
        for name, b in (("left", left), ("right", right)):
            if b.ndim != 2 or b.shape[1] != 2 or len(b) < 2:
                raise DegenerateBoundary(f"lanelet {self.id}: {name} boundary needs >= 2 points")
            if polyline_length(b) <= 0:
                raise DegenerateBoundary(f"lanelet {self.id}: {name} boundary has zero length")
            if _self_intersects(b):
                raise DegenerateBoundary(f"lanelet {self.id}: {name} boundary self-intersects")
        if _polylines_cross(left, right):
            raise DegenerateBoundary(f"lanelet {self.id}: boundaries cross")
        n = max(2, int(math.ceil(max(polyline_length(left), polyline_length(right)) / RESAMPLE_SPACING)) + 1)
        lr, rr = resample(left, n), resample(right, n)
        if np.any(np.hypot(*(lr - rr).T) <= 1e-9):
            raise DegenerateBoundary(f"lanelet {self.id}: boundaries touch")
        center = 0.5 * (lr + rr)
        cum = cumulative_length(center)
        if cum[-1] <= 0:
            raise DegenerateBoundary(f"lanelet {self.id}: centerline has zero length")
        object.__setattr__(self, "left_boundary", left)
        object.__setattr__(self, "right_boundary", right)
        object.__setattr__(self, "successors", tuple(int(s) for s in self.successors))
        object.__setattr__(self, "centerline", center)
        object.__setattr__(self, "center_s", cum)
        object.__setattr__(self, "_half_width", 0.5 * np.hypot(*(lr - rr).T))

    @property
    def length(self) -> float:
        return float(self.center_s[-1])

    def half_width_at(self, s: float) -> float:
        return float(np.interp(s, self.center_s, self._half_width))

    def point_at(self, s: float) -> tuple[np.ndarray, float]:
        return point_at(self.centerline, self.center_s, s)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "left": self.left_boundary.tolist(),
            "right": self.right_boundary.tolist(),
            "successors": list(self.successors),
            "adjacent_left": self.adjacent_left,
            "adjacent_right": self.adjacent_right,
            "speed_limit": self.speed_limit,
            "closed": self.closed,
            "taper_start_s": self.taper_start_s,
            "taper_end_s": self.taper_end_s,
        }


@dataclass(frozen=True)
class LaneProjection:
    lanelet_id: int
    s: float
    lateral_offset: float
    heading_of_lane: float


class LaneletMap:
    """Validated, read-only collection of lanelets."""

    def __init__(self, lanelets: Sequence[Lanelet]):
        self.lanelets: Mapping[int, Lanelet] = {ll.id: ll for ll in lanelets}
        if len(self.lanelets) != len(lanelets):
            raise SchemaError("duplicate lanelet ids")
        self._validate()
        self.predecessors: dict[int, list[int]] = {i: [] for i in self.lanelets}
        for ll in self.lanelets.values():
            for succ in ll.successors:
                self.predecessors[succ].append(ll.id)

    def _validate(self):
        ids = self.lanelets
        for ll in ids.values():
            for ref in list(ll.successors) + [ll.adjacent_left, ll.adjacent_right]:
                if ref is not None and ref not in ids:
                    raise SchemaError(f"lanelet {ll.id} references unknown lanelet {ref}")
            if ll.adjacent_left is not None and ids[ll.adjacent_left].adjacent_right != ll.id:
                raise AsymmetricAdjacency(
                    f"lanelet {ll.id}.adjacent_left={ll.adjacent_left} but "
                    f"{ll.adjacent_left}.adjacent_right={ids[ll.adjacent_left].adjacent_right}"
                )
            if ll.adjacent_right is not None and ids[ll.adjacent_right].adjacent_left != ll.id:
                raise AsymmetricAdjacency(
                    f"lanelet {ll.id}.adjacent_right={ll.adjacent_right} but "
                    f"{ll.adjacent_right}.adjacent_left={ids[ll.adjacent_right].adjacent_left}"
                )
            if (ll.taper_start_s is None) != (ll.taper_end_s is None):
                raise SchemaError(f"lanelet {ll.id}: taper_start_s and taper_end_s must be set together")
            if ll.taper_start_s is not None and not 0 <= ll.taper_start_s < ll.taper_end_s:
                raise SchemaError(f"lanelet {ll.id}: need 0 <= taper_start_s < taper_end_s")
        for ll in ids.values():
            if not ll.closed:
                continue
            feeders = [p for p in ids.values() if ll.id in p.successors and not p.closed]
            for f in feeders:
                if f.taper_start_s is None:
                    raise SchemaError(
                        f"closed lanelet {ll.id} is fed by lanelet {f.id} without taper annotations"
                    )

    def __getitem__(self, lanelet_id: int) -> Lanelet:
        return self.lanelets[lanelet_id]

    def __iter__(self):
        return iter(self.lanelets.values())

    def __len__(self):
        return len(self.lanelets)

    def to_dict(self) -> dict:
        return {"lanelets": [ll.to_dict() for ll in self.lanelets.values()]}

    # -- queries --------------------------------------------------------

    def project(self, point, heading: float) -> LaneProjection:
        """Project ``point`` onto the best-matching lanelet centerline.

        Candidates lie within 10 m; the score is the distance to the
        centerline plus 5 m per radian of heading mismatch.  Ties go to
        the lower lanelet id.
        """
        best = None
        for ll in self.lanelets.values():
            s, offset, dist, lane_heading = closest_point(ll.centerline, ll.center_s, point)
            if dist > MAX_PROJECTION_DISTANCE:
                continue
            mismatch = abs(normalize_angle(heading - lane_heading))
            score = abs(offset) + HEADING_WEIGHT * mismatch
            if best is None or score < best[0]:
                best = (score, LaneProjection(ll.id, s, offset, lane_heading))
        if best is None:
            raise OffMap(f"point {tuple(point)} is more than {MAX_PROJECTION_DISTANCE} m from every centerline")
        return best[1]

    def chain(self, lanelet_id: int, max_length: float = math.inf) -> list[int]:
        """``lanelet_id`` followed by first successors until ``max_length`` is covered or the chain ends."""
        ids = [lanelet_id]
        total = self.lanelets[lanelet_id].length
        seen = {lanelet_id}
        while total < max_length:
            succ = self.lanelets[ids[-1]].successors
            if not succ or succ[0] in seen:
                break
            ids.append(succ[0])
            seen.add(succ[0])
            total += self.lanelets[succ[0]].length
        return ids

    def chain_centerline(self, lanelet_id: int, max_length: float = math.inf) -> tuple[np.ndarray, np.ndarray]:
        """Concatenated centerline of :meth:`chain` and its cumulative arc length."""
        parts = []
        for k, lid in enumerate(self.chain(lanelet_id, max_length)):
            c = self.lanelets[lid].centerline
            parts.append(c if k == 0 else c[1:] if np.allclose(c[0], parts[-1][-1]) else c)
        pts = np.vstack(parts)
        keep = np.concatenate([[True], np.hypot(*np.diff(pts, axis=0).T) > 1e-9])
        pts = pts[keep]
        return pts, cumulative_length(pts)

    def distance_to_taper(self, lanelet_id: int, s: float, horizon: float = 2000.0) -> float | None:
        """Arc length from (lanelet, s) to the next taper start on this lane, or None.

        Returns 0 when the lanelet itself is closed.
        """
        if self.lanelets[lanelet_id].closed:
            return 0.0
        offset = -s
        for lid in self.chain(lanelet_id, horizon):
            ll = self.lanelets[lid]
            if ll.closed:
                return max(offset, 0.0)
            if ll.taper_start_s is not None:
                return max(offset + ll.taper_start_s, 0.0)
            offset += ll.length
        return None

    def sample_path(
        self,
        start: LaneProjection,
        strategy: str,
        distance: float,
        merge_length: float = DEFAULT_MERGE_LENGTH,
        spacing: float = RESAMPLE_SPACING,
    ) -> np.ndarray:
        """Polyline starting at the projected point and running ``distance`` metres of lane.

        ``keep`` follows the current centerline, relaxing any lateral offset
        to zero; ``merge_left``/``merge_right`` blend from the current
        position onto the adjacent centerline.  Both blends use a smoothstep
        over ``merge_length``.  Sampling is every ``spacing`` metres of lane
        arc length.
        """
        src = self.lanelets[start.lanelet_id]
        if strategy == "keep":
            target = None
        elif strategy in ("merge_left", "merge_right"):
            tid = src.adjacent_left if strategy == "merge_left" else src.adjacent_right
            if tid is None:
                raise InfeasibleStrategy(f"lanelet {src.id} has no {strategy.split('_')[1]} neighbour")
            if self.lanelets[tid].closed:
                raise InfeasibleStrategy(f"{strategy} target lanelet {tid} is closed")
            target = tid
        else:
            raise InfeasibleStrategy(f"unknown strategy {strategy!r}")
        if distance <= 0:
            raise ValueError("distance must be positive")

        n = max(2, int(math.ceil(distance / spacing)) + 1)
        sigma = np.linspace(0.0, distance, n)
        src_pts, src_cum = self.chain_centerline(src.id, start.s + distance)
        base = np.empty((n, 2))
        normals = np.empty((n, 2))
        for k, sg in enumerate(sigma):
            p, h = point_at(src_pts, src_cum, start.s + sg)
            base[k] = p
            normals[k] = (-math.sin(h), math.cos(h))
        w = smoothstep(sigma / merge_length) if merge_length > 0 else np.ones(n)
        if target is None:
            offset = start.lateral_offset * (1.0 - w)
            return base + normals * offset[:, None]

        origin = base[0] + normals[0] * start.lateral_offset
        t = self.lanelets[target]
        t_s0, *_ = closest_point(t.centerline, t.center_s, origin)
        tgt_pts, tgt_cum = self.chain_centerline(target, t_s0 + distance)
        tgt = np.array([point_at(tgt_pts, tgt_cum, t_s0 + sg)[0] for sg in sigma])
        src_line = base + normals * start.lateral_offset
        return (1.0 - w)[:, None] * src_line + w[:, None] * tgt

    def lane_chains(self) -> list[list[int]]:
        """Maximal successor chains starting at lanelets without predecessors."""
        heads = [i for i, preds in self.predecessors.items() if not preds]
        return [self.chain(h) for h in sorted(heads)]


# --- I/O ---------------------------------------------------------------------


def _lanelet_from_dict(d: dict) -> Lanelet:
    if not isinstance(d, dict):
        raise SchemaError("lanelet entries must be objects")
    keys = set(d)
    if keys != set(_KEYS):
        missing, extra = set(_KEYS) - keys, keys - set(_KEYS)
        raise SchemaError(f"lanelet keys: missing {sorted(missing)}, unexpected {sorted(extra)}")

    def opt_int(v, name):
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise SchemaError(f"{name} must be int or null")
        return v

    def opt_float(v, name):
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"{name} must be a number or null")
        return float(v)

    if isinstance(d["id"], bool) or not isinstance(d["id"], int):
        raise SchemaError("id must be an int")
    if not isinstance(d["closed"], bool):
        raise SchemaError("closed must be a bool")
    if not isinstance(d["successors"], list) or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in d["successors"]
    ):
        raise SchemaError("successors must be a list of ints")
    speed = opt_float(d["speed_limit"], "speed_limit")
    if speed is None or speed <= 0:
        raise SchemaError("speed_limit must be a positive number")
    bounds = []
    for name in ("left", "right"):
        try:
            arr = np.asarray(d[name], dtype=float)
        except (TypeError, ValueError):
            raise SchemaError(f"{name} must be a list of [x, y] pairs") from None
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise SchemaError(f"{name} must be a list of [x, y] pairs")
        bounds.append(arr)
    return Lanelet(
        id=d["id"],
        left_boundary=bounds[0],
        right_boundary=bounds[1],
        successors=tuple(d["successors"]),
        adjacent_left=opt_int(d["adjacent_left"], "adjacent_left"),
        adjacent_right=opt_int(d["adjacent_right"], "adjacent_right"),
        speed_limit=speed,
        closed=d["closed"],
        taper_start_s=opt_float(d["taper_start_s"], "taper_start_s"),
        taper_end_s=opt_float(d["taper_end_s"], "taper_end_s"),
    )


def map_from_dict(doc: dict) -> LaneletMap:
    if not isinstance(doc, dict) or set(doc) != {"lanelets"} or not isinstance(doc["lanelets"], list):
        raise SchemaError('map document must be {"lanelets": [...]}')
    return LaneletMap([_lanelet_from_dict(d) for d in doc["lanelets"]])


def load_map(path) -> LaneletMap:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return map_from_dict(doc)


def save_map(lmap: LaneletMap, path) -> None:
    Path(path).write_text(json.dumps(lmap.to_dict(), indent=1) + "\n")


def work_zone_map(
    approach: float = 300.0,
    taper: float = 180.0,
    downstream: float = 520.0,
    lane_width: float = 3.5,
    speed_limit: float = 25.0,
    work_zone_speed_limit: float = 20.0,
) -> LaneletMap:
    """Synthetic two-lane freeway with the right lane closed.

    Travel is along +x; the right lane occupies y in [0, w] and the left
    lane y in [w, 2w].  Lanelets: 1 (left, approach), 2 (right, approach,
    carries the taper annotation), 3 (right, closed over the taper), 4
    (left, alongside the taper), 5 (left, downstream).
    """
    w = lane_width
    x0, x1, x2, x3 = 0.0, approach, approach + taper, approach + taper + downstream

    def strip(xa, xb, y_right, y_left):
        return [[xa, y_left], [xb, y_left]], [[xa, y_right], [xb, y_right]]

    def make(i, xa, xb, y_right, y_left, **kw):
        left, right = strip(xa, xb, y_right, y_left)
        return Lanelet(id=i, left_boundary=np.array(left), right_boundary=np.array(right), **kw)

    lanelets = [
        make(1, x0, x1, w, 2 * w, successors=(4,), adjacent_right=2, speed_limit=speed_limit),
        make(
            2, x0, x1, 0.0, w, successors=(3,), adjacent_left=1, speed_limit=speed_limit,
            taper_start_s=approach, taper_end_s=approach + taper,
        ),
        make(3, x1, x2, 0.0, w, adjacent_left=4, speed_limit=work_zone_speed_limit, closed=True),
        make(4, x1, x2, w, 2 * w, successors=(5,), adjacent_right=3, speed_limit=work_zone_speed_limit),
        make(5, x2, x3, w, 2 * w, speed_limit=work_zone_speed_limit),
    ]
    return LaneletMap(lanelets)


def default_map_path() -> Path:
    return Path(__file__).parent / "data" / "work_zone.json"
