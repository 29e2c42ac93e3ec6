"""Trajectory cases: data model, CSV reader/writer and window extraction.

A case is a 4 s recording at 10 Hz (frames 1..40) stored as
``trajectory_data_case_<id>.csv`` with one row per vehicle and frame.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .geometry import normalize_angle

COLUMNS = (
    "track_id",
    "timestamp_ms",
    "frame_id",
    "agent_type",
    "x",
    "y",
    "vx",
    "vy",
    "psi_rad",
    "length",
    "width",
)
AGENT_TYPES = ("car", "truck")
MAX_FRAMES = 40
FRAME_MS = 100
DT = FRAME_MS / 1000.0

_CASE_NAME = re.compile(r"^trajectory_data_case_(\d+)\.csv$")


class CaseFormatError(ValueError):
    """Base class for malformed case data.  ``row`` is the 1-based file line, if known."""

    def __init__(self, message: str, row: int | None = None, path: str | None = None):
        self.row = row
        self.path = path
        self.detail = message
        if path is not None and row is not None:
            where = f"{path}, row {row}"
        elif path is not None:
            where = str(path)
        elif row is not None:
            where = f"row {row}"
        else:
            where = ""
        super().__init__(f"{where}: {message}" if where else message)


class MissingColumn(CaseFormatError):
    pass


class NonNumericField(CaseFormatError):
    pass


class FrameOutOfRange(CaseFormatError):
    pass


class TimestampMismatch(CaseFormatError):
    pass


class NonContiguousTrackIds(CaseFormatError):
    pass


class DuplicateFrame(CaseFormatError):
    pass


class FrameGap(CaseFormatError):
    pass


class InvalidAgentType(CaseFormatError):
    pass


class InvalidDimension(CaseFormatError):
    pass


class EmptyFile(CaseFormatError):
    pass


class WindowTooLong(ValueError):
    pass


def _check_point(track_id, timestamp_ms, frame_id, agent_type, length, width, row=None, path=None):
    if track_id < 1:
        raise CaseFormatError(f"track_id must be positive, got {track_id}", row, path)
    if not 1 <= frame_id <= MAX_FRAMES:
        raise FrameOutOfRange(f"frame_id {frame_id} outside [1, {MAX_FRAMES}]", row, path)
    if timestamp_ms != FRAME_MS * frame_id:
        raise TimestampMismatch(
            f"timestamp_ms {timestamp_ms} != {FRAME_MS} * frame_id {frame_id}", row, path
        )
    if agent_type not in AGENT_TYPES:
        raise InvalidAgentType(f"agent_type {agent_type!r} not in {AGENT_TYPES}", row, path)
    if not (length > 0 and width > 0):
        raise InvalidDimension(f"length/width must be positive, got {length}/{width}", row, path)


@dataclass(frozen=True)
class TrackPoint:
    track_id: int
    timestamp_ms: int
    frame_id: int
    agent_type: str
    x: float
    y: float
    vx: float
    vy: float
    psi_rad: float
    length: float
    width: float

    def __post_init__(self):
        _check_point(
            self.track_id, self.timestamp_ms, self.frame_id, self.agent_type, self.length, self.width
        )
        object.__setattr__(self, "psi_rad", normalize_angle(self.psi_rad))

    @classmethod
    def at_frame(cls, track_id: int, frame_id: int, agent_type: str, x, y, vx, vy, psi_rad, length, width):
        """Build a point with the timestamp implied by ``frame_id``."""
        return cls(track_id, FRAME_MS * frame_id, frame_id, agent_type, x, y, vx, vy, psi_rad, length, width)

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class VehicleTrack:
    track_id: int
    agent_type: str
    points: tuple[TrackPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise CaseFormatError(f"track {self.track_id} has no points")
        prev = None
        for p in self.points:
            if p.track_id != self.track_id or p.agent_type != self.agent_type:
                raise CaseFormatError(
                    f"point (track {p.track_id}, {p.agent_type}) does not belong to "
                    f"track {self.track_id} ({self.agent_type})"
                )
            if prev is not None:
                if p.frame_id == prev:
                    raise DuplicateFrame(f"track {self.track_id} repeats frame {prev}")
                if p.frame_id < prev:
                    raise CaseFormatError(f"track {self.track_id} frames not increasing")
                if p.frame_id != prev + 1:
                    raise FrameGap(f"track {self.track_id} jumps from frame {prev} to {p.frame_id}")
            prev = p.frame_id

    @property
    def first_frame(self) -> int:
        return self.points[0].frame_id

    @property
    def last_frame(self) -> int:
        return self.points[-1].frame_id

    def covers(self, first: int, last: int) -> bool:
        return self.first_frame <= first and last <= self.last_frame

    def slice(self, first: int, last: int) -> tuple[TrackPoint, ...]:
        """Points for frames ``first..last`` inclusive (the track must cover them)."""
        i0 = first - self.first_frame
        return self.points[i0 : i0 + (last - first + 1)]

    def positions(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points])


@dataclass(frozen=True)
class ScenarioCase:
    case_id: int
    tracks: Mapping[int, VehicleTrack] = field(default_factory=dict)

    def __post_init__(self):
        if self.case_id < 1:
            raise ValueError(f"case_id must be positive, got {self.case_id}")
        for tid, track in self.tracks.items():
            if tid != track.track_id:
                raise ValueError(f"track keyed {tid} carries id {track.track_id}")
        object.__setattr__(self, "tracks", dict(sorted(self.tracks.items())))

    @property
    def max_frame(self) -> int:
        return max((t.last_frame for t in self.tracks.values()), default=0)

    def n_present(self, frame_id: int) -> int:
        return sum(1 for t in self.tracks.values() if t.first_frame <= frame_id <= t.last_frame)

    def points(self) -> Iterable[TrackPoint]:
        for track in self.tracks.values():
            yield from track.points

    def quantized(self) -> "ScenarioCase":
        """The case as it reads back after a write: values rounded to CSV precision."""
        tracks = {}
        for tid, track in self.tracks.items():
            pts = tuple(_quantize_point(p) for p in track.points)
            tracks[tid] = VehicleTrack(tid, track.agent_type, pts)
        return ScenarioCase(self.case_id, tracks)


def validate_case(case: ScenarioCase) -> None:
    """Raise if ``case`` breaks a case-level invariant."""
    if not case.tracks:
        raise EmptyFile(f"case {case.case_id} has no tracks")
    ids = sorted(case.tracks)
    if ids != list(range(1, len(ids) + 1)):
        raise NonContiguousTrackIds(f"track ids {ids} are not 1..{len(ids)}")
    if case.max_frame > MAX_FRAMES:
        raise FrameOutOfRange(f"case spans {case.max_frame} frames, max {MAX_FRAMES}")


def case_filename(case_id: int) -> str:
    return f"trajectory_data_case_{case_id}.csv"


def case_id_from_path(path) -> int:
    m = _CASE_NAME.match(Path(path).name)
    if m is None:
        raise CaseFormatError(f"file name {Path(path).name!r} does not match trajectory_data_case_<id>.csv")
    return int(m.group(1))


# --- serialisation ------------------------------------------------------

_DECIMALS = {"x": 4, "y": 4, "vx": 4, "vy": 4, "psi_rad": 4, "length": 2, "width": 2}


def format_float(value: float, decimals: int) -> str:
    text = f"{value:.{decimals}f}"
    if text.startswith("-") and float(text) == 0.0:
        text = text[1:]
    return text


def _quantize(value: float, decimals: int) -> float:
    return float(format_float(value, decimals))


def _quantize_psi(psi: float) -> float:
    # 4-decimal rounding can push a value just outside (-pi, pi]; pull it back
    # so the written value is already a fixed point of normalisation.
    q = _quantize(normalize_angle(psi), 4)
    limit = math.floor(math.pi * 1e4) / 1e4
    if q > math.pi or q <= -math.pi:
        q = limit
    return q


def _quantize_point(p: TrackPoint) -> TrackPoint:
    kw = {name: _quantize(getattr(p, name), d) for name, d in _DECIMALS.items() if name != "psi_rad"}
    kw["psi_rad"] = _quantize_psi(p.psi_rad)
    return replace(p, **kw)


def _format_row(p: TrackPoint) -> str:
    q = _quantize_point(p)
    fields = [str(q.track_id), str(q.timestamp_ms), str(q.frame_id), q.agent_type]
    fields += [format_float(getattr(q, name), d) for name, d in _DECIMALS.items()]
    return ",".join(fields)


def write_case_csv(case: ScenarioCase, path) -> Path:
    """Validate ``case`` and write it in the 11-column case format.

    If ``path`` is a directory the conventional file name is used.
    Returns the path written.
    """
    validate_case(case)
    path = Path(path)
    if path.is_dir():
        path = path / case_filename(case.case_id)
    lines = [",".join(COLUMNS)]
    rows = sorted(case.points(), key=lambda p: (p.track_id, p.frame_id))
    lines.extend(_format_row(p) for p in rows)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _parse_int(text, name, row, path):
    try:
        return int(text)
    except ValueError:
        raise NonNumericField(f"{name}={text!r} is not an integer", row, path) from None


def _parse_float(text, name, row, path):
    try:
        value = float(text)
    except ValueError:
        raise NonNumericField(f"{name}={text!r} is not a number", row, path) from None
    if not math.isfinite(value):
        raise NonNumericField(f"{name}={text!r} is not finite", row, path)
    return value


def parse_case_csv(path, case_id: int | None = None) -> ScenarioCase:
    """Read and validate a case file.

    The case id comes from the ``trajectory_data_case_<id>.csv`` file name
    unless given explicitly.  Errors carry the offending line number.
    """
    path = Path(path)
    spath = str(path)
    if case_id is None:
        case_id = case_id_from_path(path)
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise EmptyFile("no header row", None, spath)
    header = [h.strip() for h in lines[0].split(",")]
    if tuple(header) != COLUMNS:
        missing = [c for c in COLUMNS if c not in header]
        detail = f"missing {missing}" if missing else f"expected order {list(COLUMNS)}"
        raise MissingColumn(f"bad header {header}: {detail}", 1, spath)

    by_track: dict[int, list[tuple[int, TrackPoint]]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(COLUMNS):
            raise MissingColumn(f"expected {len(COLUMNS)} fields, got {len(cells)}", lineno, spath)
        track_id = _parse_int(cells[0], "track_id", lineno, spath)
        timestamp = _parse_int(cells[1], "timestamp_ms", lineno, spath)
        frame = _parse_int(cells[2], "frame_id", lineno, spath)
        agent = cells[3].strip()
        nums = [_parse_float(cells[i], COLUMNS[i], lineno, spath) for i in range(4, 11)]
        _check_point(track_id, timestamp, frame, agent, nums[5], nums[6], lineno, spath)
        point = TrackPoint(track_id, timestamp, frame, agent, *nums)
        by_track.setdefault(track_id, []).append((lineno, point))

    if not by_track:
        raise EmptyFile("no data rows", None, spath)

    tracks = {}
    for tid, rows in by_track.items():
        rows.sort(key=lambda r: r[1].frame_id)
        for (_, a), (lineno, b) in zip(rows, rows[1:]):
            if a.frame_id == b.frame_id:
                raise DuplicateFrame(f"track {tid} repeats frame {b.frame_id}", lineno, spath)
            if b.agent_type != a.agent_type:
                raise CaseFormatError(f"track {tid} changes agent_type", lineno, spath)
        try:
            tracks[tid] = VehicleTrack(tid, rows[0][1].agent_type, tuple(p for _, p in rows))
        except CaseFormatError as exc:
            raise type(exc)(exc.detail, exc.row, spath) from None
    case = ScenarioCase(case_id, tracks)
    try:
        validate_case(case)
    except CaseFormatError as exc:
        raise type(exc)(exc.detail, exc.row, spath) from None
    return case


# --- windows --------------------------------------------------------------


@dataclass(frozen=True)
class ObservationWindow:
    """H observed frames followed by F ground-truth future frames.

    Only vehicles present for all H + F frames are included.  The issue
    frame (the last observed frame) is ``start_frame + H - 1``.
    """

    case_id: int
    start_frame: int
    H: int
    F: int
    history: Mapping[int, tuple[TrackPoint, ...]]
    future_truth: Mapping[int, tuple[TrackPoint, ...]]
    dt: float = DT

    @property
    def issue_frame(self) -> int:
        return self.start_frame + self.H - 1

    @property
    def track_ids(self) -> tuple[int, ...]:
        return tuple(self.history)

    def last_state(self, track_id: int) -> TrackPoint:
        return self.history[track_id][-1]

    def history_xy(self, track_id: int) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.history[track_id]])

    def future_xy(self, track_id: int) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.future_truth[track_id]])

    def truth(self) -> dict[int, np.ndarray]:
        return {tid: self.future_xy(tid) for tid in self.future_truth}


def extract_windows(case: ScenarioCase, H: int = 10, F: int = 30) -> list[ObservationWindow]:
    """Slide an (H + F)-frame window over the case one frame at a time.

    Start frames without any fully-present vehicle yield no window.
    """
    if H < 1 or F < 1:
        raise ValueError(f"H and F must be >= 1, got H={H}, F={F}")
    if H + F > MAX_FRAMES:
        raise WindowTooLong(f"H+F={H + F} exceeds {MAX_FRAMES} frames")
    last = case.max_frame
    if H + F > last:
        raise WindowTooLong(f"H+F={H + F} exceeds the {last} frames present in case {case.case_id}")
    windows = []
    for start in range(1, last - (H + F) + 2):
        end = start + H + F - 1
        history, future = {}, {}
        for tid, track in case.tracks.items():
            if not track.covers(start, end):
                continue
            pts = track.slice(start, end)
            history[tid] = pts[:H]
            future[tid] = pts[H:]
        if history:
            windows.append(ObservationWindow(case.case_id, start, H, F, history, future))
    return windows
