"""Static SVG figures for conflict records and trajectory predictions.

The SVG text is emitted by hand with fixed number formatting so the same
input always produces the same bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .conflict import DEFAULT_DIST_THRESHOLD, DEFAULT_PROB_THRESHOLD, ConflictRecord
from .predict import PredictionSet
from .trajdata import ScenarioCase

WIDTH, HEIGHT = 640, 420
MARGIN = (60, 20, 30, 50)  # left, right, top, bottom
MODE_COLOURS = ("#d62728", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22")

SCATTER_NAME = "conflict_probability.svg"
CRITICAL_NAME = "conflict_probability_critical.svg"


class UnknownPair(ValueError):
    pass


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


class _Axes:
    """Linear map from data coordinates to the SVG plot area."""

    def __init__(self, xlim, ylim, equal=False):
        left, right, top, bottom = MARGIN
        self.x0, self.x1 = left, WIDTH - right
        self.y0, self.y1 = HEIGHT - bottom, top
        (a, b), (c, d) = xlim, ylim
        if b <= a:
            b = a + 1.0
        if d <= c:
            d = c + 1.0
        if equal:
            sx = (self.x1 - self.x0) / (b - a)
            sy = (self.y0 - self.y1) / (d - c)
            s = min(sx, sy)
            cx, cy = (a + b) / 2, (c + d) / 2
            hw, hh = (self.x1 - self.x0) / s / 2, (self.y0 - self.y1) / s / 2
            a, b, c, d = cx - hw, cx + hw, cy - hh, cy + hh
        self.xlim, self.ylim = (a, b), (c, d)

    def x(self, v):
        a, b = self.xlim
        return self.x0 + (v - a) / (b - a) * (self.x1 - self.x0)

    def y(self, v):
        c, d = self.ylim
        return self.y0 - (v - c) / (d - c) * (self.y0 - self.y1)

    def frame(self, xlabel, ylabel, title, n_ticks=5) -> list[str]:
        out = [
            f'<rect x="{self.x0}" y="{self.y1}" width="{self.x1 - self.x0}" height="{self.y0 - self.y1}" '
            'fill="none" stroke="#333"/>',
            f'<text x="{(self.x0 + self.x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="16" y="{(self.y0 + self.y1) / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {(self.y0 + self.y1) / 2:.1f})">{escape(ylabel)}</text>',
            f'<text x="{(self.x0 + self.x1) / 2:.1f}" y="18" text-anchor="middle" font-weight="bold">{escape(title)}</text>',
        ]
        for v in np.linspace(*self.xlim, n_ticks):
            out.append(f'<text x="{_f(self.x(v))}" y="{self.y0 + 16}" text-anchor="middle" font-size="10">{_f(v)}</text>')
        for v in np.linspace(*self.ylim, n_ticks):
            out.append(f'<text x="{self.x0 - 6}" y="{_f(self.y(v) + 3)}" text-anchor="end" font-size="10">{_f(v)}</text>')
        return out


def _document(body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">'
    )
    return "\n".join([head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>', *body, "</svg>"]) + "\n"


def scatter_svg(
    records: Sequence[ConflictRecord],
    title: str = "Conflict probability vs distance",
    max_distance: float | None = None,
    dist_threshold: float = DEFAULT_DIST_THRESHOLD,
    prob_threshold: float = DEFAULT_PROB_THRESHOLD,
) -> str:
    """Probability against separation, one ``<circle class="record">`` per record.

    With ``max_distance`` only records strictly closer than it are drawn.
    """
    if max_distance is not None:
        records = [r for r in records if r.distance_m < max_distance]
    dmax = max([r.distance_m for r in records] + [dist_threshold * 1.2])
    if max_distance is not None:
        dmax = max_distance
    ax = _Axes((0.0, dmax), (0.0, 1.0))
    body = ax.frame("minimum distance [m]", "conflict probability", title)
    body.append(
        f'<line x1="{_f(ax.x(dist_threshold))}" y1="{ax.y1}" x2="{_f(ax.x(dist_threshold))}" y2="{ax.y0}" '
        'stroke="#888" stroke-dasharray="4 3"/>'
    )
    body.append(
        f'<line x1="{ax.x0}" y1="{_f(ax.y(prob_threshold))}" x2="{ax.x1}" y2="{_f(ax.y(prob_threshold))}" '
        'stroke="#888" stroke-dasharray="4 3"/>'
    )
    for r in records:
        colour = "#d62728" if r.is_high_risk else "#1f77b4"
        body.append(
            f'<circle class="record" cx="{_f(ax.x(r.distance_m))}" cy="{_f(ax.y(r.probability))}" r="2.5" '
            f'fill="{colour}" fill-opacity="0.6"><title>frame {r.frame_id} step {r.horizon_step} '
            f"pair {r.track_i}-{r.track_j}</title></circle>"
        )
    return _document(body)


def trajectory_svg(
    case: ScenarioCase,
    pset: PredictionSet | None = None,
    issue_frame: int | None = None,
    title: str | None = None,
) -> str:
    """Observed history (grey), ground-truth future (black, dashed) and predicted modes.

    Mode line opacity follows the mode probability.  ``issue_frame``
    defaults to the prediction's issue frame, or the last frame.
    """
    if issue_frame is None:
        issue_frame = pset.frame_id if pset is not None else case.max_frame
    pts = [[p.x, p.y] for p in case.points()]
    if pset is not None:
        pts.extend(pset.positions.reshape(-1, 2).tolist())
    pts = np.array(pts).reshape(-1, 2)
    ax = _Axes((pts[:, 0].min() - 5, pts[:, 0].max() + 5), (pts[:, 1].min() - 5, pts[:, 1].max() + 5), equal=True)
    title = title or f"case {case.case_id}, issue frame {issue_frame}"
    body = ax.frame("x [m]", "y [m]", title)

    def path(xy, **attrs):
        d = " ".join(f"{_f(ax.x(x))},{_f(ax.y(y))}" for x, y in xy)
        extra = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in attrs.items())
        return f'<polyline points="{d}" fill="none" {extra}/>'

    for tid, track in case.tracks.items():
        past = [(p.x, p.y) for p in track.points if p.frame_id <= issue_frame]
        future = [(p.x, p.y) for p in track.points if p.frame_id >= issue_frame]
        if len(past) > 1:
            body.append(path(past, stroke="#999", stroke_width="1.5", **{"class": "history"}))
        if len(future) > 1:
            body.append(path(future, stroke="#000", stroke_width="1", stroke_dasharray="3 2", **{"class": "truth"}))
    if pset is not None:
        for i in range(len(pset.track_ids)):
            origin = pset.origins[i] if pset.origins is not None else None
            for k in range(pset.K):
                xy = pset.positions[i, k]
                if origin is not None:
                    xy = np.vstack([origin, xy])
                colour = MODE_COLOURS[k % len(MODE_COLOURS)]
                opacity = 0.15 + 0.85 * float(pset.mode_probs[i, k])
                body.append(path(xy, stroke=colour, stroke_width="1.2", stroke_opacity=_f(opacity), **{"class": "mode"}))
    return _document(body)


def select_pair(records: Iterable[ConflictRecord], pair: tuple[int, int] | None) -> list[ConflictRecord]:
    records = list(records)
    if pair is None:
        return records
    i, j = sorted(pair)
    chosen = [r for r in records if r.track_i == i and r.track_j == j]
    if not chosen:
        raise UnknownPair(f"no records for pair ({i}, {j})")
    return chosen


def write_conflict_report(
    records: Sequence[ConflictRecord],
    out_dir,
    pair: tuple[int, int] | None = None,
    dist_threshold: float = DEFAULT_DIST_THRESHOLD,
    prob_threshold: float = DEFAULT_PROB_THRESHOLD,
) -> list[Path]:
    """Write the full scatter and the below-threshold view; returns the paths."""
    records = select_pair(records, pair)
    suffix = "" if pair is None else f" (vehicles {min(pair)} and {max(pair)})"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {
        SCATTER_NAME: scatter_svg(
            records, "Conflict probability vs distance" + suffix,
            dist_threshold=dist_threshold, prob_threshold=prob_threshold,
        ),
        CRITICAL_NAME: scatter_svg(
            records, f"Interactions closer than {dist_threshold:g} m" + suffix, max_distance=dist_threshold,
            dist_threshold=dist_threshold, prob_threshold=prob_threshold,
        ),
    }
    paths = []
    for name, text in outputs.items():
        path = out_dir / name
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        paths.append(path)
    return paths


def write_trajectory_overlay(case: ScenarioCase, out_dir, pset: PredictionSet | None = None) -> Path:
    path = Path(out_dir) / f"trajectories_case_{case.case_id}.svg"
    with open(path, "w", newline="\n") as fh:
        fh.write(trajectory_svg(case, pset))
    return path
