"""A scripted merge: how far ahead of the closest approach does the warning fire?

One car drifts out of the closing lane while a faster car overtakes in
the open lane.  A constant-velocity forecast issued after one second of
history is scored step by step.
"""

import math

from wzsentinel.conflict import ConflictParams, generate_warnings
from wzsentinel.geometry import OrientedBox, min_box_distance
from wzsentinel.predict import predict_cv
from wzsentinel.trajdata import ScenarioCase, TrackPoint, VehicleTrack, extract_windows


def track(tid, x0, y0, vx, vy):
    pts = [
        TrackPoint.at_frame(tid, f, "car", x0 + vx * (f - 1) * 0.1, y0 + vy * (f - 1) * 0.1, vx, vy, math.atan2(vy, vx), 4.5, 1.8)
        for f in range(1, 41)
    ]
    return VehicleTrack(tid, "car", pts)


case = ScenarioCase(1, {1: track(1, 0.0, 1.75, 18.0, 0.9), 2: track(2, -30.0, 5.25, 28.0, 0.0)})
gt = [
    min_box_distance(OrientedBox(a.x, a.y, a.psi_rad, a.length, a.width), OrientedBox(b.x, b.y, b.psi_rad, b.length, b.width))
    for a, b in zip(case.tracks[1].points, case.tracks[2].points)
]
closest = min(range(40), key=gt.__getitem__) + 1

window = extract_windows(case, 10, 30)[0]
records, warnings = generate_warnings(predict_cv(window), ConflictParams())
for r in records[:: 5]:
    print(f"step {r.horizon_step:2d}  d={r.distance_m:6.2f} m  P={r.probability:.3f}  {'HIGH RISK' if r.is_high_risk else ''}")
w = warnings[0]
fire = w.issue_frame + w.horizon_step
print(f"warning issued at frame {w.issue_frame} for frame {fire}; closest approach at frame {closest} "
      f"({(closest - fire) * 0.1:.1f} s of lead time)")
