import math

import numpy as np
import pytest

from wzsentinel.hdmap import work_zone_map
from wzsentinel.trajdata import ScenarioCase, TrackPoint, VehicleTrack


@pytest.fixture(scope="session")
def wz_map():
    return work_zone_map()


def straight_track(track_id, x0, y0, vx, vy=0.0, frames=range(1, 41), agent_type="car", dims=(4.5, 1.8)):
    """Constant-velocity track sampled at 10 Hz; frame 1 sits at (x0, y0)."""
    pts = []
    for f in frames:
        t = (f - 1) * 0.1
        pts.append(
            TrackPoint.at_frame(
                track_id, f, agent_type, x0 + vx * t, y0 + vy * t, vx, vy, math.atan2(vy, vx), *dims
            )
        )
    return VehicleTrack(track_id, agent_type, pts)


def make_case(case_id=1, tracks=()):
    return ScenarioCase(case_id, {t.track_id: t for t in tracks})


@pytest.fixture
def cv_case():
    return make_case(1, [straight_track(1, 0.0, 1.75, 20.0), straight_track(2, 40.0, 5.25, 22.0), straight_track(3, 80.0, 1.75, 18.0)])


def random_case(rng: np.random.Generator, case_id=1):
    n = int(rng.integers(1, 6))
    tracks = []
    for tid in range(1, n + 1):
        first = int(rng.integers(1, 20))
        last = int(rng.integers(first, 41))
        kind = "truck" if rng.random() < 0.3 else "car"
        pts = [
            TrackPoint.at_frame(
                tid, f, kind, *rng.uniform(-500, 500, 2), *rng.uniform(-30, 30, 2),
                rng.uniform(-math.pi, math.pi), *rng.uniform(0.5, 15.0, 2),
            )
            for f in range(first, last + 1)
        ]
        tracks.append(VehicleTrack(tid, kind, pts))
    return make_case(case_id, tracks)


@pytest.fixture(scope="session")
def sim_cases(wz_map):
    """A few simulated cases with their final worlds, shared across test modules."""
    from wzsentinel.sim import SimConfig, simulate_case

    return [simulate_case(SimConfig(), wz_map, cid) for cid in (1, 2, 3, 4)]
