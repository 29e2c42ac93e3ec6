import json
import math

import numpy as np
import pytest

from wzsentinel.hdmap import (
    AsymmetricAdjacency,
    DegenerateBoundary,
    InfeasibleStrategy,
    Lanelet,
    LaneletMap,
    LaneProjection,
    OffMap,
    SchemaError,
    default_map_path,
    load_map,
    map_from_dict,
    save_map,
)


def straight(i, y_right, y_left, x0=0.0, x1=300.0, **kw):
    return Lanelet(i, np.array([[x0, y_left], [x1, y_left]]), np.array([[x0, y_right], [x1, y_right]]), **kw)


@pytest.fixture
def two_lane():
    return LaneletMap([
        straight(1, 3.5, 7.0, adjacent_right=2),
        straight(2, 0.0, 3.5, adjacent_left=1, closed=True),
    ])


def test_two_lane_fixture_loads(two_lane):
    assert two_lane[1].adjacent_right == 2 and two_lane[2].adjacent_left == 1
    np.testing.assert_allclose(two_lane[2].centerline[:, 1], 1.75)
    assert two_lane[2].length == pytest.approx(300.0)


def test_centerline_length_close_to_boundaries():
    ll = Lanelet(1, np.array([[0, 3.5], [100, 13.5], [200, 3.5]]), np.array([[0, 0], [100, 10], [200, 0]]))
    avg = 0.5 * (np.hypot(100, 10) * 2 + np.hypot(100, 10) * 2)
    assert abs(ll.length - avg) / avg < 0.005


def test_crossing_boundaries_rejected():
    with pytest.raises(DegenerateBoundary):
        Lanelet(1, np.array([[0, 0], [100, 5]]), np.array([[0, 5], [100, 0]]))
    with pytest.raises(DegenerateBoundary):
        Lanelet(1, np.array([[0, 0]]), np.array([[0, 5], [100, 0]]))


def test_asymmetric_adjacency():
    with pytest.raises(AsymmetricAdjacency):
        LaneletMap([straight(1, 3.5, 7.0, adjacent_right=2), straight(2, 0.0, 3.5)])


def test_closed_lane_needs_taper_on_feeder():
    with pytest.raises(SchemaError):
        LaneletMap([straight(1, 0, 3.5, successors=(2,)), straight(2, 0, 3.5, x0=300, x1=400, closed=True)])
    ok = LaneletMap([
        straight(1, 0, 3.5, successors=(2,), taper_start_s=300.0, taper_end_s=400.0),
        straight(2, 0, 3.5, x0=300, x1=400, closed=True),
    ])
    assert ok.distance_to_taper(1, 100.0) == pytest.approx(200.0)
    assert ok.distance_to_taper(2, 10.0) == 0.0


def test_schema_strictness(two_lane):
    doc = two_lane.to_dict()
    assert map_from_dict(json.loads(json.dumps(doc))).to_dict() == doc
    extra = json.loads(json.dumps(doc))
    extra["lanelets"][0]["colour"] = "red"
    with pytest.raises(SchemaError):
        map_from_dict(extra)
    missing = json.loads(json.dumps(doc))
    del missing["lanelets"][0]["closed"]
    with pytest.raises(SchemaError):
        map_from_dict(missing)
    bad = json.loads(json.dumps(doc))
    bad["lanelets"][0]["successors"] = [99]
    with pytest.raises(SchemaError):
        map_from_dict(bad)


def test_save_load_round_trip(tmp_path, wz_map):
    save_map(wz_map, tmp_path / "m.json")
    assert load_map(tmp_path / "m.json").to_dict() == wz_map.to_dict()
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(SchemaError):
        load_map(tmp_path / "bad.json")


def test_bundled_map_matches_builder(wz_map):
    assert load_map(default_map_path()).to_dict() == wz_map.to_dict()


def test_project_examples(two_lane):
    p = two_lane.project((50.0, 1.75), 0.0)
    assert (p.lanelet_id, p.s, p.lateral_offset) == (2, pytest.approx(50.0), pytest.approx(0.0, abs=1e-12))
    p = two_lane.project((50.0, 2.75), 0.0)
    assert p.lanelet_id == 2 and p.lateral_offset == pytest.approx(1.0)
    with pytest.raises(OffMap):
        two_lane.project((50.0, 40.0), 0.0)


def test_projection_tie_broken_by_heading():
    # left lane runs against the right lane's direction; a point on the shared boundary
    # heading west belongs to the left lane
    left = Lanelet(1, np.array([[300, 3.5], [0, 3.5]]), np.array([[300, 7.0], [0, 7.0]]))
    right = straight(2, 0.0, 3.5)
    lmap = LaneletMap([left, right])
    scores = {}
    for ll in (left, right):
        lane_heading = math.atan2(*(ll.centerline[1] - ll.centerline[0])[::-1])
        offset = abs(150.0 - 150.0) + abs(3.5 - ll.centerline[0, 1])
        mismatch = abs(math.remainder(math.pi - lane_heading, 2 * math.pi))
        scores[ll.id] = offset + 5.0 * mismatch
    assert min(scores, key=scores.get) == 1
    assert lmap.project((150.0, 3.5), math.pi).lanelet_id == 1
    assert lmap.project((150.0, 3.5), 0.0).lanelet_id == 2


def test_sample_path_keep_length(two_lane):
    path = two_lane.sample_path(LaneProjection(1, 10.0, 0.0, 0.0), "keep", 30.0)
    assert np.hypot(*np.diff(path, axis=0).T).sum() == pytest.approx(30.0, abs=0.01)
    np.testing.assert_allclose(path[:, 1], 5.25)


def test_sample_path_merge_endpoint(wz_map):
    start = wz_map.project((50.0, 1.75), 0.0)
    path = wz_map.sample_path(start, "merge_left", 60.0)
    assert abs(path[-1, 1] - 5.25) < 0.05
    with pytest.raises(InfeasibleStrategy):
        wz_map.sample_path(start, "merge_right", 60.0)
    with pytest.raises(InfeasibleStrategy):
        wz_map.sample_path(wz_map.project((350.0, 5.25), 0.0), "merge_right", 60.0)  # closed target


def test_projected_path_follows_blend(wz_map):
    start = wz_map.project((20.0, 1.75), 0.0)
    path = wz_map.sample_path(start, "merge_left", 60.0, merge_length=40.0)
    for k in range(0, len(path), 7):
        sigma = k * 60.0 / (len(path) - 1)
        u = min(sigma / 40.0, 1.0)
        expected_y = 1.75 + 3.5 * u * u * (3 - 2 * u)
        proj = wz_map.project(path[k], 0.0)
        lane_y = 1.75 if proj.lanelet_id == 2 else 5.25
        assert proj.lanelet_id == (2 if expected_y < 3.5 else 1)
        assert proj.lateral_offset == pytest.approx(expected_y - lane_y, abs=0.1)


def test_keep_relaxes_offset(wz_map):
    start = wz_map.project((20.0, 2.25), 0.0)
    path = wz_map.sample_path(start, "keep", 80.0)
    assert path[0, 1] == pytest.approx(2.25)
    assert path[-1, 1] == pytest.approx(1.75, abs=1e-9)
    assert path[-1, 0] == pytest.approx(100.0, abs=0.01)


def test_work_zone_layout(wz_map):
    assert [c for c in wz_map.lane_chains()] == [[1, 4, 5], [2, 3]]
    assert wz_map[3].closed and wz_map[2].taper_start_s == 300.0 and wz_map[2].taper_end_s == 480.0
    assert wz_map.distance_to_taper(2, 240.0) == pytest.approx(60.0)
    assert wz_map.distance_to_taper(1, 0.0) is None
