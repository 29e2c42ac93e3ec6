import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wzsentinel.geometry import OrientedBox, box_points, box_points_batch, min_box_distance, normalize_angle, rotate_point

finite = st.floats(-100, 100, allow_nan=False)
dims = st.floats(0, 20, allow_nan=False)
angles = st.floats(-10, 10, allow_nan=False)
boxes = st.builds(OrientedBox, finite, finite, angles, dims, dims)


def brute_force_distance(a, b):
    """Independent oracle: explicit corner/midpoint construction and a plain double loop."""

    def points(box):
        c, s = math.cos(box.heading), math.sin(box.heading)
        hl, hw = box.length / 2, box.width / 2
        local = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw), (hl, 0), (0, hw), (-hl, 0), (0, -hw)]
        return [(box.x + u * c - v * s, box.y + u * s + v * c) for u, v in local]

    best = math.inf
    for p in points(a):
        for q in points(b):
            best = min(best, math.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2))
    return best


def test_rotate_point_examples():
    assert rotate_point(1, 0, 0) == (1, 0)
    x, y = rotate_point(1, 0, math.pi / 2)
    assert x == pytest.approx(0, abs=1e-15) and y == pytest.approx(1)


@given(finite, finite)
def test_rotate_by_pi_reflects(u, v):
    x, y = rotate_point(u, v, math.pi)
    assert x == pytest.approx(-u, abs=1e-12) and y == pytest.approx(-v, abs=1e-12)


def test_normalize_angle_canonical_range():
    assert normalize_angle(-math.pi) == math.pi
    assert normalize_angle(math.pi) == math.pi
    assert normalize_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert normalize_angle(0.3) == 0.3


def test_axis_aligned_box_points():
    pts = box_points(OrientedBox(0, 0, 0, 4, 2))
    expected = {(2, 1), (-2, 1), (-2, -1), (2, -1), (2, 0), (0, 1), (-2, 0), (0, -1)}
    assert {tuple(np.round(p, 12) + 0.0) for p in pts} == expected


def test_rotated_box_corners():
    pts = box_points(OrientedBox(5, 0, math.pi / 2, 4, 2))
    corners = {tuple(np.round(p, 9) + 0.0) for p in pts[:4]}
    assert corners == {(4.0, 2.0), (6.0, 2.0), (4.0, -2.0), (6.0, -2.0)}


def test_degenerate_box_collapses():
    pts = box_points(OrientedBox(3, -1, 0.7, 0, 0))
    assert np.all(pts == [3, -1])


def test_negative_dimension_rejected():
    with pytest.raises(ValueError):
        OrientedBox(0, 0, 0, -1, 1)


@given(boxes)
def test_box_point_set_invariants(box):
    pts = box_points(box)
    assert pts.shape == (8, 2)
    np.testing.assert_allclose(pts[:4].mean(axis=0), [box.x, box.y], atol=1e-9)
    mirrored = 2 * np.array([box.x, box.y]) - pts
    for p in mirrored:
        assert np.min(np.hypot(*(pts - p).T)) < 1e-9


def test_min_distance_examples():
    assert min_box_distance(OrientedBox(0, 0, 0, 0, 0), OrientedBox(3, 4, 0, 0, 0)) == 5.0
    assert min_box_distance(OrientedBox(0, 0, 0, 4, 2), OrientedBox(5, 0, 0, 4, 2)) == pytest.approx(1.0)
    b = OrientedBox(1, 2, 0.3, 4, 2)
    assert min_box_distance(b, b) == 0.0


@settings(max_examples=200)
@given(boxes, boxes)
def test_min_distance_matches_oracle_and_is_symmetric(a, b):
    d = min_box_distance(a, b)
    assert d == min_box_distance(b, a)
    assert d == pytest.approx(brute_force_distance(a, b), abs=1e-9)
    assert d >= 0


@given(boxes, boxes, angles, finite, finite)
def test_rigid_motion_invariance(a, b, phi, tx, ty):
    def move(box):
        x, y = rotate_point(box.x, box.y, phi)
        return OrientedBox(x + tx, y + ty, box.heading + phi, box.length, box.width)

    assert min_box_distance(move(a), move(b)) == pytest.approx(min_box_distance(a, b), abs=1e-9)


def test_batch_matches_single():
    rng = np.random.default_rng(0)
    x, y, h = rng.normal(size=(3, 5))
    L, W = rng.uniform(0, 10, size=(2, 5))
    batch = box_points_batch(x, y, h, L, W)
    for i in range(5):
        np.testing.assert_allclose(batch[i], box_points(OrientedBox(x[i], y[i], h[i], L[i], W[i])), atol=1e-12)


def test_overlapping_boxes_can_report_positive_distance():
    # point-set distance, not polygon distance: a crossing "plus" shape never shares a sample point
    a = OrientedBox(0, 0, 0, 10, 1)
    b = OrientedBox(0.3, 0, math.pi / 2, 10, 1)
    assert min_box_distance(a, b) > 0
