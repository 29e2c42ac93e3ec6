"""Vehicle footprint geometry.

A vehicle footprint is an oriented rectangle sampled at eight boundary
points (four corners, four edge midpoints). The separation between two
vehicles is the smallest Euclidean distance between any pair of those
sampled points, which collapses to the centre distance when the
footprints have zero size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Order: corners counter-clockwise from front-left, then edge midpoints
# front, left, rear, right.  Scaled by (length / 2, width / 2).
_UNIT_OFFSETS = np.array(
    [
        [1.0, 1.0],
        [-1.0, 1.0],
        [-1.0, -1.0],
        [1.0, -1.0],
        [1.0, 0.0],
        [0.0, 1.0],
        [-1.0, 0.0],
        [0.0, -1.0],
    ]
)


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]; -pi itself maps to +pi."""
    if -math.pi < angle <= math.pi:
        return float(angle)
    wrapped = math.atan2(math.sin(angle), math.cos(angle))
    if wrapped <= -math.pi:
        wrapped = math.pi
    return wrapped


def rotate_point(u: float, v: float, psi: float) -> tuple[float, float]:
    """Rotate the local offset (u, v) by heading ``psi``."""
    c, s = math.cos(psi), math.sin(psi)
    return u * c - v * s, u * s + v * c


@dataclass(frozen=True)
class OrientedBox:
    """Rectangular vehicle footprint.

    Attributes:
        x, y: centre position in metres.
        heading: yaw in radians, stored wrapped to (-pi, pi].
        length, width: footprint dimensions in metres (zero allowed).
    """

    x: float
    y: float
    heading: float
    length: float
    width: float

    def __post_init__(self):
        if not (self.length >= 0 and self.width >= 0):
            raise ValueError(f"box dimensions must be non-negative, got {self.length}x{self.width}")
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    @property
    def center(self) -> tuple[float, float]:
        return (self.x, self.y)


def local_offsets(length: float, width: float) -> np.ndarray:
    """The 8 vehicle-frame sample points, shape (8, 2)."""
    return _UNIT_OFFSETS * np.array([length / 2.0, width / 2.0])


def box_points(box: OrientedBox) -> np.ndarray:
    """Global-frame sample points of ``box``.

    Returns an (8, 2) array: rows 0-3 are the corners, rows 4-7 the edge
    midpoints, all rotated by the box heading and shifted to its centre.
    """
    c, s = math.cos(box.heading), math.sin(box.heading)
    rot = np.array([[c, -s], [s, c]])
    return local_offsets(box.length, box.width) @ rot.T + np.array([box.x, box.y])


def box_points_batch(x, y, heading, length, width) -> np.ndarray:
    """Vectorised :func:`box_points` over broadcastable arrays.

    Returns an array of shape ``broadcast_shape + (8, 2)``.
    """
    x, y, heading, length, width = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (x, y, heading, length, width))
    )
    u = _UNIT_OFFSETS[:, 0] * (length[..., None] / 2.0)
    v = _UNIT_OFFSETS[:, 1] * (width[..., None] / 2.0)
    c = np.cos(heading)[..., None]
    s = np.sin(heading)[..., None]
    gx = x[..., None] + u * c - v * s
    gy = y[..., None] + u * s + v * c
    return np.stack([gx, gy], axis=-1)


def point_set_distance(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """Minimum pairwise distance between two point sets.

    ``pa`` has shape (..., P, 2) and ``pb`` (..., Q, 2) with broadcastable
    leading axes; the result drops the last two axes.
    """
    diff = pa[..., :, None, :] - pb[..., None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    return d.min(axis=(-2, -1))


def min_box_distance(a: OrientedBox, b: OrientedBox) -> float:
    """Smallest distance between the sampled points of two footprints.

    This is a point-set distance, not a polygon distance: overlapping
    boxes usually report a positive value.
    """
    return float(point_set_distance(box_points(a), box_points(b)))
