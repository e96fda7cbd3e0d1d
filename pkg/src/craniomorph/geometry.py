"""Planes and small geometric helpers shared across the pipeline."""

import numpy as np

from .errors import DegenerateGeometryError, ValidationError

_UNIT_TOL = 1e-6


class Plane:
    """Oriented plane ``{x : normal . x = offset}`` with a unit normal."""

    __slots__ = ("normal", "offset")

    def __init__(self, normal, offset):
        normal = np.asarray(normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(normal)
        if abs(norm - 1.0) > _UNIT_TOL:
            raise ValidationError(f"plane normal must be unit length, |n| = {norm:.8f}")
        object.__setattr__(self, "normal", normal / norm)
        object.__setattr__(self, "offset", float(offset))
        self.normal.setflags(write=False)

    def __setattr__(self, name, value):
        raise AttributeError("planes are immutable")

    @classmethod
    def from_point_normal(cls, point, normal):
        normal = np.asarray(normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            raise ValidationError("plane normal has zero length")
        normal = normal / norm
        return cls(normal, float(normal @ np.asarray(point, dtype=np.float64)))

    def signed_distance(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.normal - self.offset

    def reflect_points(self, points):
        points = np.asarray(points, dtype=np.float64)
        d = self.signed_distance(points)
        return points - 2.0 * np.multiply.outer(d, self.normal)

    def reflect_directions(self, directions):
        directions = np.asarray(directions, dtype=np.float64)
        return directions - 2.0 * np.multiply.outer(directions @ self.normal, self.normal)

    def flipped(self):
        return Plane(-self.normal, -self.offset)

    def __repr__(self):
        return f"Plane(normal={np.array2string(self.normal, precision=5)}, offset={self.offset:.5g})"


def best_fit_plane(points):
    """Total-least-squares plane through a point set.

    The normal is the direction of least variance (smallest principal
    component of the centred points). Raises DegenerateGeometryError for
    fewer than 3 points or collinear input.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValidationError("expected an (n, 3) point array")
    if pts.shape[0] < 3:
        raise DegenerateGeometryError("need at least 3 points to fit a plane")
    centroid = pts.mean(axis=0)
    centred = pts - centroid
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    if s[1] < 1e-12 * max(s[0], 1e-300):
        raise DegenerateGeometryError("points are collinear; plane is not unique")
    normal = vt[2]
    return Plane.from_point_normal(centroid, normal)


def normalized(vectors, axis=-1):
    """Unit-normalise vectors; raises on zero-length input."""
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=axis, keepdims=True)
    if np.any(norms < 1e-15):
        raise DegenerateGeometryError("cannot normalise a zero-length vector")
    return vectors / norms


def polar_angle_deg(points_yz):
    """Angle of sagittal points from the +z axis, anticlockwise toward +y.

    ``points_yz`` has columns (y, z); returns degrees in (-180, 180].
    """
    pts = np.atleast_2d(np.asarray(points_yz, dtype=np.float64))
    ang = np.degrees(np.arctan2(pts[:, 0], pts[:, 1]))
    return ang if ang.shape[0] > 1 else float(ang[0])
