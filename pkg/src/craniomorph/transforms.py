"""Rigid and similarity transforms plus least-squares estimation.

Transforms act on row-stacked point arrays as ``scale * points @ R.T + t``.
Composition order matches function composition: ``a.compose(b)`` applies ``b``
first, then ``a``.
"""

import numpy as np

from .errors import DegenerateGeometryError, ValidationError

_ORTHO_TOL = 1e-9


def _check_rotation(rotation, tol=_ORTHO_TOL):
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.ndim != 2 or rotation.shape[0] != rotation.shape[1]:
        raise ValidationError(f"rotation must be square, got shape {rotation.shape}")
    d = rotation.shape[0]
    err = np.abs(rotation @ rotation.T - np.eye(d)).max()
    if err > tol:
        raise ValidationError(f"rotation is not orthonormal (max deviation {err:.3e})")
    if np.linalg.det(rotation) < 0:
        raise ValidationError("rotation has determinant -1 (reflection)")
    return rotation


class SimilarityTransform:
    """Orientation-preserving similarity: ``x -> scale * R x + t``."""

    __slots__ = ("rotation", "translation", "scale")

    def __init__(self, rotation, translation, scale=1.0):
        rotation = _check_rotation(rotation)
        translation = np.asarray(translation, dtype=np.float64).reshape(-1)
        if translation.shape[0] != rotation.shape[0]:
            raise ValidationError("translation dimension does not match rotation")
        scale = float(scale)
        if not scale > 0.0 or not np.isfinite(scale):
            raise ValidationError(f"scale must be positive and finite, got {scale}")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "scale", scale)
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)

    def __setattr__(self, name, value):
        raise AttributeError("transforms are immutable")

    @property
    def dim(self):
        return self.rotation.shape[0]

    @classmethod
    def identity(cls, dim=3):
        return cls(np.eye(dim), np.zeros(dim), 1.0)

    def apply(self, points):
        """Transform one point (d,) or a stack (n, d)."""
        points = np.asarray(points, dtype=np.float64)
        return self.scale * points @ self.rotation.T + self.translation

    def apply_direction(self, directions):
        """Rotate direction vectors (no translation, no scale)."""
        directions = np.asarray(directions, dtype=np.float64)
        return directions @ self.rotation.T

    def compose(self, other):
        """Return the transform equivalent to applying ``other`` then ``self``."""
        rotation = self.rotation @ other.rotation
        translation = self.scale * other.translation @ self.rotation.T + self.translation
        scale = self.scale * other.scale
        cls = SimilarityTransform
        if isinstance(self, RigidTransform) and isinstance(other, RigidTransform):
            cls = RigidTransform
            return cls(rotation, translation)
        return cls(rotation, translation, scale)

    def inverse(self):
        rotation = self.rotation.T
        scale = 1.0 / self.scale
        translation = -scale * self.translation @ self.rotation
        if isinstance(self, RigidTransform):
            return RigidTransform(rotation, translation)
        return SimilarityTransform(rotation, translation, scale)

    def matrix(self):
        """Homogeneous (d+1, d+1) matrix."""
        d = self.dim
        m = np.eye(d + 1)
        m[:d, :d] = self.scale * self.rotation
        m[:d, d] = self.translation
        return m

    def __repr__(self):
        return (
            f"{type(self).__name__}(scale={self.scale:.6g}, "
            f"translation={np.array2string(self.translation, precision=4)})"
        )


class RigidTransform(SimilarityTransform):
    """Similarity transform with scale fixed at 1."""

    def __init__(self, rotation, translation):
        super().__init__(rotation, translation, 1.0)


def rotation_about_axis(axis, angle):
    """Rodrigues rotation matrix about a unit-normalised 3D axis (radians)."""
    axis = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ValidationError("rotation axis has zero length")
    x, y, z = axis / norm
    c, s = np.cos(angle), np.sin(angle)
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def rotation_2d(angle):
    """Anticlockwise 2D rotation matrix (radians)."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotation_between_vectors(a, b):
    """Smallest 3D rotation taking direction ``a`` onto direction ``b``."""
    a = np.asarray(a, dtype=np.float64).reshape(3)
    b = np.asarray(b, dtype=np.float64).reshape(3)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        raise ValidationError("cannot rotate a zero-length vector")
    a, b = a / na, b / nb
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    s = np.linalg.norm(v)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        # Opposite directions: rotate pi about any axis orthogonal to a.
        helper = np.array([1.0, 0.0, 0.0])
        if abs(a[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        axis = np.cross(a, helper)
        return rotation_about_axis(axis, np.pi)
    return rotation_about_axis(v / s, np.arctan2(s, c))


def similarity_from_correspondences(source, target, with_scale=True):
    """Least-squares similarity (or rigid) transform mapping source to target.

    Umeyama's closed-form solution with the determinant sign fix, valid in any
    dimension. Raises DegenerateGeometryError when the source points do not
    span enough directions to determine a rotation (all coincident or, in 3D,
    collinear with an ambiguous axis).

    Parameters
    ----------
    source, target : (n, d) arrays
        Paired points, n >= d.
    with_scale : bool
        Estimate a global scale; otherwise the result is rigid.

    Returns
    -------
    SimilarityTransform or RigidTransform
    """
    src = np.asarray(source, dtype=np.float64)
    dst = np.asarray(target, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2:
        raise ValidationError("source and target must be matching (n, d) arrays")
    n, d = src.shape
    if n < d:
        raise ValidationError(f"need at least {d} correspondences, got {n}")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    src_c = src - mu_s
    dst_c = dst - mu_d
    var_s = (src_c**2).sum() / n
    if var_s < 1e-24:
        raise DegenerateGeometryError("source points are coincident")

    cov = dst_c.T @ src_c / n
    u, s, vt = np.linalg.svd(cov)
    sign = np.ones(d)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[-1] = -1.0
    if d >= 2 and s[-2] < 1e-12 * max(s[0], 1e-300):
        raise DegenerateGeometryError("correspondences are rank-deficient (collinear)")
    rotation = u @ np.diag(sign) @ vt

    if with_scale:
        scale = float((s * sign).sum() / var_s)
        if not scale > 0:
            raise DegenerateGeometryError("estimated scale is not positive")
        transform = SimilarityTransform(rotation, np.zeros(d), scale)
    else:
        transform = RigidTransform(rotation, np.zeros(d))
    translation = mu_d - transform.scale * mu_s @ rotation.T
    if with_scale:
        return SimilarityTransform(rotation, translation, transform.scale)
    return RigidTransform(rotation, translation)


def rigid_from_correspondences(source, target):
    """Least-squares rigid transform (scale fixed at 1)."""
    return similarity_from_correspondences(source, target, with_scale=False)
