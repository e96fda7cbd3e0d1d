"""Symmetry-plane estimation and profile extraction.

The global symmetry plane is found by registering a mirrored copy of the
head back onto itself with trimmed ICP and reading the fixed plane off the
composite reflect-then-register map. Local symmetry is tracked down the
face in horizontal strips, each aligned the same way using its vertical
neighbours for support. Profiles are the mesh/plane intersection curves.
"""

import numpy as np

from .errors import AlignmentError, DegenerateGeometryError, EmptyProfileError
from .geometry import Plane, normalized
from .icp import DEFAULT_TRIM_SCHEDULE, principal_axes_init, trimmed_icp
from .mesh import reflect_mesh
from .spatial import SpatialIndex

_MAX_COMPOSITE_ROTATION_DEG = 30.0
_MAX_NORMAL_TILT_DEG = 45.0


class SymmetryPlane:
    """A fitted symmetry plane with per-vertex correspondence distances."""

    __slots__ = ("plane", "correspondence_distance", "residual")

    def __init__(self, plane, correspondence_distance, residual):
        self.plane = plane
        self.correspondence_distance = np.asarray(correspondence_distance, dtype=np.float64)
        self.residual = float(residual)

    def __repr__(self):
        n = np.round(self.plane.normal, 4)
        return f"SymmetryPlane(normal={n}, residual={self.residual:.4g} mm)"


class LocalSymmetryStrips:
    """Strip-wise symmetry planes down the face.

    boundaries: (n_strips + 1,) y values, descending from nasion to pognion.
    planes: list of Plane, one per strip. inherited: boolean per strip, True
    where the strip had too few vertices and borrowed a neighbour's plane.
    """

    __slots__ = ("boundaries", "planes", "inherited")

    def __init__(self, boundaries, planes, inherited):
        self.boundaries = np.asarray(boundaries, dtype=np.float64)
        self.planes = list(planes)
        self.inherited = np.asarray(inherited, dtype=bool)

    @property
    def n_strips(self):
        return len(self.planes)


def _fixed_plane_of_reflection_registration(transform, reference_plane):
    """Fixed plane of (reflect across reference_plane, then apply transform).

    The composite map A x = R (M x) + t, with M the reflection, is an
    improper isometry. Its -1 eigenvector gives the symmetry-plane normal
    and the translation component along that normal, halved, gives the
    offset. The rotation left over after removing the pure reflection must
    be small for the plane to be meaningful; its angle is returned for the
    caller to gate on.
    """
    m = np.eye(3) - 2.0 * np.outer(reference_plane.normal, reference_plane.normal)
    a_rot = transform.rotation @ m
    a_tr = (
        transform.translation
        + 2.0 * float(reference_plane.offset) * (transform.rotation @ reference_plane.normal)
    )
    # Normal = eigenvector of a_rot for eigenvalue -1: null space of a_rot + I.
    _, s, vt = np.linalg.svd(a_rot + np.eye(3))
    normal = vt[-1]
    if normal @ reference_plane.normal < 0.0:
        normal = -normal
    offset = 0.5 * float(normal @ a_tr)
    # Residual proper rotation about an axis inside the plane.
    residual_rot = a_rot @ (np.eye(3) - 2.0 * np.outer(normal, normal))
    angle = np.degrees(
        np.arccos(np.clip(0.5 * (np.trace(residual_rot) - 1.0), -1.0, 1.0))
    )
    return Plane(normal, offset), float(angle), float(s[-1])


def global_symmetry_plane(mesh, trim_schedule=DEFAULT_TRIM_SCHEDULE, max_iters=30,
                          index=None):
    """Global symmetry plane of a head in coarse canonical pose.

    Mirrors the mesh across x = 0, registers the mirror image back onto the
    original with trimmed ICP, and extracts the fixed plane of the combined
    map. The correspondence distances of the final alignment are kept for
    asymmetry diagnostics (locally asymmetric regions show the largest
    values).
    """
    reference = Plane(np.array([1.0, 0.0, 0.0]), 0.0)
    mirrored = reflect_mesh(mesh, reference)
    if index is None:
        index = SpatialIndex(mesh.vertices)
    init = principal_axes_init(mirrored.vertices, mesh.vertices, index=index)
    result = trimmed_icp(
        mirrored, mesh, trim_schedule=trim_schedule, max_iters=max_iters,
        index=index, init=init,
    )
    plane, residual_angle, _ = _fixed_plane_of_reflection_registration(
        result.transform, reference
    )
    if residual_angle > _MAX_COMPOSITE_ROTATION_DEG:
        raise AlignmentError(
            f"reflection registration leaves a {residual_angle:.1f} degree rotation; "
            "the head has no usable symmetry plane in this pose"
        )
    tilt = np.degrees(np.arccos(np.clip(abs(plane.normal[0]), 0.0, 1.0)))
    if tilt > _MAX_NORMAL_TILT_DEG:
        raise AlignmentError(
            f"symmetry plane normal tilted {tilt:.1f} degrees from the x-axis"
        )
    moved = result.transform.apply(mirrored.vertices)
    _, dist = index.nearest_batch(moved)
    return SymmetryPlane(plane, dist, result.residual)


def _strip_plane(points, reference, trim_schedule, max_iters):
    mirrored_pts = reference.reflect_points(points)
    result = trimmed_icp(
        mirrored_pts, points, trim_schedule=trim_schedule, max_iters=max_iters
    )
    plane, residual_angle, _ = _fixed_plane_of_reflection_registration(
        result.transform, reference
    )
    if residual_angle > _MAX_COMPOSITE_ROTATION_DEG:
        raise AlignmentError(
            f"strip reflection registration leaves a {residual_angle:.1f} degree rotation"
        )
    return plane


def local_symmetry_contours(mesh, global_plane, nasion, pognion, strip_mm=20.0,
                            band_margin_mm=20.0, min_strip_vertices=30,
                            trim_schedule=DEFAULT_TRIM_SCHEDULE, max_iters=30):
    """Per-strip symmetry planes over the facial band.

    Expects the mesh already rotated so the global symmetry plane coincides
    with the Y-Z plane (x = 0). The face is cut into horizontal strips of
    ``strip_mm`` from nasion down to pognion; the plane for strip i is
    fitted on strips i-1, i, i+1 so contours vary smoothly. Only the facial
    band takes part: vertices with z > min(nasion.z, pognion.z) -
    band_margin_mm, which crops the back of the head. Strips with fewer
    than min_strip_vertices usable vertices inherit the nearest fitted
    plane and are flagged.
    """
    nasion = np.asarray(nasion, dtype=np.float64)
    pognion = np.asarray(pognion, dtype=np.float64)
    y_hi = float(nasion[1])
    y_lo = float(pognion[1])
    if y_hi <= y_lo:
        raise DegenerateGeometryError("nasion must lie above pognion")
    n_strips = max(int(np.ceil((y_hi - y_lo) / float(strip_mm))), 1)
    boundaries = y_hi - np.arange(n_strips + 1) * float(strip_mm)
    boundaries[-1] = min(boundaries[-1], y_lo)

    z_cut = min(nasion[2], pognion[2]) - float(band_margin_mm)
    band = mesh.vertices[:, 2] > z_cut
    y = mesh.vertices[:, 1]
    reference = global_plane.plane if isinstance(global_plane, SymmetryPlane) else global_plane

    strip_ids = []
    for i in range(n_strips):
        hi, lo = boundaries[i], boundaries[i + 1]
        inside = band & (y <= hi) & (y > lo) if i else band & (y <= hi + 1e-9) & (y > lo)
        strip_ids.append(np.nonzero(inside)[0])

    planes = [None] * n_strips
    inherited = np.zeros(n_strips, dtype=bool)
    for i in range(n_strips):
        lo_i = max(i - 1, 0)
        hi_i = min(i + 1, n_strips - 1)
        ids = np.concatenate(strip_ids[lo_i : hi_i + 1])
        if strip_ids[i].size >= min_strip_vertices and ids.size >= min_strip_vertices:
            planes[i] = _strip_plane(
                mesh.vertices[ids], reference, trim_schedule, max_iters
            )
    fitted = [i for i in range(n_strips) if planes[i] is not None]
    if not fitted:
        raise DegenerateGeometryError("no strip has enough vertices for a symmetry fit")
    for i in range(n_strips):
        if planes[i] is None:
            nearest = min(fitted, key=lambda j: abs(j - i))
            planes[i] = planes[nearest]
            inherited[i] = True
    return LocalSymmetryStrips(boundaries, planes, inherited)


def extract_profile_points(mesh, plane):
    """Intersection polyline of a mesh with a plane, as ordered 2D points.

    Every mesh edge whose endpoints lie on opposite sides contributes one
    linearly interpolated crossing. Points are expressed in in-plane
    coordinates (y', z'): the world y and z axes projected onto the plane
    and orthonormalised. Ordering is nearest-neighbour chaining from the
    lowest point, preferring the straightest continuation at junctions.
    """
    signed = plane.signed_distance(mesh.vertices)
    # Vertices exactly on the plane would kill the sign test on every edge
    # touching them; treat them as epsilon-positive so the crossing lands on
    # the vertex itself.
    signed = np.where(signed == 0.0, 1e-12, signed)
    edges = mesh.edges()
    sa = signed[edges[:, 0]]
    sb = signed[edges[:, 1]]
    crossing = (sa * sb) < 0.0
    if not crossing.any():
        raise EmptyProfileError("plane does not cross any mesh edge")
    a = mesh.vertices[edges[crossing, 0]]
    b = mesh.vertices[edges[crossing, 1]]
    t = (sa[crossing] / (sa[crossing] - sb[crossing]))[:, None]
    points = a + t * (b - a)
    key = np.round(points / 1e-9).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    points = points[np.sort(first)]

    n = plane.normal
    y_axis = np.array([0.0, 1.0, 0.0]) - n[1] * n
    ny = np.linalg.norm(y_axis)
    if ny < 1e-9:
        raise DegenerateGeometryError("plane is horizontal; no in-plane y axis")
    y_axis = y_axis / ny
    z_axis = np.array([0.0, 0.0, 1.0]) - n[2] * n
    z_axis = z_axis - (z_axis @ y_axis) * y_axis
    nz = np.linalg.norm(z_axis)
    if nz < 1e-9:
        z_axis = np.cross(n, y_axis)
    else:
        z_axis = z_axis / nz
    origin = plane.offset * n
    rel = points - origin
    coords = np.stack([rel @ y_axis, rel @ z_axis], axis=1)
    return _chain_points(coords)


def _chain_points(coords):
    """Order 2D points into one open polyline by greedy nearest-neighbour.

    Starts from the lowest point. Among the nearest unvisited candidates the
    continuation with the smallest turning angle wins, which keeps the chain
    from jumping across the curve at dense junctions.
    """
    n = coords.shape[0]
    if n == 1:
        return coords.copy()
    remaining = np.ones(n, dtype=bool)
    current = int(np.lexsort((coords[:, 1], coords[:, 0]))[0])
    order = [current]
    remaining[current] = False
    direction = None
    for _ in range(n - 1):
        idx = np.nonzero(remaining)[0]
        d = np.linalg.norm(coords[idx] - coords[current], axis=1)
        near = np.argsort(d, kind="stable")[: min(6, idx.size)]
        best = idx[near[0]]
        if direction is not None and near.size > 1:
            close = near[d[near] <= 1.5 * max(d[near[0]], 1e-12)]
            if close.size > 1:
                steps = coords[idx[close]] - coords[current]
                steps = normalized(steps)
                best = idx[close[int(np.argmax(steps @ direction))]]
        step = coords[best] - coords[current]
        norm = np.linalg.norm(step)
        if norm > 1e-12:
            direction = step / norm
        order.append(int(best))
        remaining[best] = False
        current = int(best)
    return coords[np.array(order)]
