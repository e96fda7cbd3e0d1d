"""Triangle mesh type and the plane/pose operations built on it.

Meshes are immutable: vertex, face and normal arrays are set read-only at
construction and every operation returns a new mesh, so they are safe to
share across worker processes.
"""

import numpy as np

from .errors import DegenerateGeometryError, StageError, ValidationError
from .geometry import Plane

_NORMAL_TOL = 1e-6


def compute_vertex_normals(vertices, faces):
    """Area-weighted per-vertex normals.

    Each face contributes its (un-normalised) cross product, whose magnitude
    is twice the face area, to its three corners; the sums are then unit
    normalised. Vertices with no face support (or cancelling faces) raise,
    since downstream descriptors require a usable normal everywhere.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    face_n = np.cross(b - a, c - a)
    normals = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(normals, faces[:, k], face_n)
    norms = np.linalg.norm(normals, axis=1)
    bad = norms < 1e-12
    if np.any(bad):
        raise DegenerateGeometryError(
            f"{int(bad.sum())} vertices have no usable normal "
            "(isolated or with cancelling faces)"
        )
    return normals / norms[:, None]


class TriMesh:
    """Triangle mesh: vertices (mm), faces, outward unit vertex normals."""

    __slots__ = ("vertices", "faces", "normals", "_edges")

    def __init__(self, vertices, faces, normals=None):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValidationError(f"vertices must be (n, 3), got {vertices.shape}")
        if vertices.shape[0] == 0:
            raise ValidationError("mesh has no vertices")
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValidationError(f"faces must be (m, 3), got {faces.shape}")
        if not np.all(np.isfinite(vertices)):
            raise ValidationError("vertices contain non-finite values")
        if faces.shape[0]:
            if faces.min() < 0 or faces.max() >= vertices.shape[0]:
                raise ValidationError("face indices out of range")
            degenerate = (
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 0] == faces[:, 2])
            )
            if np.any(degenerate):
                raise ValidationError(
                    f"{int(degenerate.sum())} degenerate faces (repeated vertex index)"
                )
        if normals is None:
            if faces.shape[0] == 0:
                raise ValidationError("cannot compute normals for a mesh without faces")
            normals = compute_vertex_normals(vertices, faces)
        else:
            normals = np.ascontiguousarray(normals, dtype=np.float64)
            if normals.shape != vertices.shape:
                raise ValidationError("normals shape must match vertices")
            err = np.abs(np.linalg.norm(normals, axis=1) - 1.0).max()
            if err > _NORMAL_TOL:
                raise ValidationError(
                    f"normals must be unit length (max deviation {err:.2e})"
                )
        for arr in (vertices, faces, normals):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "_edges", None)

    def __setattr__(self, name, value):
        raise AttributeError("meshes are immutable")

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def edges(self):
        """Unique undirected edges as an (e, 2) array, lexicographically sorted."""
        if self._edges is None:
            f = self.faces
            pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
            pairs = np.sort(pairs, axis=1)
            object.__setattr__(self, "_edges", np.unique(pairs, axis=0))
        return self._edges

    def mean_edge_length(self):
        e = self.edges()
        if e.shape[0] == 0:
            raise DegenerateGeometryError("mesh has no edges")
        d = np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)
        return float(d.mean())

    def boundary_vertex_mask(self):
        """True for vertices on edges used by exactly one face."""
        f = self.faces
        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        uniq, counts = np.unique(pairs, axis=0, return_counts=True)
        mask = np.zeros(self.n_vertices, dtype=bool)
        rim = uniq[counts == 1]
        mask[rim.ravel()] = True
        return mask

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def __repr__(self):
        return f"TriMesh({self.n_vertices} vertices, {self.n_faces} faces)"


def transform_mesh(mesh, transform):
    """Apply a rigid/similarity transform; normals are rotated only."""
    return TriMesh(
        transform.apply(mesh.vertices),
        mesh.faces,
        transform.apply_direction(mesh.normals),
    )


def reflect_mesh(mesh, plane):
    """Mirror a mesh across a plane.

    Face winding is flipped so that normals stay outward; vertex normals are
    reflected as directions.
    """
    vertices = plane.reflect_points(mesh.vertices)
    normals = plane.reflect_directions(mesh.normals)
    faces = mesh.faces[:, ::-1]
    return TriMesh(vertices, faces, normals)


def submesh(mesh, keep_mask):
    """Restrict a mesh to the vertices where keep_mask is True.

    Faces with any dropped corner are removed; indices are compacted. Kept
    vertices retain their original normals. Returns (mesh, old_vertex_ids).
    """
    keep_mask = np.asarray(keep_mask, dtype=bool)
    if keep_mask.shape != (mesh.n_vertices,):
        raise ValidationError("keep_mask must have one entry per vertex")
    if not keep_mask.any():
        raise StageError("submesh would be empty")
    old_ids = np.nonzero(keep_mask)[0]
    remap = -np.ones(mesh.n_vertices, dtype=np.int64)
    remap[old_ids] = np.arange(old_ids.shape[0])
    face_keep = keep_mask[mesh.faces].all(axis=1)
    faces = remap[mesh.faces[face_keep]]
    return TriMesh(mesh.vertices[old_ids], faces, mesh.normals[old_ids]), old_ids


def crop_below_plane(mesh, nasion, chin, angle_deg=40.0, offset_fraction=0.3):
    """Remove the neck side of a canonically posed head.

    The cutting plane is anchored offset_fraction x |nasion - chin| below the
    chin (along -y) and tilted angle_deg in the Y-Z plane so that it drops
    toward the back of the head; vertices below it are removed. With angle 0
    the plane is horizontal.
    """
    nasion = np.asarray(nasion, dtype=np.float64).reshape(3)
    chin = np.asarray(chin, dtype=np.float64).reshape(3)
    face_length = np.linalg.norm(nasion - chin)
    if face_length < 1e-9:
        raise ValidationError("nasion and chin coincide")
    anchor = chin - np.array([0.0, offset_fraction * face_length, 0.0])
    theta = np.radians(angle_deg)
    normal = np.array([0.0, np.cos(theta), np.sin(theta)])
    plane = Plane.from_point_normal(anchor, normal)
    keep = plane.signed_distance(mesh.vertices) >= 0.0
    if not keep.any():
        raise StageError("cropping plane removed every vertex")
    cropped, _ = submesh(mesh, keep)
    return cropped
