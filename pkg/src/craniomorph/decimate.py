"""Quadric-error edge-collapse decimation.

Deterministic: the collapse queue orders by (cost, lower vertex id, higher
vertex id) and all neighbourhood iteration is over sorted ids, so repeated
runs produce identical meshes. Non-manifold or fold-inducing collapses are
skipped rather than forced.
"""

import heapq
import warnings

import numpy as np

from .errors import ValidationError
from .mesh import TriMesh


def _face_quadric(a, b, c):
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    n = n / norm
    p = np.array([n[0], n[1], n[2], -float(n @ a)])
    return np.outer(p, p)


def _optimal_position(q, pu, pv):
    a = q[:3, :3]
    b = q[:3, 3]
    scale = np.abs(a).max()
    if scale > 0 and abs(np.linalg.det(a)) > 1e-10 * scale**3:
        try:
            pos = np.linalg.solve(a, -b)
        except np.linalg.LinAlgError:
            pos = None
        if pos is not None and np.all(np.isfinite(pos)):
            return pos
    candidates = (pu, pv, 0.5 * (pu + pv))
    costs = [_quadric_cost(q, p) for p in candidates]
    return candidates[int(np.argmin(costs))]


def _quadric_cost(q, p):
    h = np.array([p[0], p[1], p[2], 1.0])
    return max(float(h @ q @ h), 0.0)


def decimate(mesh, target_fraction):
    """Collapse lowest-cost edges until the vertex count reaches the target.

    Parameters
    ----------
    mesh : TriMesh
    target_fraction : float in (0, 1]
        Fraction of vertices to keep; 1.0 returns the mesh unchanged.

    Returns
    -------
    TriMesh
        Decimated mesh with recomputed normals. If topology constraints stop
        the collapse early a RuntimeWarning is issued and the best achievable
        mesh is returned.
    """
    if not 0.0 < target_fraction <= 1.0:
        raise ValidationError(f"target_fraction must be in (0, 1], got {target_fraction}")
    if target_fraction == 1.0:
        return mesh

    n = mesh.n_vertices
    target = max(4, int(round(target_fraction * n)))
    verts = mesh.vertices.copy()
    faces = mesh.faces.copy()

    quadrics = np.zeros((n, 4, 4))
    vertex_faces = [set() for _ in range(n)]
    face_alive = np.ones(faces.shape[0], dtype=bool)
    for fi, (a, b, c) in enumerate(faces):
        k = _face_quadric(verts[a], verts[b], verts[c])
        if k is not None:
            quadrics[a] += k
            quadrics[b] += k
            quadrics[c] += k
        for vid in (a, b, c):
            vertex_faces[vid].add(fi)

    alive = np.ones(n, dtype=bool)
    version = np.zeros(n, dtype=np.int64)
    serial = 0
    heap = []

    def neighbours(u):
        out = set()
        for fi in vertex_faces[u]:
            if face_alive[fi]:
                out.update(int(x) for x in faces[fi])
        out.discard(u)
        return out

    def push_edge(u, v):
        nonlocal serial
        if u > v:
            u, v = v, u
        q = quadrics[u] + quadrics[v]
        pos = _optimal_position(q, verts[u], verts[v])
        cost = _quadric_cost(q, pos)
        serial += 1
        heapq.heappush(heap, (cost, u, v, int(version[u]), int(version[v]), serial, pos))

    for u, v in mesh.edges():
        push_edge(int(u), int(v))

    count = n
    while count > target and heap:
        cost, u, v, ver_u, ver_v, _, pos = heapq.heappop(heap)
        if not (alive[u] and alive[v]):
            continue
        if ver_u != version[u] or ver_v != version[v]:
            continue

        shared = sorted(f for f in (vertex_faces[u] & vertex_faces[v]) if face_alive[f])
        if not 1 <= len(shared) <= 2:
            continue
        opposite = set()
        for fi in shared:
            for vid in faces[fi]:
                if vid != u and vid != v:
                    opposite.add(int(vid))
        if (neighbours(u) & neighbours(v)) != opposite:
            continue  # collapse would pinch the surface

        # Reject collapses that flip any surviving face.
        flip = False
        moved = {u: pos, v: pos}
        for fi in sorted((vertex_faces[u] | vertex_faces[v]) - set(shared)):
            if not face_alive[fi]:
                continue
            a, b, c = (int(x) for x in faces[fi])
            old_n = np.cross(verts[b] - verts[a], verts[c] - verts[a])
            pa = moved.get(a, verts[a])
            pb = moved.get(b, verts[b])
            pc = moved.get(c, verts[c])
            new_n = np.cross(pb - pa, pc - pa)
            if float(old_n @ new_n) <= 1e-12:
                flip = True
                break
        if flip:
            continue

        # Commit: v merges into u at the optimal position.
        verts[u] = pos
        alive[v] = False
        version[u] += 1
        version[v] += 1
        quadrics[u] = quadrics[u] + quadrics[v]
        for fi in shared:
            face_alive[fi] = False
            for vid in faces[fi]:
                vertex_faces[int(vid)].discard(fi)
        for fi in sorted(vertex_faces[v]):
            if not face_alive[fi]:
                continue
            faces[fi] = [u if int(x) == v else int(x) for x in faces[fi]]
            vertex_faces[u].add(fi)
        vertex_faces[v].clear()
        count -= 1
        for w in sorted(neighbours(u)):
            push_edge(u, int(w))

    if count > target:
        warnings.warn(
            f"decimation stopped at {count} vertices; topology constraints "
            f"prevented reaching the target of {target}",
            RuntimeWarning,
        )

    keep_faces = faces[face_alive]
    referenced = np.zeros(n, dtype=bool)
    referenced[keep_faces.ravel()] = True
    keep = alive & referenced
    remap = -np.ones(n, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    return TriMesh(verts[keep], remap[keep_faces])
