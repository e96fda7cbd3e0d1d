"""Uniform-grid spatial index with exact nearest-neighbour queries."""

import numpy as np

from . import _kernels
from .errors import ValidationError


class SpatialIndex:
    """Hash points into a uniform grid of cubic cells.

    Nearest-neighbour queries expand outward shell by shell and are exact
    (identical to brute force, ties to the lowest point id). Ball queries
    gather every point within a radius.
    """

    __slots__ = (
        "points",
        "cell_size",
        "_origin",
        "_dims",
        "_unique_keys",
        "_cell_starts",
        "_points_sorted",
        "_ids_sorted",
    )

    def __init__(self, points, cell_size=None):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValidationError(f"points must be (n, 3), got {points.shape}")
        if points.shape[0] == 0:
            raise ValidationError("cannot index an empty point set")
        if cell_size is None:
            lo, hi = points.min(axis=0), points.max(axis=0)
            extent = float(np.prod(np.maximum(hi - lo, 1e-9)))
            cell_size = 2.0 * (extent / points.shape[0]) ** (1.0 / 3.0)
        cell_size = float(cell_size)
        if not cell_size > 0 or not np.isfinite(cell_size):
            raise ValidationError(f"cell_size must be positive, got {cell_size}")

        origin = points.min(axis=0)
        dims = np.maximum(
            np.floor((points.max(axis=0) - origin) / cell_size).astype(np.int64) + 1, 1
        )
        cells = np.clip(
            np.floor((points - origin) / cell_size).astype(np.int64), 0, dims - 1
        )
        keys = (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]
        order = np.argsort(keys, kind="stable")  # ids stay ascending within a cell
        sorted_keys = keys[order]
        unique_keys, starts = np.unique(sorted_keys, return_index=True)
        cell_starts = np.append(starts, keys.shape[0]).astype(np.int64)

        self.points = points
        self.cell_size = cell_size
        self._origin = np.ascontiguousarray(origin)
        self._dims = np.ascontiguousarray(dims)
        self._unique_keys = np.ascontiguousarray(unique_keys, dtype=np.int64)
        self._cell_starts = np.ascontiguousarray(cell_starts)
        self._points_sorted = np.ascontiguousarray(points[order])
        self._ids_sorted = np.ascontiguousarray(order.astype(np.int64))

    @classmethod
    def for_mesh(cls, mesh, cell_size=None):
        """Index a mesh's vertices; default cell size = 2 x mean edge length."""
        if cell_size is None:
            cell_size = 2.0 * mesh.mean_edge_length()
        return cls(mesh.vertices, cell_size)

    @property
    def n_points(self):
        return self.points.shape[0]

    def nearest_batch(self, queries):
        """Nearest indexed point for each query row: (ids, distances)."""
        queries = np.ascontiguousarray(queries, dtype=np.float64)
        single = queries.ndim == 1
        queries = np.atleast_2d(queries)
        ids, d2 = _kernels.nearest_batch(
            queries,
            self._points_sorted,
            self._ids_sorted,
            self._unique_keys,
            self._cell_starts,
            self._origin,
            self.cell_size,
            self._dims,
        )
        dist = np.sqrt(d2)
        if single:
            return int(ids[0]), float(dist[0])
        return ids, dist

    def nearest(self, query):
        """Nearest indexed point: (id, distance)."""
        return self.nearest_batch(np.asarray(query, dtype=np.float64).reshape(3))

    def ball_pairs(self, queries, radius):
        """All (query row, point id) pairs within ``radius``.

        Returns (pair_query, pair_id, offsets): pairs grouped by query row
        with ids ascending inside each group; ``offsets`` is the CSR row
        pointer of length n_queries + 1.
        """
        queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
        nq = queries.shape[0]
        if radius <= 0:
            raise ValidationError("radius must be positive")
        dims = self._dims
        reach = int(np.ceil(radius / self.cell_size))
        qcells = np.floor((queries - self._origin) / self.cell_size).astype(np.int64)

        rng = np.arange(-reach, reach + 1, dtype=np.int64)
        offs = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)

        out_q = []
        out_id = []
        for off in offs:
            cc = qcells + off
            inb = np.all((cc >= 0) & (cc < dims), axis=1)
            rows = np.nonzero(inb)[0]
            if rows.size == 0:
                continue
            keys = (cc[rows, 0] * dims[1] + cc[rows, 1]) * dims[2] + cc[rows, 2]
            pos = np.searchsorted(self._unique_keys, keys)
            ok = (pos < self._unique_keys.shape[0]) & (
                self._unique_keys[np.minimum(pos, self._unique_keys.shape[0] - 1)] == keys
            )
            rows, pos = rows[ok], pos[ok]
            if rows.size == 0:
                continue
            starts = self._cell_starts[pos]
            lengths = self._cell_starts[pos + 1] - starts
            rep_rows = np.repeat(rows, lengths)
            flat = _expand_ranges(starts, lengths)
            diff = self._points_sorted[flat] - queries[rep_rows]
            d2 = np.einsum("ij,ij->i", diff, diff)
            keep = d2 <= radius * radius
            out_q.append(rep_rows[keep])
            out_id.append(self._ids_sorted[flat[keep]])

        if out_q:
            pair_q = np.concatenate(out_q)
            pair_id = np.concatenate(out_id)
            order = np.lexsort((pair_id, pair_q))
            pair_q = pair_q[order]
            pair_id = pair_id[order]
        else:
            pair_q = np.empty(0, dtype=np.int64)
            pair_id = np.empty(0, dtype=np.int64)
        counts = np.bincount(pair_q, minlength=nq)
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return pair_q, pair_id, offsets

    def ball(self, query, radius):
        """(ids, distances) of indexed points within ``radius`` of one query.

        Ids ascend; distances align with them.
        """
        query = np.asarray(query, dtype=np.float64).reshape(1, 3)
        _, ids, _ = self.ball_pairs(query, radius)
        distances = np.linalg.norm(self.points[ids] - query[0], axis=1)
        return ids, distances


def _expand_ranges(starts, lengths):
    """Concatenate arange(s, s+l) for each start/length pair."""
    total = int(lengths.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    ends = np.cumsum(lengths)
    out = np.ones(total, dtype=np.int64)
    out[0] = starts[0]
    out[ends[:-1]] = starts[1:] - (starts[:-1] + lengths[:-1] - 1)
    return np.cumsum(out)
