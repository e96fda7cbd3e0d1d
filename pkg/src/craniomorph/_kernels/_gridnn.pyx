# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled grid nearest-neighbour kernel.

Expanding-shell search over a uniform grid: cells are visited in order of
Chebyshev cell distance r from the query's cell; once the best squared
distance is within (r * cell)^2 no unvisited cell can contain a closer
point. Ties break toward the lowest vertex id. Mirrors
``fallback.nearest_batch`` bit for bit.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


cdef inline Py_ssize_t _find_cell(const long long* keys, Py_ssize_t nkeys, long long key) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = nkeys, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < nkeys and keys[lo] == key:
        return lo
    return -1


def nearest_batch(
    cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] queries,
    cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] points_sorted,
    cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] ids_sorted,
    cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] unique_keys,
    cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] cell_starts,
    cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] origin,
    double cell,
    cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] dims,
):
    """Exact nearest neighbour for each query; returns (ids, squared distances)."""
    cdef Py_ssize_t q = queries.shape[0]
    cdef Py_ssize_t nkeys = unique_keys.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_id = np.empty(q, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_d2 = np.empty(q, dtype=np.float64)

    cdef const double* pts = <const double*> points_sorted.data
    cdef const long long* ids = <const long long*> ids_sorted.data
    cdef const long long* keys = <const long long*> unique_keys.data
    cdef const long long* starts = <const long long*> cell_starts.data
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef long long dx = dims[0], dy = dims[1], dz = dims[2]

    cdef Py_ssize_t i, j, ci
    cdef long long cx, cy, cz, r, rmax, ax, ay, az, chx, chy
    cdef long long ix, iy, iz, x0, x1, y0, y1, z0, z1, key
    cdef double qx, qy, qz, ddx, ddy, ddz, d2, best_d2, bound
    cdef long long best_id, pid
    cdef Py_ssize_t s, e

    with nogil:
        for i in range(q):
            qx = queries[i, 0]
            qy = queries[i, 1]
            qz = queries[i, 2]
            cx = <long long> ((qx - ox) / cell)
            cy = <long long> ((qy - oy) / cell)
            cz = <long long> ((qz - oz) / cell)
            if cx < 0: cx = 0
            if cy < 0: cy = 0
            if cz < 0: cz = 0
            if cx > dx - 1: cx = dx - 1
            if cy > dy - 1: cy = dy - 1
            if cz > dz - 1: cz = dz - 1
            ax = cx if cx > dx - 1 - cx else dx - 1 - cx
            ay = cy if cy > dy - 1 - cy else dy - 1 - cy
            az = cz if cz > dz - 1 - cz else dz - 1 - cz
            rmax = ax
            if ay > rmax: rmax = ay
            if az > rmax: rmax = az

            best_id = -1
            best_d2 = 1e300
            r = 0
            while True:
                x0 = cx - r
                x1 = cx + r
                if x0 < 0: x0 = 0
                if x1 > dx - 1: x1 = dx - 1
                for ix in range(x0, x1 + 1):
                    chx = ix - cx if ix >= cx else cx - ix
                    y0 = cy - r
                    y1 = cy + r
                    if y0 < 0: y0 = 0
                    if y1 > dy - 1: y1 = dy - 1
                    for iy in range(y0, y1 + 1):
                        chy = iy - cy if iy >= cy else cy - iy
                        z0 = cz - r
                        z1 = cz + r
                        if z0 < 0: z0 = 0
                        if z1 > dz - 1: z1 = dz - 1
                        for iz in range(z0, z1 + 1):
                            # Shell membership: Chebyshev distance exactly r.
                            if (iz - cz if iz >= cz else cz - iz) != r and chx != r and chy != r:
                                continue
                            key = (ix * dy + iy) * dz + iz
                            ci = _find_cell(keys, nkeys, key)
                            if ci < 0:
                                continue
                            s = <Py_ssize_t> starts[ci]
                            e = <Py_ssize_t> starts[ci + 1]
                            for j in range(s, e):
                                ddx = pts[3 * j] - qx
                                ddy = pts[3 * j + 1] - qy
                                ddz = pts[3 * j + 2] - qz
                                d2 = ddx * ddx + ddy * ddy + ddz * ddz
                                pid = ids[j]
                                if d2 < best_d2 or (d2 == best_d2 and pid < best_id):
                                    best_d2 = d2
                                    best_id = pid
                bound = (r * cell) * (r * cell)
                if best_id >= 0 and (best_d2 <= bound or r >= rmax):
                    break
                r += 1
            out_id[i] = best_id
            out_d2[i] = best_d2
    return out_id, out_d2
