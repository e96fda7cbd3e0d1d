"""Pure numpy twin of the compiled grid nearest-neighbour kernel.

Implements exactly the same expanding-shell search over a uniform grid as
``_gridnn.pyx``: candidates are scanned shell by shell in Chebyshev cell
distance, and the search stops once the best squared distance is within
``(r * cell)^2``, since any point in an unvisited cell lies at least
``r * cell`` away. Ties are broken toward the lowest vertex id. Arithmetic
matches the compiled kernel (float64, dx*dx + dy*dy + dz*dz), so both
backends return bit-identical results.
"""

import numpy as np

BACKEND = "python"


def _shell_offsets(r):
    """Integer offsets at Chebyshev distance exactly r (cached)."""
    if r == 0:
        return np.zeros((1, 3), dtype=np.int64)
    rng = np.arange(-r, r + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    cheb = np.abs(grid).max(axis=1)
    return grid[cheb == r]


_OFFSET_CACHE = {}


def _offsets(r):
    if r not in _OFFSET_CACHE:
        _OFFSET_CACHE[r] = _shell_offsets(r)
    return _OFFSET_CACHE[r]


def nearest_batch(queries, points_sorted, ids_sorted, unique_keys, cell_starts, origin, cell, dims):
    """Exact nearest neighbour for each query point.

    Parameters mirror the compiled kernel: ``points_sorted``/``ids_sorted``
    are the indexed points grouped by cell (ids ascending within a cell),
    ``unique_keys`` the sorted linear keys of occupied cells and
    ``cell_starts`` their CSR offsets.

    Returns (ids, squared distances).
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    q = queries.shape[0]
    best_id = np.full(q, -1, dtype=np.int64)
    best_d2 = np.full(q, np.inf, dtype=np.float64)

    qcells = np.floor((queries - origin) / cell).astype(np.int64)
    qcells = np.clip(qcells, 0, np.asarray(dims, dtype=np.int64) - 1)
    # Largest shell that can contain any occupied cell for each query.
    rmax = np.maximum(qcells, np.asarray(dims, dtype=np.int64) - 1 - qcells).max(axis=1)

    active = np.arange(q)
    r = 0
    while active.size:
        offs = _offsets(r)
        cells = qcells[active][:, None, :] + offs[None, :, :]
        inb = np.all((cells >= 0) & (cells < np.asarray(dims, dtype=np.int64)), axis=2)
        ai, oi = np.nonzero(inb)
        if ai.size:
            cc = cells[ai, oi]
            keys = (cc[:, 0] * dims[1] + cc[:, 1]) * dims[2] + cc[:, 2]
            pos = np.searchsorted(unique_keys, keys)
            found = (pos < unique_keys.shape[0]) & (unique_keys[np.minimum(pos, unique_keys.shape[0] - 1)] == keys)
            ai, pos = ai[found], pos[found]
            if ai.size:
                starts = cell_starts[pos]
                ends = cell_starts[pos + 1]
                lengths = ends - starts
                rows = np.repeat(ai, lengths)
                flat = np.concatenate([np.arange(s, e) for s, e in zip(starts, ends)])
                qidx = active[rows]
                diff = points_sorted[flat] - queries[qidx]
                d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
                cand_ids = ids_sorted[flat]
                # Reduce per query: smallest d2, then smallest id.
                order = np.lexsort((cand_ids, d2, qidx))
                qo = qidx[order]
                first = np.ones(qo.shape[0], dtype=bool)
                first[1:] = qo[1:] != qo[:-1]
                sel = order[first]
                win_q = qidx[sel]
                win_d2 = d2[sel]
                win_id = cand_ids[sel]
                better = (win_d2 < best_d2[win_q]) | (
                    (win_d2 == best_d2[win_q]) & (win_id < best_id[win_q])
                )
                upd = win_q[better]
                best_d2[upd] = win_d2[better]
                best_id[upd] = win_id[better]
        bound = (r * cell) ** 2
        done = (best_id[active] >= 0) & ((best_d2[active] <= bound) | (r >= rmax[active]))
        active = active[~done]
        r += 1
    return best_id, best_d2
