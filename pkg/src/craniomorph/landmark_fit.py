"""Fitting a sparse landmark model to a scan.

Score maps rank every vertex per scoring group; local maxima become
candidates; triplets of candidates vote for a similarity pose of the
configural model, and the pose with the widest candidate consensus wins.
"""

import dataclasses

import numpy as np

from . import anatomy
from .errors import FitFailureError, ValidationError
from .sparse_model import rms_size
from .spatial import SpatialIndex
from .spin import spin_images
from .transforms import similarity_from_correspondences

_MIN_TRIPLET_ANGLE_DEG = 10.0
_DEFAULT_BUDGET = 20000
_CONSENSUS_RADIUS = 15.0
_MIN_CONSENSUS = 5


def score_map(model, mesh, index=None):
    """Per-group vertex scores, shape (n_groups, n_vertices).

    The scan is rescaled to the model's reference size before descriptor
    extraction. Vertices with no in-support neighbours score NaN.
    """
    from .sparse_model import _scaled_mesh

    factor = model.reference_size / rms_size(mesh.vertices)
    scaled = _scaled_mesh(mesh, factor)
    if index is None:
        index = SpatialIndex.for_mesh(scaled)
    descriptors = spin_images(scaled, model.spin_params, index=index)
    flat = descriptors.reshape(descriptors.shape[0], -1)
    empty = flat.sum(axis=1) == 0.0
    features = model.compressor.compress(flat)
    scores = np.empty((len(model.scoring), mesh.n_vertices))
    for g, fn in enumerate(model.scoring):
        scores[g] = fn.score(features)
    scores[:, empty] = np.nan
    return scores


def _vertex_adjacency(mesh):
    """CSR 1-ring adjacency (neighbour_ids, offsets)."""
    e = mesh.edges()
    both = np.concatenate([e, e[:, ::-1]], axis=0)
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    counts = np.bincount(both[:, 0], minlength=mesh.n_vertices)
    offsets = np.zeros(mesh.n_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return both[:, 1].copy(), offsets


def candidate_maxima(scores, mesh, k=10):
    """Top-k local maxima vertex ids per scoring group.

    A vertex is a local maximum when its score is defined and not below
    any 1-ring neighbour's (NaN neighbours do not block). Ties in score
    break towards the lower vertex id.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != mesh.n_vertices:
        raise ValidationError("scores must be (n_groups, n_vertices)")
    neighbours, offsets = _vertex_adjacency(mesh)
    counts = np.diff(offsets)
    rows = np.repeat(np.arange(mesh.n_vertices), counts)
    out = []
    for row_scores in scores:
        filled = np.where(np.isnan(row_scores), -np.inf, row_scores)
        best_neighbour = np.full(mesh.n_vertices, -np.inf)
        np.maximum.at(best_neighbour, rows, filled[neighbours])
        is_max = np.isfinite(row_scores) & (filled >= best_neighbour)
        ids = np.nonzero(is_max)[0]
        order = np.lexsort((ids, -row_scores[ids]))
        out.append(ids[order[:k]].astype(np.int64))
    return out


@dataclasses.dataclass(frozen=True)
class LandmarkFit:
    """Result of fitting a sparse model to a scan."""

    vertex_ids: np.ndarray    # (14,) snapped vertex per landmark
    positions: np.ndarray     # (14, 3) snapped positions in scan coordinates
    scores: np.ndarray        # (14,) scoring value at each snapped vertex
    pose: object              # SimilarityTransform, scan -> canonical frame
    consensus: int            # supporting candidate roles (3 seed + others)

    def position_of(self, name):
        return self.positions[anatomy.LANDMARK_IDS[name] - 1]


def _role_triples(config_positions):
    """All landmark-role triples whose canonical triangle is well shaped."""
    n = config_positions.shape[0]
    triples = []
    for a in range(n):
        for b in range(a + 1, n):
            for c in range(b + 1, n):
                p = config_positions[[a, b, c]]
                e = np.array([p[1] - p[0], p[2] - p[1], p[0] - p[2]])
                lengths = np.linalg.norm(e, axis=1)
                if lengths.min() < 1e-9:
                    continue
                # Smallest interior angle from the law of cosines.
                cosines = []
                for i in range(3):
                    u = e[i] / lengths[i]
                    v = -e[(i + 2) % 3] / lengths[(i + 2) % 3]
                    cosines.append(np.clip(u @ v, -1.0, 1.0))
                min_angle = np.degrees(np.arccos(np.max(cosines)))
                if min_angle >= _MIN_TRIPLET_ANGLE_DEG:
                    triples.append((a, b, c))
    return np.array(triples, dtype=np.int64)


def _batched_similarity(src, dst):
    """Umeyama similarity for stacked correspondences (b, m, 3) -> (b, m, 3).

    Returns (scale, rotation, translation, valid) with valid False where the
    source or target triangle is degenerate.
    """
    mu_s = src.mean(axis=1, keepdims=True)
    mu_d = dst.mean(axis=1, keepdims=True)
    cs = src - mu_s
    cd = dst - mu_d
    m = src.shape[1]
    cov = np.einsum("bmi,bmj->bij", cd, cs) / m
    u, s, vt = np.linalg.svd(cov)
    det = np.linalg.det(u) * np.linalg.det(vt)
    sign = np.ones_like(s)
    sign[:, -1] = np.sign(det) + (det == 0)
    rot = np.einsum("bij,bj,bjk->bik", u, sign, vt)
    var_s = np.einsum("bmi,bmi->b", cs, cs) / m
    valid = (var_s > 1e-12) & (s[:, 1] > 1e-9 * np.maximum(s[:, 0], 1e-300))
    scale = np.einsum("bj,bj->b", s, sign) / np.where(var_s > 0, var_s, 1.0)
    valid &= scale > 1e-12
    safe_scale = np.where(valid, scale, 1.0)
    trans = mu_d[:, 0, :] - safe_scale[:, None] * np.einsum("bij,bj->bi", rot, mu_s[:, 0, :])
    return safe_scale, rot, trans, valid


def fit_sparse_model(model, mesh, candidates=None, k_candidates=10,
                     budget=_DEFAULT_BUDGET, consensus_radius=_CONSENSUS_RADIUS,
                     min_consensus=_MIN_CONSENSUS, seed_k=10, index=None):
    """Locate all 14 landmarks on a scan.

    Parameters
    ----------
    model : SparseModel
    mesh : TriMesh
    candidates : list of 10 int arrays, optional
        Candidate vertex ids per scoring group; computed from the score
        map when omitted. Lists must be score-ordered, best first.
    budget : int
        Maximum number of candidate triplets evaluated; the best-scoring
        triplets are kept when the enumeration exceeds it.
    seed_k : int
        Only the first ``seed_k`` candidates per role seed triplets; the
        full lists still vote in the consensus and refit stages.

    Returns
    -------
    LandmarkFit
    """
    config = model.config.positions
    scores = None
    if candidates is None:
        scores = score_map(model, mesh)
        candidates = candidate_maxima(scores, mesh, k=k_candidates)
    if len(candidates) != len(anatomy.SCORING_GROUPS):
        raise ValidationError("one candidate list per scoring group required")
    candidates = [np.asarray(c, dtype=np.int64).reshape(-1) for c in candidates]

    # Candidates per landmark role (mirror-pair roles share their group's list).
    role_group = np.array(
        [model.group_of_landmark(i + 1) for i in range(anatomy.N_LANDMARKS)]
    )
    role_candidates = [candidates[g] for g in role_group]
    role_points = [mesh.vertices[c] for c in role_candidates]
    role_scores = None
    if scores is not None:
        role_scores = [scores[g][c] for g, c in zip(role_group, role_candidates)]

    populated = [r for r in range(anatomy.N_LANDMARKS) if role_candidates[r].size > 0]
    if len(populated) < 3:
        raise FitFailureError(
            f"only {len(populated)} landmark roles have candidates; need 3",
            diagnostics={"populated_roles": [r + 1 for r in populated]},
        )

    triples = _role_triples(config)
    triples = triples[np.all(np.isin(triples, populated), axis=1)]
    if triples.shape[0] == 0:
        raise FitFailureError("no well-shaped landmark triple has candidates")

    # Enumerate candidate assignments per role-triple; keep the best `budget`
    # by summed candidate score (or enumeration order without scores).
    hyp_roles, hyp_cands, hyp_scores = [], [], []
    for a, b, c in triples:
        na, nb, nc = (min(role_candidates[r].size, seed_k) for r in (a, b, c))
        ia, ib, ic = np.meshgrid(np.arange(na), np.arange(nb), np.arange(nc), indexing="ij")
        ia, ib, ic = ia.ravel(), ib.ravel(), ic.ravel()
        va, vb, vc = (role_candidates[a][ia], role_candidates[b][ib], role_candidates[c][ic])
        distinct = (va != vb) & (vb != vc) & (va != vc)
        ia, ib, ic = ia[distinct], ib[distinct], ic[distinct]
        if ia.size == 0:
            continue
        hyp_roles.append(np.tile([a, b, c], (ia.size, 1)))
        hyp_cands.append(np.stack([ia, ib, ic], axis=1))
        if role_scores is not None:
            hyp_scores.append(role_scores[a][ia] + role_scores[b][ib] + role_scores[c][ic])
    if not hyp_roles:
        raise FitFailureError("no distinct-vertex candidate triplet exists")
    hyp_roles = np.concatenate(hyp_roles, axis=0)
    hyp_cands = np.concatenate(hyp_cands, axis=0)
    if hyp_roles.shape[0] > budget:
        if role_scores is not None:
            order = np.argsort(-np.concatenate(hyp_scores), kind="stable")[:budget]
        else:
            order = np.arange(budget)
        hyp_roles, hyp_cands = hyp_roles[order], hyp_cands[order]

    b = hyp_roles.shape[0]
    src = config[hyp_roles]
    # Gather destination points without a Python loop over hypotheses.
    cand_matrix = np.full((anatomy.N_LANDMARKS, max(c.size for c in role_candidates)), -1, dtype=np.int64)
    for r, c in enumerate(role_candidates):
        cand_matrix[r, : c.size] = c
    dst_ids = cand_matrix[hyp_roles, hyp_cands]
    dst = mesh.vertices[dst_ids]

    scale, rot, trans, valid = _batched_similarity(src, dst)
    predicted = (
        scale[:, None, None] * np.einsum("bij,mj->bmi", rot, config) + trans[:, None, :]
    )

    # Consensus: roles outside the seed triple whose nearest candidate lies
    # within the scale-adjusted radius.
    consensus = np.zeros(b, dtype=np.int64)
    support_dist = np.zeros(b)
    radius = consensus_radius * scale
    for r in range(anatomy.N_LANDMARKS):
        pts = role_points[r]
        if pts.size == 0:
            continue
        d2 = ((predicted[:, r, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        j = np.argmin(d2, axis=1)
        dmin = np.sqrt(d2[np.arange(b), j])
        in_triple = (hyp_roles == r).any(axis=1)
        ok = (dmin <= radius) & ~in_triple
        consensus += ok
        support_dist += np.where(ok, dmin, 0.0)
    consensus += 3  # the seed triple supports itself
    consensus = np.where(valid, consensus, -1)
    # Tie-break distances are compared in model units; in scan units a
    # shrunken hypothesis would win ties simply because everything it
    # predicts is closer together.
    support_dist /= np.maximum(scale, 1e-12)

    # Two landmarks cannot occupy one vertex. The quick count above lets
    # several roles claim the same candidate, which inflates consensus for
    # collapsed (small-scale) hypotheses, so the leaders are re-scored with
    # supporters required to be distinct vertices (greedy, nearest first).
    order = np.lexsort((np.arange(b), support_dist, -consensus))
    top = order[: min(2000, b)]
    for h in top:
        if consensus[h] < 0:
            continue
        seed_roles = hyp_roles[h]
        used = set(int(v) for v in dst_ids[h])
        claims = []
        for r in range(anatomy.N_LANDMARKS):
            if (seed_roles == r).any() or role_points[r].size == 0:
                continue
            d = np.linalg.norm(role_points[r] - predicted[h, r], axis=1)
            inside = np.nonzero(d <= radius[h])[0]
            if inside.size:
                claims.append((r, inside[np.argsort(d[inside], kind="stable")], d))
        claims.sort(key=lambda c: c[2][c[1][0]])
        n_support = 0
        dist_sum = 0.0
        assigned = {}
        for r, cand_order, d in claims:
            for j in cand_order:
                v = int(role_candidates[r][j])
                if v not in used:
                    used.add(v)
                    assigned[r] = j
                    n_support += 1
                    dist_sum += d[j]
                    break
        consensus[h] = 3 + n_support
        support_dist[h] = dist_sum / max(float(scale[h]), 1e-12)

    nearest_cand = np.full(anatomy.N_LANDMARKS, -1, dtype=np.int64)
    best = top[np.lexsort((top, support_dist[top], -consensus[top]))[0]]
    seed_roles = hyp_roles[best]
    used = set(int(v) for v in dst_ids[best])
    claims = []
    for r in range(anatomy.N_LANDMARKS):
        if (seed_roles == r).any() or role_points[r].size == 0:
            continue
        d = np.linalg.norm(role_points[r] - predicted[best, r], axis=1)
        inside = np.nonzero(d <= radius[best])[0]
        if inside.size:
            claims.append((r, inside[np.argsort(d[inside], kind="stable")], d))
    claims.sort(key=lambda c: c[2][c[1][0]])
    for r, cand_order, d in claims:
        for j in cand_order:
            if int(role_candidates[r][j]) not in used:
                used.add(int(role_candidates[r][j]))
                nearest_cand[r] = j
                break

    if consensus[best] < min_consensus:
        raise FitFailureError(
            f"best hypothesis has consensus {int(consensus[best])} "
            f"< {min_consensus}",
            diagnostics={
                "best_consensus": int(consensus[best]),
                "hypotheses": int(b),
            },
        )

    # Refit on the winning correspondences: seed roles use their own
    # candidates, supporters their assigned candidate.
    rows = []
    for r in range(anatomy.N_LANDMARKS):
        j = nearest_cand[r]
        if j >= 0:
            rows.append((int(r), int(role_candidates[r][j])))
    for j, r in enumerate(hyp_roles[best]):
        rows.append((int(r), int(dst_ids[best, j])))
    roles = np.array([x[0] for x in rows])
    verts = np.array([x[1] for x in rows])
    t_final = similarity_from_correspondences(config[roles], mesh.vertices[verts])

    predicted14 = t_final.apply(config)
    if index is None:
        index = SpatialIndex.for_mesh(mesh)
    snapped_ids, _ = index.nearest_batch(predicted14)
    positions = mesh.vertices[snapped_ids]

    fit_scores = np.full(anatomy.N_LANDMARKS, np.nan)
    if scores is not None:
        for r in range(anatomy.N_LANDMARKS):
            fit_scores[r] = scores[role_group[r], snapped_ids[r]]

    return LandmarkFit(
        vertex_ids=snapped_ids.astype(np.int64),
        positions=positions,
        scores=fit_scores,
        pose=t_final.inverse(),
        consensus=int(consensus[best]),
    )
