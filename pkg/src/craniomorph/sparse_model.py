"""Configural landmark model: canonical frame, GPA mean, training, persistence.

The canonical frame of a 14-landmark configuration:
  * centroid at the origin,
  * best-fit plane of the six midline landmarks is x = 0 with the
    right-side landmarks at positive x,
  * rotated about x so nasion and subnasale share a z value with nasion
    above (positive y); with anatomically labelled input this leaves the
    face pointing towards +z.
"""

import dataclasses
import json

import numpy as np

from . import anatomy
from .errors import FitFailureError, FormatError, ValidationError
from .geometry import best_fit_plane
from .scoring import ScoringFunction, gather_training_vertices, train_scoring_function
from .spatial import SpatialIndex
from .spin import DescriptorCompressor, SpinImageParams, fit_compressor, spin_images
from .transforms import rotation_about_axis, rotation_between_vectors, similarity_from_correspondences

_FRAME_TOL = 1e-6
MODEL_FORMAT_VERSION = 1

_RIGHT_SIDE = np.array([0, 1, 6, 9])   # row indices of right-side landmarks
_NASION_ROW = anatomy.LANDMARK_IDS["nasion"] - 1
_SUBNASALE_ROW = anatomy.LANDMARK_IDS["subnasale"] - 1
_MIDLINE_ROWS = np.array([i - 1 for i in anatomy.MIDLINE_IDS])


def rms_size(points):
    """Root-mean-square distance from the centroid (scale measure)."""
    points = np.asarray(points, dtype=np.float64)
    centred = points - points.mean(axis=0)
    return float(np.sqrt(np.einsum("ij,ij->", centred, centred) / points.shape[0]))


def canonicalise_config(positions):
    """Rotate/translate landmark positions (14, 3) into the canonical frame."""
    pos = np.array(positions, dtype=np.float64)
    if pos.shape != (anatomy.N_LANDMARKS, 3):
        raise ValidationError(f"expected ({anatomy.N_LANDMARKS}, 3) positions, got {pos.shape}")
    pos -= pos.mean(axis=0)

    plane = best_fit_plane(pos[_MIDLINE_ROWS])
    r1 = rotation_between_vectors(plane.normal, np.array([1.0, 0.0, 0.0]))
    pos = pos @ r1.T
    if pos[_RIGHT_SIDE, 0].mean() < 0:
        # Half turn about y keeps the midline plane at x = 0.
        pos[:, 0] *= -1.0
        pos[:, 2] *= -1.0

    delta = pos[_NASION_ROW] - pos[_SUBNASALE_ROW]
    h = np.hypot(delta[1], delta[2])
    if h < 1e-9:
        raise ValidationError("nasion and subnasale coincide in the yz plane")
    angle = np.arctan2(-delta[2], delta[1])
    r2 = rotation_about_axis(np.array([1.0, 0.0, 0.0]), angle)
    return pos @ r2.T


@dataclasses.dataclass(frozen=True)
class LandmarkConfig:
    """Landmark positions (14, 3) in the canonical frame."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        if pos.shape != (anatomy.N_LANDMARKS, 3):
            raise ValidationError(
                f"expected ({anatomy.N_LANDMARKS}, 3) positions, got {pos.shape}"
            )
        scale = max(rms_size(pos), 1.0)
        if np.abs(pos.mean(axis=0)).max() > _FRAME_TOL * scale:
            raise ValidationError("configuration centroid is not at the origin")
        plane = best_fit_plane(pos[_MIDLINE_ROWS])
        if abs(abs(plane.normal[0]) - 1.0) > _FRAME_TOL or abs(plane.offset) > _FRAME_TOL * scale:
            raise ValidationError("midline landmarks do not lie in the x = 0 plane")
        if pos[_RIGHT_SIDE, 0].mean() <= 0:
            raise ValidationError("right-side landmarks must have positive x")
        if abs(pos[_NASION_ROW, 2] - pos[_SUBNASALE_ROW, 2]) > _FRAME_TOL * scale:
            raise ValidationError("nasion and subnasale must share a z value")
        if pos[_NASION_ROW, 1] <= pos[_SUBNASALE_ROW, 1]:
            raise ValidationError("nasion must lie above subnasale")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_positions(cls, positions):
        """Canonicalise arbitrary labelled positions into a config."""
        return cls(canonicalise_config(positions))

    def position_of(self, name):
        return self.positions[anatomy.LANDMARK_IDS[name] - 1]

    @property
    def size(self):
        return rms_size(self.positions)


def gpa_mean_config(landmark_sets, tol=1e-8, max_iterations=200):
    """Generalised Procrustes mean of labelled landmark sets.

    Each (14, 3) set is aligned to the evolving mean by a similarity
    transform; the mean is renormalised to unit RMS size every iteration
    and finally rescaled to the mean input size and canonicalised.
    """
    sets = np.asarray(landmark_sets, dtype=np.float64)
    if sets.ndim != 3 or sets.shape[1:] != (anatomy.N_LANDMARKS, 3):
        raise ValidationError(f"expected (n, {anatomy.N_LANDMARKS}, 3) landmark sets")
    if sets.shape[0] < 2:
        raise ValidationError("need at least two landmark sets")

    sizes = [rms_size(s) for s in sets]
    mean = sets[0] - sets[0].mean(axis=0)
    mean = mean / rms_size(mean)
    change = np.inf
    for _ in range(max_iterations):
        aligned = np.empty_like(sets)
        for i, s in enumerate(sets):
            t = similarity_from_correspondences(s, mean)
            aligned[i] = t.apply(s)
        new_mean = aligned.mean(axis=0)
        new_mean -= new_mean.mean(axis=0)
        size = rms_size(new_mean)
        if size < 1e-12:
            raise FitFailureError("Procrustes mean collapsed to a point")
        new_mean /= size
        change = np.abs(new_mean - mean).max()
        mean = new_mean
        if change < tol:
            break
    else:
        raise FitFailureError(
            f"Procrustes alignment did not converge (last change {change:.3e})",
            diagnostics={"last_change": change},
        )
    mean = mean * float(np.mean(sizes))
    return LandmarkConfig.from_positions(mean)


@dataclasses.dataclass(frozen=True)
class SparseModel:
    """Trained sparse landmarking model.

    scoring holds one function per scoring group in anatomy.SCORING_GROUPS
    order (mirror pairs share a function).
    """

    config: LandmarkConfig
    compressor: DescriptorCompressor
    scoring: tuple
    reference_size: float
    spin_params: SpinImageParams = dataclasses.field(default_factory=SpinImageParams)

    def __post_init__(self):
        if len(self.scoring) != len(anatomy.SCORING_GROUPS):
            raise ValidationError(
                f"expected {len(anatomy.SCORING_GROUPS)} scoring functions"
            )
        if self.reference_size <= 0:
            raise ValidationError("reference_size must be positive")
        object.__setattr__(self, "scoring", tuple(self.scoring))

    def group_of_landmark(self, landmark_id):
        """Index of the scoring group containing a landmark id."""
        for g, ids in enumerate(anatomy.SCORING_GROUPS):
            if landmark_id in ids:
                return g
        raise ValidationError(f"unknown landmark id {landmark_id}")

    def save(self, path):
        data = {
            "format": "craniomorph-sparse-model",
            "version": MODEL_FORMAT_VERSION,
            "spin_params": self.spin_params.to_dict(),
            "reference_size": self.reference_size,
            "config": self.config.positions.tolist(),
            "compressor": {
                "mean": self.compressor.mean.tolist(),
                "basis": self.compressor.basis.tolist(),
            },
            "scoring": [
                {
                    "direction": f.direction.tolist(),
                    "mean_pos": f.mean_pos,
                    "mean_neg": f.mean_neg,
                    "var_pos": f.var_pos,
                    "var_neg": f.var_neg,
                }
                for f in self.scoring
            ],
        }
        with open(path, "w", encoding="ascii") as fh:
            json.dump(data, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        try:
            with open(path, "r", encoding="ascii") as fh:
                data = json.load(fh)
        except (OSError, ValueError) as exc:
            raise FormatError(f"cannot read sparse model: {exc}", path=str(path)) from None
        try:
            if data["format"] != "craniomorph-sparse-model":
                raise FormatError(f"not a sparse model file: {data['format']!r}", path=str(path))
            if data["version"] != MODEL_FORMAT_VERSION:
                raise FormatError(
                    f"unsupported model version {data['version']}", path=str(path)
                )
            return cls(
                config=LandmarkConfig(np.array(data["config"], dtype=np.float64)),
                compressor=DescriptorCompressor(
                    mean=np.array(data["compressor"]["mean"], dtype=np.float64),
                    basis=np.array(data["compressor"]["basis"], dtype=np.float64),
                ),
                scoring=tuple(
                    ScoringFunction(
                        direction=np.array(f["direction"], dtype=np.float64),
                        mean_pos=float(f["mean_pos"]),
                        mean_neg=float(f["mean_neg"]),
                        var_pos=float(f["var_pos"]),
                        var_neg=float(f["var_neg"]),
                    )
                    for f in data["scoring"]
                ),
                reference_size=float(data["reference_size"]),
                spin_params=SpinImageParams.from_dict(data["spin_params"]),
            )
        except (KeyError, TypeError, ValidationError) as exc:
            raise FormatError(f"malformed sparse model: {exc}", path=str(path)) from None


def _scaled_mesh(mesh, factor):
    from .mesh import TriMesh

    return TriMesh(mesh.vertices * factor, mesh.faces, normals=mesh.normals)


def train_sparse_model(meshes, landmark_sets, spin_params=None,
                       positive_radius=5.0, negative_inner=10.0,
                       negative_outer=15.0):
    """Train a sparse landmarking model from meshes with labelled landmarks.

    Scans are rescaled to a common RMS size before descriptor extraction
    so that trained models transfer across globally rescaled scans; the
    same normalisation is applied again when scoring.
    """
    spin_params = spin_params or SpinImageParams()
    landmark_sets = [np.asarray(s, dtype=np.float64) for s in landmark_sets]
    if len(meshes) != len(landmark_sets):
        raise ValidationError("one landmark set per mesh required")
    if len(meshes) < 2:
        raise ValidationError("need at least two training scans")
    for s in landmark_sets:
        if s.shape != (anatomy.N_LANDMARKS, 3):
            raise ValidationError(f"landmark sets must be ({anatomy.N_LANDMARKS}, 3)")

    config = gpa_mean_config(landmark_sets)
    reference_size = float(np.mean([rms_size(m.vertices) for m in meshes]))

    n_groups = len(anatomy.SCORING_GROUPS)
    pos_descs = [[] for _ in range(n_groups)]
    neg_descs = [[] for _ in range(n_groups)]
    for mesh, landmarks in zip(meshes, landmark_sets):
        factor = reference_size / rms_size(mesh.vertices)
        scaled = _scaled_mesh(mesh, factor)
        index = SpatialIndex.for_mesh(scaled)
        for g, ids in enumerate(anatomy.SCORING_GROUPS):
            for landmark_id in ids:
                positives, negatives = gather_training_vertices(
                    scaled, landmarks[landmark_id - 1] * factor,
                    positive_radius, negative_inner, negative_outer, index=index,
                )
                pos_descs[g].append(spin_images(scaled, spin_params, positives, index))
                neg_descs[g].append(spin_images(scaled, spin_params, negatives, index))

    all_descs = np.concatenate(
        [d for group in pos_descs + neg_descs for d in group], axis=0
    )
    compressor = fit_compressor(all_descs.reshape(all_descs.shape[0], -1))

    scoring = []
    for g in range(n_groups):
        positive = compressor.compress(np.concatenate(pos_descs[g], axis=0))
        negative = compressor.compress(np.concatenate(neg_descs[g], axis=0))
        scoring.append(train_scoring_function(positive, negative))

    return SparseModel(
        config=config,
        compressor=compressor,
        scoring=tuple(scoring),
        reference_size=reference_size,
        spin_params=spin_params,
    )
