"""Two-class linear discriminant scoring of compressed descriptors.

A scoring function projects an 8-vector onto the Fisher direction
w = S_w^-1 (mu_pos - mu_neg) and scores it by the difference of
log-likelihoods of the two 1D class-conditional normals along w. High
scores mean "looks like the landmark neighbourhood".
"""

import dataclasses

import numpy as np

from .errors import InsufficientSupportError, ValidationError
from .spatial import SpatialIndex

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclasses.dataclass(frozen=True)
class ScoringFunction:
    direction: np.ndarray   # (d,) Fisher direction, unit length
    mean_pos: float
    mean_neg: float
    var_pos: float
    var_neg: float

    def __post_init__(self):
        direction = np.ascontiguousarray(self.direction, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(direction)):
            raise ValidationError("direction must be finite")
        if self.var_pos <= 0 or self.var_neg <= 0:
            raise ValidationError("class variances must be positive")
        object.__setattr__(self, "direction", direction)

    def score(self, features):
        """Log-likelihood ratio of features (..., d); NaN rows stay NaN."""
        features = np.asarray(features, dtype=np.float64)
        t = features @ self.direction
        log_pos = -0.5 * (
            _LOG_2PI + np.log(self.var_pos) + (t - self.mean_pos) ** 2 / self.var_pos
        )
        log_neg = -0.5 * (
            _LOG_2PI + np.log(self.var_neg) + (t - self.mean_neg) ** 2 / self.var_neg
        )
        return log_pos - log_neg


def train_scoring_function(positive, negative):
    """Fit a Fisher discriminant from compressed descriptors.

    Parameters
    ----------
    positive, negative : (k, d) arrays
        Compressed descriptors of landmark and background vertices.
    """
    positive = np.asarray(positive, dtype=np.float64)
    negative = np.asarray(negative, dtype=np.float64)
    if positive.ndim != 2 or negative.ndim != 2 or positive.shape[1] != negative.shape[1]:
        raise ValidationError("positive and negative must be (k, d) with equal d")
    d = positive.shape[1]
    if positive.shape[0] < 2 or negative.shape[0] < 2:
        raise ValidationError("each class needs at least two examples")

    mu_p = positive.mean(axis=0)
    mu_n = negative.mean(axis=0)
    cp = positive - mu_p
    cn = negative - mu_n
    # Pooled within-class covariance.
    sw = (cp.T @ cp + cn.T @ cn) / (positive.shape[0] + negative.shape[0] - 2)
    trace = np.trace(sw)
    if trace <= 0:
        raise ValidationError(
            "within-class scatter is zero; classes are constant "
            "(more varied training vertices needed)"
        )
    sw = sw + np.eye(d) * (1e-6 * trace / d)
    try:
        w = np.linalg.solve(sw, mu_p - mu_n)
    except np.linalg.LinAlgError:
        raise ValidationError(
            "within-class covariance is singular even after regularisation; "
            "increase the regularisation or provide more varied examples"
        ) from None
    norm = np.linalg.norm(w)
    if norm == 0 or not np.isfinite(norm):
        raise ValidationError("class means coincide; discriminant direction undefined")
    w = w / norm

    tp = positive @ w
    tn = negative @ w
    var_p = float(tp.var(ddof=1))
    var_n = float(tn.var(ddof=1))
    floor = 1e-12 * max(1.0, float(tp.mean() ** 2), float(tn.mean() ** 2))
    return ScoringFunction(
        direction=w,
        mean_pos=float(tp.mean()),
        mean_neg=float(tn.mean()),
        var_pos=max(var_p, floor),
        var_neg=max(var_n, floor),
    )


def gather_training_vertices(mesh, landmark, positive_radius=5.0,
                             negative_inner=10.0, negative_outer=15.0,
                             index=None):
    """Vertex ids near / away from a landmark point for scoring training.

    Positives lie within positive_radius of the landmark, negatives in the
    [negative_inner, negative_outer] shell. Raises when no positive vertex
    exists (mesh too coarse near the landmark).
    """
    landmark = np.asarray(landmark, dtype=np.float64).reshape(3)
    if not (0 < positive_radius < negative_inner < negative_outer):
        raise ValidationError("need 0 < positive_radius < negative_inner < negative_outer")
    lo, hi = mesh.bounds()
    if np.any(landmark < lo - negative_outer) or np.any(landmark > hi + negative_outer):
        raise ValidationError("landmark lies far outside the mesh bounds")
    if index is None:
        index = SpatialIndex.for_mesh(mesh)
    ids, distances = index.ball(landmark, negative_outer)
    positives = ids[distances <= positive_radius]
    negatives = ids[distances >= negative_inner]
    if positives.size == 0:
        raise InsufficientSupportError(
            f"no vertex within {positive_radius:g}mm of the landmark; "
            "mesh resolution too coarse"
        )
    return positives, negatives
