"""Spin-image descriptors and their PCA compression.

The spin image of a vertex x_i with unit normal n accumulates every
neighbour x within support into a cylindrical histogram of
(alpha, beta) = (radial distance, signed height) where

    beta = (x - x_i) . n        (sign convention as used throughout)
    alpha = sqrt(|x - x_i|^2 - beta^2)

Radial bin centres sit at (j + 1/2) * width; the central height bin is
centred on beta = 0. Samples are spread bilinearly over the four
surrounding bins, with border bins absorbing out-of-range weight so that
each in-support neighbour contributes total weight exactly 1.
"""

import dataclasses

import numpy as np

from .errors import DegenerateGeometryError, ValidationError
from .spatial import SpatialIndex


@dataclasses.dataclass(frozen=True)
class SpinImageParams:
    radial_bins: int = 7
    height_bins: int = 7
    radial_bin_width: float = 3.0
    height_bin_width: float = 4.0

    def __post_init__(self):
        if self.radial_bins < 1 or self.height_bins < 1:
            raise ValidationError("bin counts must be >= 1")
        if self.radial_bin_width <= 0 or self.height_bin_width <= 0:
            raise ValidationError("bin widths must be positive")

    @property
    def support_radius(self):
        """Maximum in-support alpha (mm)."""
        return self.radial_bins * self.radial_bin_width

    @property
    def height_half_range(self):
        """Maximum in-support |beta| (mm)."""
        return 0.5 * self.height_bins * self.height_bin_width

    @property
    def gather_radius(self):
        """Euclidean radius guaranteed to contain all in-support neighbours."""
        return float(np.hypot(self.support_radius, self.height_half_range))

    @property
    def size(self):
        return self.radial_bins * self.height_bins

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def spin_images(mesh, params=None, vertex_ids=None, index=None):
    """Spin-image histograms for a batch of vertices.

    Parameters
    ----------
    mesh : TriMesh
    params : SpinImageParams
    vertex_ids : int array, optional
        Vertices to describe (default: all).
    index : SpatialIndex, optional
        Reused vertex index; built on demand.

    Returns
    -------
    (k, radial_bins, height_bins) float array
        Histogram per requested vertex. A vertex with no in-support
        neighbours yields an all-zero histogram.
    """
    params = params or SpinImageParams()
    if vertex_ids is None:
        vertex_ids = np.arange(mesh.n_vertices)
    else:
        vertex_ids = np.asarray(vertex_ids, dtype=np.int64).reshape(-1)
        if vertex_ids.size and (vertex_ids.min() < 0 or vertex_ids.max() >= mesh.n_vertices):
            raise ValidationError("vertex id out of range")
    if index is None:
        index = SpatialIndex.for_mesh(mesh)

    m, n = params.radial_bins, params.height_bins
    out = np.zeros((vertex_ids.shape[0], m * n))
    if vertex_ids.size == 0:
        return out.reshape(-1, m, n)

    centres = mesh.vertices[vertex_ids]
    pair_row, pair_id, _ = index.ball_pairs(centres, params.gather_radius)
    keep = pair_id != vertex_ids[pair_row]  # the vertex itself contributes nothing
    pair_row, pair_id = pair_row[keep], pair_id[keep]

    d = mesh.vertices[pair_id] - centres[pair_row]
    normal = mesh.normals[vertex_ids][pair_row]
    beta = np.einsum("ij,ij->i", d, normal)
    r2 = np.einsum("ij,ij->i", d, d)
    alpha = np.sqrt(np.maximum(r2 - beta * beta, 0.0))

    support = (alpha < params.support_radius) & (np.abs(beta) <= params.height_half_range)
    pair_row = pair_row[support]
    alpha = alpha[support]
    beta = beta[support]

    # Bilinear binning with border clamping: bin centres at
    # alpha = (j + 1/2) * w_r and beta = (k - (n-1)/2) * w_h.
    g = np.clip(alpha / params.radial_bin_width - 0.5, 0.0, m - 1.0)
    j0 = np.floor(g).astype(np.int64)
    fj = g - j0
    j1 = np.minimum(j0 + 1, m - 1)
    h = np.clip(beta / params.height_bin_width + 0.5 * (n - 1), 0.0, n - 1.0)
    k0 = np.floor(h).astype(np.int64)
    fk = h - k0
    k1 = np.minimum(k0 + 1, n - 1)

    base = pair_row * (m * n)
    np.add.at(out.ravel(), base + j0 * n + k0, (1.0 - fj) * (1.0 - fk))
    np.add.at(out.ravel(), base + j0 * n + k1, (1.0 - fj) * fk)
    np.add.at(out.ravel(), base + j1 * n + k0, fj * (1.0 - fk))
    np.add.at(out.ravel(), base + j1 * n + k1, fj * fk)
    return out.reshape(-1, m, n)


def spin_image(mesh, vertex, params=None, index=None):
    """Spin-image histogram of one vertex: (radial_bins, height_bins)."""
    return spin_images(mesh, params, np.asarray([vertex]), index)[0]


@dataclasses.dataclass(frozen=True)
class DescriptorCompressor:
    """PCA projection of flattened spin images onto 8 components."""

    mean: np.ndarray   # (d,)
    basis: np.ndarray  # (d, 8), orthonormal columns

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64).reshape(-1)
        basis = np.ascontiguousarray(self.basis, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[0] != mean.shape[0]:
            raise ValidationError("basis shape does not match mean")
        gram_err = np.abs(basis.T @ basis - np.eye(basis.shape[1])).max()
        if gram_err > 1e-9:
            raise ValidationError(f"basis columns not orthonormal (deviation {gram_err:.2e})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)

    @property
    def n_components(self):
        return self.basis.shape[1]

    def compress(self, descriptors):
        """Project histograms (..., m, n) or flat (..., d) to (..., k)."""
        flat = np.asarray(descriptors, dtype=np.float64).reshape(-1, self.mean.shape[0])
        return (flat - self.mean) @ self.basis

    def reconstruct(self, coefficients):
        coefficients = np.asarray(coefficients, dtype=np.float64)
        return coefficients @ self.basis.T + self.mean


def fit_compressor(descriptors, n_components=8):
    """Fit the PCA compressor on flattened descriptors.

    Raises when fewer than n_components + 1 descriptors are given or the
    centred data has rank below n_components (the achievable rank is
    reported).
    """
    flat = np.asarray(descriptors, dtype=np.float64)
    flat = flat.reshape(flat.shape[0], -1)
    if flat.shape[0] < n_components + 1:
        raise ValidationError(
            f"need at least {n_components + 1} descriptors, got {flat.shape[0]}"
        )
    mean = flat.mean(axis=0)
    centred = flat - mean
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    rank = int((s > s[0] * 1e-10).sum()) if s.size and s[0] > 0 else 0
    if rank < n_components:
        raise DegenerateGeometryError(
            f"descriptor set has rank {rank}, need {n_components} components"
        )
    basis = vt[:n_components].T.copy()
    # Deterministic sign: largest-magnitude entry of each column positive.
    for k in range(basis.shape[1]):
        col = basis[:, k]
        if col[int(np.argmax(np.abs(col)))] < 0:
            basis[:, k] = -col
    return DescriptorCompressor(mean=mean, basis=basis)
