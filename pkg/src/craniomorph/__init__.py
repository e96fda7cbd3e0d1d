"""Statistical sagittal-profile and full-head shape models from 3D head scans."""

__version__ = "0.1.0"

from ._kernels import backend_name
from .errors import (
    AlignmentError,
    ConfigError,
    CraniomorphError,
    DegenerateGeometryError,
    EmptyProfileError,
    FitFailureError,
    FormatError,
    InsufficientSupportError,
    StageError,
    ValidationError,
)
from .geometry import Plane
from .mesh import TriMesh
from .transforms import RigidTransform, SimilarityTransform

__all__ = [
    "__version__",
    "backend_name",
    "AlignmentError",
    "ConfigError",
    "CraniomorphError",
    "DegenerateGeometryError",
    "EmptyProfileError",
    "FitFailureError",
    "FormatError",
    "InsufficientSupportError",
    "StageError",
    "ValidationError",
    "Plane",
    "TriMesh",
    "RigidTransform",
    "SimilarityTransform",
]
