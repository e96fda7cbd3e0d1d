"""Deterministic synthetic heads and profile populations with ground truth.

The head is an ellipsoidal cranium with C1-smooth parametric face features
(cos^2 bumps: nose wedge, lip ridges, chin boss, eye sockets, corner
dimples). Bumps act radially on an azimuth/elevation sphere grid, so with
zero bend and zero noise the mesh is mirror-symmetric about x = 0 exactly:
the negative-x half is constructed by negating the positive half.

Ground truth carries everything downstream stages are measured against:
the 14 landmark positions, the symmetry plane, the sagittal ellipse centre
and axes, the 8 profile-landmark points (solved as curvature extrema of the
analytic midline radius), and labelled vertex groups (neck, outliers).
"""

import dataclasses
import json

import numpy as np

from . import anatomy
from .errors import ValidationError
from .geometry import Plane
from .mesh import TriMesh
from .spatial import SpatialIndex
from .transforms import SimilarityTransform


def _bump(t):
    """C1 bump: cos^2(pi t / 2) inside |t| < 1, zero outside."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.zeros_like(t)
    inside = t < 1.0
    out[inside] = np.cos(0.5 * np.pi * t[inside]) ** 2
    return out


def _flat_bump(t, flat):
    """Flat-topped C1 bump: 1 inside |t| <= flat, cos^2 falloff to |t| = 1.

    A plateau under a feature extremum keeps the immediate surround of
    the extremum self-similar instead of sitting on a steep gradient.
    """
    t = np.abs(np.asarray(t, dtype=np.float64))
    return _bump(np.clip((t - flat) / (1.0 - flat), 0.0, 1.0))


def ellipse_radius(psi_deg, a_y, a_z):
    """Polar radius of the origin-centred sagittal ellipse at angle psi.

    psi is measured from +z toward +y; the ellipse has semi-axis a_y along
    y and a_z along z.
    """
    psi = np.radians(np.asarray(psi_deg, dtype=np.float64))
    return 1.0 / np.sqrt((np.sin(psi) / a_y) ** 2 + (np.cos(psi) / a_z) ** 2)


@dataclasses.dataclass(frozen=True)
class SynthHeadSpec:
    """Parameters of a synthetic head. All lengths in mm, angles in degrees.

    ``seed`` drives only measurement noise and outliers: two specs that
    differ in nothing but ``seed`` produce identical geometry.
    ``variation_seed`` is a geometry parameter; it individuates the
    secondary anatomy (crease/mound placement and strength, fine surface
    detail) so a population can share proportions without sharing faces.
    """

    seed: int = 0
    variation_seed: int | None = None
    semi_axis_x: float = 75.0
    semi_axis_y: float = 95.0
    semi_axis_z: float = 88.0
    nose_length: float = 34.0
    nose_width: float = 18.0
    nose_bend_deg: float = 0.0
    face_length: float = 85.0
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    surface_detail: float = 0.0
    resolution: float = 3.0
    neck: bool = False

    def __post_init__(self):
        for name in (
            "semi_axis_x",
            "semi_axis_y",
            "semi_axis_z",
            "nose_length",
            "nose_width",
            "face_length",
            "resolution",
        ):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if not -10.0 <= self.nose_bend_deg <= 10.0:
            raise ValidationError("nose_bend_deg must be within [-10, 10]")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be non-negative")
        if self.surface_detail < 0:
            raise ValidationError("surface_detail must be non-negative")
        if not 0.0 <= self.outlier_fraction <= 0.5:
            raise ValidationError("outlier_fraction must be within [0, 0.5]")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as exc:
            raise ValidationError(f"bad head spec: {exc}") from None


class _FaceLayout:
    """Feature placement derived from a head spec (angles in degrees)."""

    def __init__(
        self, a_y, a_z, nose_length, nose_width, face_length, bend_deg=0.0,
        variation_seed=None,
    ):
        self.a_y = a_y
        self.a_z = a_z
        r_bar = 0.5 * (a_y + a_z)
        self.deg_per_mm = 180.0 / (np.pi * r_bar)
        self.v_nasion = -5.0
        self.span = face_length * self.deg_per_mm
        self.v_pognion = self.v_nasion - self.span
        nose_span = nose_length * self.deg_per_mm
        self.v_base = self.v_nasion - nose_span
        self.v_pro = self.v_nasion - 0.7 * nose_span
        self.w_nose_u = max(0.5 * nose_width * self.deg_per_mm, 1e-6)
        self.h_nose = 0.42 * nose_length
        self.bend_deg = bend_deg
        self.v_eye = self.v_nasion - 0.075 * self.span
        self.v_upper_lip = self.v_nasion - 0.53 * self.span
        self.v_lower_lip = self.v_nasion - 0.67 * self.span
        self.v_mouth = 0.5 * (self.v_upper_lip + self.v_lower_lip)
        self.lip_w_v = 0.075 * self.span
        self.w_chin_v = 0.13 * self.span
        self.u_socket = 17.0
        self.u_endocanthion = 9.5
        self.u_exocanthion = 25.0
        self.u_alar = self.w_nose_u + 5.5
        self.v_alar = self.v_base + 1.5
        self.u_chelion = 13.5
        if self.v_base <= self.v_upper_lip + self.lip_w_v:
            raise ValidationError("nose_length too large for face_length (nose reaches lips)")
        if self.v_pognion - self.w_chin_v <= -88.0:
            raise ValidationError("face_length too large for the cranial ellipsoid")

        # Secondary (non-landmark) structure varies from head to head, as
        # in a real population; without a seed the midpoint layout is
        # used. Placement ranges keep every support edge clear of the
        # landmark features above.
        if variation_seed is None:
            draws = np.full(40, 0.5)
        else:
            draws = np.random.default_rng((int(variation_seed), 17)).uniform(size=40)

        def jit(k, lo, hi):
            return lo + (hi - lo) * draws[k]

        self.brow_v = jit(0, 8.0, 11.0)
        self.brow_amp = jit(1, 1.3, 2.3)
        self.fore_u = jit(2, 11.0, 14.0)
        self.fore_v = jit(3, 6.0, 11.0)
        self.fore_amp = jit(4, 0.9, 1.9)
        self.cheek_u = jit(5, 25.0, 31.0)
        self.cheek_v = jit(6, -13.0, -9.0)
        self.cheek_amp = jit(7, 1.2, 2.0)
        self.nl_u = self.u_chelion + jit(8, 9.0, 11.0)
        self.nl_v = jit(9, -2.0, 2.0)
        self.nl_amp = jit(10, 1.1, 1.9)
        self.buc_u = jit(11, 24.0, 28.0)
        self.buc_v = jit(12, -2.0, 2.0)
        self.buc_amp = jit(13, 1.0, 2.0)
        dpm = self.deg_per_mm
        c_base = max(np.cos(np.radians(self.v_base)), 0.2)
        self.pf_u = jit(14, 9.5, 11.5) * dpm / c_base
        self.pf_uw = 3.5 * dpm / c_base
        self.pf_v = self.v_base - jit(15, 8.5, 11.5) * dpm
        self.pf_vw = 3.0 * dpm
        self.pf_amp = jit(16, 0.8, 2.0)
        self.mar_u = jit(17, 14.5, 16.5)
        self.mar_v = self.v_mouth - jit(18, 11.0, 15.0) * dpm
        self.mar_vw = 5.0 * dpm
        self.mar_amp = jit(19, 1.3, 2.3)
        c_lip = max(np.cos(np.radians(self.v_lower_lip)), 0.2)
        self.lab_u = jit(20, 8.5, 9.5) * dpm / c_lip
        self.lab_uw = 5.0 * dpm / c_lip
        self.lab_v = self.v_lower_lip - jit(21, 9.0, 11.0) * dpm
        self.lab_vw = 4.0 * dpm
        self.lab_amp = jit(22, 1.2, 2.0)
        self.jaw_u = jit(23, 9.0, 14.0)
        self.jaw_v = self.v_pognion + jit(24, 10.0, 14.0) * dpm
        self.jaw_vw = 4.5 * dpm
        self.jaw_amp = jit(25, 1.0, 2.0)
        self.sc_u = jit(26, 8.0, 10.0)
        self.sc_v = self.v_pognion - jit(27, 9.5, 11.5) * dpm
        self.sc_vw = 4.0 * dpm
        self.sc_amp = jit(28, 0.8, 1.8)
        self.cf_u = jit(29, 9.0, 11.0)
        self.cf_v = self.v_mouth + jit(30, 6.5, 8.0) * dpm
        self.cf_vw = 3.0 * dpm
        self.cf_amp = jit(31, 0.9, 1.9)
        self.jowl_u = jit(32, 18.0, 24.0)
        self.jowl_v = self.v_pognion + jit(33, 2.0, 6.0) * dpm
        self.jowl_vw = 4.0 * dpm
        self.jowl_amp = jit(34, 1.1, 2.3)
        self.chin_amp = 5.5
        self.chin_uw = jit(36, 26.0, 34.0)
        self.w_chin_v = jit(37, 0.13, 0.19) * self.span
        self.arch_v = jit(38, 4.5, 7.5)

    def radial_features(self, u_deg, v_deg):
        """Radial feature offsets (mm) at azimuth/elevation grids (degrees)."""
        u = np.asarray(u_deg, dtype=np.float64)
        v = np.asarray(v_deg, dtype=np.float64)
        out = np.zeros(np.broadcast(u, v).shape)

        # Nasion bridge dimple.
        out -= 3.5 * _bump((v - self.v_nasion) / 3.6) * _bump(u / 30.0)
        out += 2.0 * _bump((v - self.v_nasion - self.arch_v) / 5.0) * _bump(u / 26.0)
        # Nose wedge: C1 rise nasion->tip, fall tip->base. The bend enters
        # through the global drift shift above.
        up_w = self.v_nasion - self.v_pro
        down_w = self.v_pro - self.v_base
        a_v = np.where(
            v >= self.v_pro,
            _flat_bump((v - self.v_pro) / up_w, 0.15),
            _flat_bump((v - self.v_pro) / down_w, 0.15),
        )
        a_v = np.where((v > self.v_nasion) | (v < self.v_base), 0.0, a_v)
        out += self.h_nose * a_v * _flat_bump(u / self.w_nose_u, 0.2)
        out += 3.0 * _bump((v - self.v_pro) / 3.2) * _bump(u / 3.6)
        # Eye sockets and canthion dimples.
        ev = _bump((v - self.v_eye) / 5.5)
        out -= 3.0 * ev * (_bump((u - self.u_socket) / 9.0) + _bump((u + self.u_socket) / 9.0))
        cv = _bump((v - self.v_eye) / 5.0)
        out -= 2.5 * cv * (
            _bump((u - self.u_endocanthion) / 5.0) + _bump((u + self.u_endocanthion) / 5.0)
        )
        out -= 2.5 * cv * (
            _bump((u - self.u_exocanthion) / 5.0) + _bump((u + self.u_exocanthion) / 5.0)
        )
        # Philtrum notch under the nose base.
        out -= 1.6 * _bump((v - self.v_base) / 2.8) * _bump(u / 6.5)
        # Alar dimples just outside the nose base.
        av = _bump((v - self.v_alar) / 4.0)
        out -= 2.5 * av * (
            _bump((u - self.u_alar) / 4.0) + _bump((u + self.u_alar) / 4.0)
        )
        out += 1.3 * _bump((v - self.v_eye) / 7.0) * (
            _bump((u - self.u_exocanthion - 7.0) / 4.5)
            + _bump((u + self.u_exocanthion + 7.0) / 4.5)
        )
        # Broad fixed terrain over the whole face strip. Descriptors
        # integrate a 21 mm neighbourhood; without large-scale relief the
        # surface is a near-quadric almost everywhere and every scoring
        # function piles onto the same few features. The relief gives each
        # region a distinct large-scale context, as on real faces.
        out += 2.0 * _bump((v - self.v_nasion - 15.0) / 9.0) * _bump(u / 18.0)
        out += 1.5 * _bump((v - self.v_nasion - 12.0) / 8.0) * (
            _bump((u - 22.0) / 14.0) + _bump((u + 22.0) / 14.0)
        )
        out -= 1.8 * _bump((v - self.v_eye - 4.0) / 9.0) * (
            _bump((u - 38.0) / 12.0) + _bump((u + 38.0) / 12.0)
        )
        out += 2.2 * _bump((v - self.v_eye + 13.0) / 8.0) * (
            _bump((u - 30.0) / 8.0) + _bump((u + 30.0) / 8.0)
        )
        out -= 1.6 * _bump((v - self.v_mouth + 5.0) / 10.0) * (
            _bump((u - 36.0) / 11.0) + _bump((u + 36.0) / 11.0)
        )
        out += 1.4 * _bump((v - self.v_mouth - 6.0) / 6.0) * (
            _bump((u - 24.0) / 6.0) + _bump((u + 24.0) / 6.0)
        )
        out += 1.6 * _bump((v - self.v_pognion - 8.0) / 8.0) * (
            _bump((u - 30.0) / 10.0) + _bump((u + 30.0) / 10.0)
        )
        out -= 1.5 * _bump((v - self.v_pognion + 14.0) / 7.0) * _bump(u / 16.0)
        # Secondary structure away from the midline: brow ridges,
        # forehead mounds, infraorbital creases, cheek and buccal mounds,
        # philtrum-flank creases, nasolabial/marionette/labiomental
        # folds, a jaw crease and sub-chin folds. Each landmark's 10-15mm
        # surround stays heterogeneous, as on real faces; every u-support
        # excludes the midline and every support edge keeps >5mm from the
        # nearest landmark so analytic ground truth is unaffected.
        bv = _bump((v - self.v_eye - self.brow_v) / 4.5)
        out += self.brow_amp * bv * (_bump((u - 17.0) / 10.0) + _bump((u + 17.0) / 10.0))
        gv = _bump((v - self.v_nasion - self.fore_v) / 4.0)
        out += self.fore_amp * gv * (
            _bump((u - self.fore_u) / 7.0) + _bump((u + self.fore_u) / 7.0)
        )
        iv = _bump((v - self.v_eye + 6.0) / 3.2)
        out -= 1.2 * iv * (_bump((u - 17.0) / 10.0) + _bump((u + 17.0) / 10.0))
        hv = _bump((v - self.v_eye - self.cheek_v) / 7.0)
        out += self.cheek_amp * hv * (
            _bump((u - self.cheek_u) / 9.0) + _bump((u + self.cheek_u) / 9.0)
        )
        pv = _bump((v - self.pf_v) / self.pf_vw)
        out -= self.pf_amp * pv * (
            _bump((u - self.pf_u) / self.pf_uw) + _bump((u + self.pf_u) / self.pf_uw)
        )
        fv = _bump((v - 0.5 * (self.v_base + self.v_mouth) - self.nl_v) / 8.0)
        out -= self.nl_amp * fv * (
            _bump((u - self.nl_u) / 4.0) + _bump((u + self.nl_u) / 4.0)
        )
        wv = _bump((v - self.v_mouth - self.buc_v) / 6.0)
        out += self.buc_amp * wv * (
            _bump((u - self.buc_u) / 5.0) + _bump((u + self.buc_u) / 5.0)
        )
        av2 = _bump((v - self.mar_v) / self.mar_vw)
        out -= self.mar_amp * av2 * (
            _bump((u - self.mar_u) / 3.5) + _bump((u + self.mar_u) / 3.5)
        )
        lv = _bump((v - self.lab_v) / self.lab_vw)
        out -= self.lab_amp * lv * (
            _bump((u - self.lab_u) / self.lab_uw) + _bump((u + self.lab_u) / self.lab_uw)
        )
        jv = _bump((v - self.jaw_v) / self.jaw_vw)
        out -= self.jaw_amp * jv * (
            _bump((u - self.jaw_u) / 8.0) + _bump((u + self.jaw_u) / 8.0)
        )
        sv2 = _bump((v - self.sc_v) / self.sc_vw)
        out -= self.sc_amp * sv2 * (_bump((u - self.sc_u) / 6.0) + _bump((u + self.sc_u) / 6.0))
        cfv = _bump((v - self.cf_v) / self.cf_vw)
        out -= self.cf_amp * cfv * (_bump((u - self.cf_u) / 4.0) + _bump((u + self.cf_u) / 4.0))
        jlv = _bump((v - self.jowl_v) / self.jowl_vw)
        out += self.jowl_amp * jlv * (
            _bump((u - self.jowl_u) / 7.0) + _bump((u + self.jowl_u) / 7.0)
        )
        # Lip ridges and mouth-corner dimples.
        lu = _bump(u / 11.5)
        out += 2.4 * _bump((v - self.v_upper_lip) / self.lip_w_v) * lu
        out += 2.4 * _bump((v - self.v_lower_lip) / self.lip_w_v) * lu
        mv = _bump((v - self.v_mouth) / 5.0)
        out -= 2.8 * mv * (
            _bump((u - self.u_chelion) / 6.5) + _bump((u + self.u_chelion) / 6.5)
        )
        # Chin boss with a crisp apex knob.
        out += self.chin_amp * _bump((v - self.v_pognion) / self.w_chin_v) * _bump(u / self.chin_uw)
        out += 2.0 * _bump((v - self.v_pognion) / 3.0) * _bump(u / 3.8)
        return out

    def midline_radius(self, psi_deg):
        """Analytic sagittal radius r(psi) from the origin along the crest.

        psi <= 90 is the face/crown side (elevation psi at azimuth 0);
        psi > 90 wraps over the crown to the back (azimuth 180). With a
        nonzero bend the facial crest drifts off azimuth 0 and the radius
        follows it, so feature heights match the unbent head.
        """
        psi = np.asarray(psi_deg, dtype=np.float64)
        v = np.where(psi <= 90.0, psi, 180.0 - psi)
        base = ellipse_radius(psi, self.a_y, self.a_z)
        return base + self.radial_features(self.drift(v), v)


def _polar_curvature(r, step_deg):
    """Signed curvature of a polar curve sampled at uniform angle steps."""
    h = np.radians(step_deg)
    r1 = np.gradient(r, h)
    r2 = np.gradient(r1, h)
    return (r * r + 2.0 * r1 * r1 - r * r2) / np.power(r * r + r1 * r1, 1.5)


def _solve_profile_landmarks(layout):
    """Locate the 8 profile landmarks as curvature extrema of the midline.

    Returns (angles dict, points dict); points are (y, z) pairs.
    """
    lw = layout.lip_w_v
    windows = {
        "nasion": (layout.v_nasion - 3.0, layout.v_nasion + 3.0, "min"),
        "pronasale": (layout.v_pro - 5.0, layout.v_pro + 5.0, "max"),
        "subnasale": (layout.v_upper_lip + 0.5 * lw, layout.v_base + 1.0, "min"),
        "labiale_superius": (layout.v_upper_lip - lw, layout.v_upper_lip + lw, "max"),
        "lip_centre": (layout.v_lower_lip + 0.3 * lw, layout.v_upper_lip - 0.3 * lw, "min"),
        "labiale_inferius": (layout.v_lower_lip - lw, layout.v_lower_lip + lw, "max"),
        "chin_cleft": (
            layout.v_pognion + 0.3 * layout.w_chin_v,
            layout.v_lower_lip - 0.5 * lw,
            "min",
        ),
        "pognion": (
            layout.v_pognion - 0.8 * layout.w_chin_v,
            layout.v_pognion + 0.8 * layout.w_chin_v,
            "max",
        ),
    }
    step = 0.002
    angles = {}
    points = {}
    for name, (lo, hi, kind) in windows.items():
        # Pad so the curvature stencil is clean inside the window.
        grid = np.arange(lo - 5 * step, hi + 5 * step, step)
        r = layout.midline_radius(grid)
        kappa = _polar_curvature(r, step)
        inside = (grid >= lo) & (grid <= hi)
        idx = np.nonzero(inside)[0]
        k_in = kappa[idx]
        best = idx[int(np.argmax(k_in) if kind == "max" else np.argmin(k_in))]
        psi = float(grid[best])
        angles[name] = psi
        rr = float(r[best])
        points[name] = np.array([rr * np.sin(np.radians(psi)), rr * np.cos(np.radians(psi))])
    return angles, points


@dataclasses.dataclass
class HeadGroundTruth:
    """Everything needed to score pipeline stages on a synthetic head."""

    spec: SynthHeadSpec
    landmarks: np.ndarray               # (14, 3) in canonical frame
    landmark_vertex_ids: np.ndarray     # (14,) nearest mesh vertices
    symmetry_plane: Plane
    ellipse_centre: np.ndarray          # (2,) as (y, z)
    ellipse_semi_axes: tuple            # (a_y, a_z)
    profile_landmark_points: dict       # name -> (y, z)
    profile_landmark_angles: dict       # name -> degrees from +z
    nose_ridge: np.ndarray              # (k, 3) planted ridge polyline
    vertex_groups: dict                 # name -> id array ("neck", "outliers")
    pose: SimilarityTransform | None = None  # applied pose, None = canonical

    def landmark(self, name):
        return self.landmarks[anatomy.LANDMARK_IDS[name] - 1]

    def transformed(self, transform):
        """Ground truth after posing the scan with ``transform``.

        Frame-bound 2D quantities (ellipse, profile landmarks) stay in the
        canonical frame; the stored pose records how to get back.
        """
        plane = self.symmetry_plane
        normal = transform.apply_direction(plane.normal)
        offset = transform.scale * plane.offset + float(normal @ transform.translation)
        pose = transform if self.pose is None else transform.compose(self.pose)
        return dataclasses.replace(
            self,
            landmarks=transform.apply(self.landmarks),
            symmetry_plane=Plane(normal, offset),
            nose_ridge=transform.apply(self.nose_ridge),
            pose=pose,
        )

    def to_dict(self):
        data = {
            "spec": self.spec.to_dict(),
            "landmark_names": list(anatomy.LANDMARK_NAMES),
            "landmarks": self.landmarks.tolist(),
            "landmark_vertex_ids": self.landmark_vertex_ids.tolist(),
            "symmetry_plane": {
                "normal": self.symmetry_plane.normal.tolist(),
                "offset": self.symmetry_plane.offset,
            },
            "ellipse_centre": self.ellipse_centre.tolist(),
            "ellipse_semi_axes": list(self.ellipse_semi_axes),
            "profile_landmark_points": {
                k: np.asarray(v).tolist() for k, v in self.profile_landmark_points.items()
            },
            "profile_landmark_angles": dict(self.profile_landmark_angles),
            "nose_ridge": self.nose_ridge.tolist(),
            "vertex_groups": {k: np.asarray(v).tolist() for k, v in self.vertex_groups.items()},
            "pose": None
            if self.pose is None
            else {
                "rotation": self.pose.rotation.tolist(),
                "translation": self.pose.translation.tolist(),
                "scale": self.pose.scale,
            },
        }
        return data

    @classmethod
    def from_dict(cls, data):
        pose = data.get("pose")
        return cls(
            spec=SynthHeadSpec.from_dict(data["spec"]),
            landmarks=np.asarray(data["landmarks"], dtype=np.float64),
            landmark_vertex_ids=np.asarray(data["landmark_vertex_ids"], dtype=np.int64),
            symmetry_plane=Plane(
                data["symmetry_plane"]["normal"], data["symmetry_plane"]["offset"]
            ),
            ellipse_centre=np.asarray(data["ellipse_centre"], dtype=np.float64),
            ellipse_semi_axes=tuple(data["ellipse_semi_axes"]),
            profile_landmark_points={
                k: np.asarray(v, dtype=np.float64)
                for k, v in data["profile_landmark_points"].items()
            },
            profile_landmark_angles=dict(data["profile_landmark_angles"]),
            nose_ridge=np.asarray(data["nose_ridge"], dtype=np.float64),
            vertex_groups={
                k: np.asarray(v, dtype=np.int64) for k, v in data["vertex_groups"].items()
            },
            pose=None
            if pose is None
            else SimilarityTransform(pose["rotation"], pose["translation"], pose["scale"]),
        )

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _ring_grid(spec):
    """Latitude rings with azimuth counts halving toward the poles.

    Keeps vertex density near-uniform over the sphere (a constant-count
    grid piles vertices into the poles, which distorts any density
    sensitive processing). Returns (ring elevations deg, ring counts).
    """
    r_bar = 0.5 * (spec.semi_axis_y + spec.semi_axis_z)
    n_u = max(int(np.ceil(2.0 * np.pi * r_bar / spec.resolution / 64.0)), 1) * 64
    n_v = max(int(round(np.pi * r_bar / spec.resolution)) - 1, 7)
    v = -90.0 + np.arange(1, n_v + 1) * (180.0 / (n_v + 1))
    j_max = int(np.log2(n_u // 16))
    cos_v = np.maximum(np.cos(np.radians(v)), 1e-12)
    ideal = np.clip(np.round(np.log2(1.0 / cos_v)), 0, j_max).astype(np.int64)
    # Counts may only halve between adjacent rings, marching outwards.
    eq = int(np.argmin(np.abs(v)))
    level = ideal.copy()
    for i in range(eq - 1, -1, -1):
        level[i] = min(level[i], level[i + 1] + 1)
    for i in range(eq + 1, n_v):
        level[i] = min(level[i], level[i - 1] + 1)
    return v, (n_u >> level).astype(np.int64)


def _ring_angles(m):
    """Mirror-exact azimuths for an even ring count m: (u deg, sin, cos)."""
    half = m // 2
    u = np.empty(m)
    u[: half + 1] = -180.0 + np.arange(half + 1) * (360.0 / m)
    u[half + 1 :] = -u[1:half][::-1]
    rad = np.radians(u[: half + 1])
    su = np.empty(m)
    cu = np.empty(m)
    su[: half + 1] = np.sin(rad)
    cu[: half + 1] = np.cos(rad)
    # The -180 meridian lies on the midline plane; pin its sine to exact
    # zero so the mesh is bitwise mirror symmetric.
    su[0] = 0.0
    su[half + 1 :] = -su[1:half][::-1]
    cu[half + 1 :] = cu[1:half][::-1]
    return u, su, cu


def _ring_faces(counts, offsets):
    """Triangulate pole fans, equal-count bands and 2:1 stitch bands.

    Vertex ids: 0 and 1 are the bottom/top poles; ring i occupies
    2 + offsets[i] .. 2 + offsets[i+1] in azimuth order.
    """
    faces = []
    m0 = int(counts[0])
    b0 = 2 + int(offsets[0])
    for t in range(m0):
        faces.append((0, b0 + (t + 1) % m0, b0 + t))
    for i in range(len(counts) - 1):
        m_lo, m_hi = int(counts[i]), int(counts[i + 1])
        lo = 2 + int(offsets[i])
        hi = 2 + int(offsets[i + 1])
        if m_lo == m_hi:
            for t in range(m_lo):
                a = lo + t
                b = lo + (t + 1) % m_lo
                c = hi + (t + 1) % m_hi
                d = hi + t
                if (i + t) % 2 == 0:
                    faces.append((a, b, c))
                    faces.append((a, c, d))
                else:
                    faces.append((a, b, d))
                    faces.append((b, c, d))
        elif m_lo == 2 * m_hi:
            for t in range(m_hi):
                f0 = lo + 2 * t
                f1 = lo + 2 * t + 1
                f2 = lo + (2 * t + 2) % m_lo
                c0 = hi + t
                c1 = hi + (t + 1) % m_hi
                faces.append((f0, f1, c0))
                faces.append((f1, c1, c0))
                faces.append((f1, f2, c1))
        elif m_hi == 2 * m_lo:
            for t in range(m_lo):
                c0 = lo + t
                c1 = lo + (t + 1) % m_lo
                f0 = hi + 2 * t
                f1 = hi + 2 * t + 1
                f2 = hi + (2 * t + 2) % m_hi
                faces.append((c0, f1, f0))
                faces.append((c0, c1, f1))
                faces.append((c1, f2, f1))
        else:
            raise AssertionError("adjacent ring counts must differ by at most 2x")
    m_top = int(counts[-1])
    top = 2 + int(offsets[len(counts) - 1])
    for t in range(m_top):
        faces.append((1, top + t, top + (t + 1) % m_top))
    return np.asarray(faces, dtype=np.int64)


def _signed_volume(vertices, faces):
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def _detail_field(rng, spec, layout, dir_x, dir_y, dir_z):
    """Smooth random surface detail (mm), exactly mirror-symmetric.

    Bumps are drawn in mirrored pairs and summed pair-first so the field
    is bitwise symmetric on the mirrored grid. Bump supports keep clear
    of the sagittal midline, the grid poles and all landmark
    neighbourhoods, so analytic ground truth is unaffected.
    """
    r_mean = (spec.semi_axis_x + spec.semi_axis_y + spec.semi_axis_z) / 3.0
    lm_uv = [
        (layout.u_exocanthion, layout.v_eye),
        (-layout.u_exocanthion, layout.v_eye),
        (layout.u_endocanthion, layout.v_eye),
        (-layout.u_endocanthion, layout.v_eye),
        (0.0, layout.v_nasion),
        (0.0, layout.v_pro),
        (layout.u_alar, layout.v_alar),
        (-layout.u_alar, layout.v_alar),
        (0.0, layout.v_base),
        (layout.u_chelion, layout.v_mouth),
        (-layout.u_chelion, layout.v_mouth),
        (0.0, layout.v_upper_lip),
        (0.0, layout.v_lower_lip),
        (0.0, layout.v_pognion),
    ]
    lm_uv = [(u + float(layout.drift(v)), v) for u, v in lm_uv]
    lm_dirs = np.array(
        [
            (
                np.cos(np.radians(v)) * np.sin(np.radians(u)),
                np.sin(np.radians(v)),
                np.cos(np.radians(v)) * np.cos(np.radians(u)),
            )
            for u, v in lm_uv
        ]
    )
    margin = np.radians(2.0)
    # Bumps may approach to 6mm of a landmark: outside the 5mm disc that
    # trains positives, but well inside the 10-15mm negative band, which
    # needs texture for the class variances to separate.
    landmark_clearance = 6.0 / r_mean

    field = np.zeros(dir_x.shape)
    accepted = 0
    tries = 0
    while accepted < 90 and tries < 6000:
        tries += 1
        c = rng.normal(size=3)
        norm = np.linalg.norm(c)
        # Face-scaled texture: keeps descriptors everywhere on the head
        # inside the distribution the scoring functions saw in training.
        radius_mm = rng.uniform(4.5, 9.0)
        amp = spec.surface_detail * rng.uniform(0.35, 1.0) * rng.choice((-1.0, 1.0))
        if norm < 1e-9:
            continue
        c = c / norm
        c[0] = abs(c[0])
        g0 = radius_mm / r_mean
        if np.arcsin(min(c[0], 1.0)) < g0 + margin:
            continue
        if np.arccos(np.clip(abs(c[1]), 0.0, 1.0)) < g0 + margin:
            continue
        if np.arccos(np.clip(lm_dirs @ c, -1.0, 1.0)).min() < g0 + landmark_clearance:
            continue
        d_right = dir_x * c[0] + dir_y * c[1] + dir_z * c[2]
        d_left = dir_x * (-c[0]) + dir_y * c[1] + dir_z * c[2]
        g_right = np.arccos(np.clip(d_right, -1.0, 1.0))
        g_left = np.arccos(np.clip(d_left, -1.0, 1.0))
        field += amp * (_bump(g_right / g0) + _bump(g_left / g0))
        accepted += 1
    return field


def generate_head(spec):
    """Build a synthetic head mesh and its ground truth.

    Returns (TriMesh, HeadGroundTruth). Raises when the mesh resolution
    cannot represent the nose (fewer than 2 azimuth samples across it).
    """
    if spec.nose_width < 2.0 * spec.resolution:
        raise ValidationError(
            f"resolution {spec.resolution} mm too coarse for a {spec.nose_width} mm nose "
            "(needs at least 2 samples across)"
        )
    layout = _FaceLayout(
        spec.semi_axis_y,
        spec.semi_axis_z,
        spec.nose_length,
        spec.nose_width,
        spec.face_length,
        spec.nose_bend_deg,
        variation_seed=spec.variation_seed,
    )

    v_deg, counts = _ring_grid(spec)
    n_v = v_deg.shape[0]
    rad_v = np.radians(v_deg)
    sv, cv = np.sin(rad_v), np.cos(rad_v)
    offsets = np.zeros(n_v + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    n_grid = int(offsets[-1])

    # Exactly mirror-symmetric direction samples: each ring's negative-x
    # half is its positive half with x negated.
    uu = np.empty(n_grid)
    vv = np.empty(n_grid)
    dir_x = np.empty(n_grid)
    dir_y = np.empty(n_grid)
    dir_z = np.empty(n_grid)
    for i in range(n_v):
        lo, hi = int(offsets[i]), int(offsets[i + 1])
        u, su, cu = _ring_angles(int(counts[i]))
        uu[lo:hi] = u
        vv[lo:hi] = v_deg[i]
        dir_x[lo:hi] = cv[i] * su
        dir_y[lo:hi] = sv[i]
        dir_z[lo:hi] = cv[i] * cu

    base = 1.0 / np.sqrt(
        (dir_x / spec.semi_axis_x) ** 2
        + (dir_y / spec.semi_axis_y) ** 2
        + (dir_z / spec.semi_axis_z) ** 2
    )
    radius = base + layout.radial_features(uu, vv)
    rng = np.random.default_rng(spec.seed)
    if spec.surface_detail > 0:
        geo_rng = np.random.default_rng(
            (0 if spec.variation_seed is None else int(spec.variation_seed), 29)
        )
        radius = radius + _detail_field(geo_rng, spec, layout, dir_x, dir_y, dir_z)

    vertices = np.empty((2 + n_grid, 3))
    vertices[0] = (0.0, -spec.semi_axis_y, 0.0)
    vertices[1] = (0.0, spec.semi_axis_y, 0.0)
    vertices[2:, 0] = radius * dir_x
    vertices[2:, 1] = radius * dir_y
    vertices[2:, 2] = radius * dir_z

    faces = _ring_faces(counts, offsets)
    if _signed_volume(vertices, faces) < 0:
        faces = faces[:, ::-1]
    n_head = vertices.shape[0]

    groups = {}
    if spec.noise_sigma > 0:
        noise = rng.normal(0.0, spec.noise_sigma, n_head)
        dirs = vertices / np.linalg.norm(vertices, axis=1, keepdims=True)
        vertices = vertices + noise[:, None] * dirs
    if spec.outlier_fraction > 0:
        # One-sided spike cluster on the upper back (cap-peak analogue).
        cap_u = rng.uniform(60.0, 160.0)
        cap_v = rng.uniform(25.0, 60.0)
        cd = np.array(
            [
                np.cos(np.radians(cap_v)) * np.sin(np.radians(cap_u)),
                np.sin(np.radians(cap_v)),
                np.cos(np.radians(cap_v)) * np.cos(np.radians(cap_u)),
            ]
        )
        rho = np.degrees(np.arccos(1.0 - 2.0 * spec.outlier_fraction))
        dirs = vertices / np.linalg.norm(vertices, axis=1, keepdims=True)
        ang = np.degrees(np.arccos(np.clip(dirs @ cd, -1.0, 1.0)))
        spike = 22.0 * _bump(ang / max(rho, 1e-9))
        hit = np.nonzero(spike > 0)[0]
        vertices = vertices + spike[:, None] * dirs
        groups["outliers"] = hit.astype(np.int64)
    else:
        groups["outliers"] = np.empty(0, dtype=np.int64)

    if spec.neck:
        neck_radius = 0.42 * spec.semi_axis_y
        neck_z = -12.0
        y_top = -spec.semi_axis_y + 18.0
        y_bot = -spec.semi_axis_y - 55.0
        n_ring = max(int(round(2.0 * np.pi * neck_radius / spec.resolution)), 8)
        n_rows = max(int(round((y_top - y_bot) / spec.resolution)) + 1, 2)
        ang = 2.0 * np.pi * np.arange(n_ring) / n_ring
        ys = np.linspace(y_bot, y_top, n_rows)
        ring = np.stack(
            [neck_radius * np.sin(ang), np.zeros(n_ring), neck_radius * np.cos(ang)], axis=1
        )
        neck_vertices = np.concatenate(
            [ring + np.array([0.0, y, neck_z]) for y in ys], axis=0
        )
        neck_faces = []
        for i in range(n_rows - 1):
            for j in range(n_ring):
                a = i * n_ring + j
                b = i * n_ring + (j + 1) % n_ring
                c = (i + 1) * n_ring + (j + 1) % n_ring
                d = (i + 1) * n_ring + j
                neck_faces.append((a, b, c))
                neck_faces.append((a, c, d))
        neck_faces = np.asarray(neck_faces, dtype=np.int64)
        # Outward = away from the neck axis.
        fa = neck_vertices[neck_faces[:, 0]]
        fb = neck_vertices[neck_faces[:, 1]]
        fc = neck_vertices[neck_faces[:, 2]]
        fn = np.cross(fb - fa, fc - fa)
        outward = fa - np.array([0.0, 0.0, neck_z])
        outward[:, 1] = 0.0
        if float(np.einsum("ij,ij->i", fn, outward).sum()) < 0:
            neck_faces = neck_faces[:, ::-1]
        groups["neck"] = (n_head + np.arange(neck_vertices.shape[0])).astype(np.int64)
        vertices = np.concatenate([vertices, neck_vertices], axis=0)
        faces = np.concatenate([faces, neck_faces + n_head], axis=0)
    else:
        groups["neck"] = np.empty(0, dtype=np.int64)

    mesh = TriMesh(vertices, faces)

    # Ground truth: midline landmarks from the analytic curvature extrema,
    # bilateral landmarks at their feature centres (left = mirrored right).
    angles, points2d = _solve_profile_landmarks(layout)

    def surface_point(u_deg, v_deg):
        d = np.array(
            [
                np.cos(np.radians(v_deg)) * np.sin(np.radians(u_deg)),
                np.sin(np.radians(v_deg)),
                np.cos(np.radians(v_deg)) * np.cos(np.radians(u_deg)),
            ]
        )
        r0 = 1.0 / np.sqrt(
            (d[0] / spec.semi_axis_x) ** 2
            + (d[1] / spec.semi_axis_y) ** 2
            + (d[2] / spec.semi_axis_z) ** 2
        )
        r = r0 + float(layout.radial_features(np.float64(u_deg), np.float64(v_deg)))
        return r * d

    def midline_point(name):
        if layout.bend_deg == 0.0:
            y, z = points2d[name]
            return np.array([0.0, y, z])
        psi = angles[name]
        return surface_point(float(layout.drift(psi)), psi)

    lm = np.zeros((14, 3))
    lm[anatomy.LANDMARK_IDS["nasion"] - 1] = midline_point("nasion")
    lm[anatomy.LANDMARK_IDS["pronasale"] - 1] = midline_point("pronasale")
    lm[anatomy.LANDMARK_IDS["subnasale"] - 1] = midline_point("subnasale")
    lm[anatomy.LANDMARK_IDS["labiale_superius"] - 1] = midline_point("labiale_superius")
    lm[anatomy.LANDMARK_IDS["labiale_inferius"] - 1] = midline_point("labiale_inferius")
    lm[anatomy.LANDMARK_IDS["pognion"] - 1] = midline_point("pognion")
    pairs = (
        ("right_exocanthion", "left_exocanthion", layout.u_exocanthion, layout.v_eye),
        ("right_endocanthion", "left_endocanthion", layout.u_endocanthion, layout.v_eye),
        ("right_alar_curvature", "left_alar_curvature", layout.u_alar, layout.v_alar),
        ("right_chelion", "left_chelion", layout.u_chelion, layout.v_mouth),
    )
    for right, left, u_deg, v_deg in pairs:
        du = float(layout.drift(v_deg))
        p = surface_point(u_deg + du, v_deg)
        lm[anatomy.LANDMARK_IDS[right] - 1] = p
        if layout.bend_deg == 0.0:
            lm[anatomy.LANDMARK_IDS[left] - 1] = p * np.array([-1.0, 1.0, 1.0])
        else:
            lm[anatomy.LANDMARK_IDS[left] - 1] = surface_point(-u_deg + du, v_deg)

    index = SpatialIndex(mesh.vertices, cell_size=max(2.0 * spec.resolution, 1.0))
    ids, _ = index.nearest_batch(lm)

    ridge_v = np.linspace(layout.v_base, layout.v_nasion, 41)
    ridge_u = layout.drift(ridge_v)
    ridge = np.stack([surface_point(uu_, vv_) for uu_, vv_ in zip(ridge_u, ridge_v)])

    truth = HeadGroundTruth(
        spec=spec,
        landmarks=lm,
        landmark_vertex_ids=np.asarray(ids, dtype=np.int64).reshape(14),
        symmetry_plane=Plane(np.array([1.0, 0.0, 0.0]), 0.0),
        ellipse_centre=np.zeros(2),
        ellipse_semi_axes=(spec.semi_axis_y, spec.semi_axis_z),
        profile_landmark_points=points2d,
        profile_landmark_angles=angles,
        nose_ridge=ridge,
        vertex_groups=groups,
    )
    return mesh, truth


# ------------------------------------------------------------ 2D population


@dataclasses.dataclass(frozen=True)
class ProfileFactorSpec:
    """Latent factors of the 2D profile population: (mean, std) pairs."""

    seed: int = 0
    cranial_height: tuple = (95.0, 0.0)   # ellipse semi-axis a_y (mm)
    cranial_length: tuple = (88.0, 0.0)   # ellipse semi-axis a_z (mm)
    face_ratio: tuple = (0.9, 0.0)        # face length / a_y
    nose_size: tuple = (1.0, 0.0)         # scales nose length and width
    global_size: tuple = (1.0, 0.0)       # uniform scale factor
    noise_sigma: float = 0.0              # iid point noise (mm)

    def __post_init__(self):
        for name in ("cranial_height", "cranial_length", "face_ratio", "nose_size", "global_size"):
            mean, std = getattr(self, name)
            if mean <= 0 or std < 0:
                raise ValidationError(f"{name} must have positive mean and std >= 0")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be non-negative")


@dataclasses.dataclass
class ProfileSample:
    """One synthetic sagittal profile with its ground truth."""

    factors: dict
    dense_points: np.ndarray            # (k, 2) raw profile as (y, z)
    landmark_angles: dict               # name -> degrees from +z
    landmark_points: dict               # name -> (y, z)
    face_points: np.ndarray             # (128, 2)
    cranial_points: np.ndarray          # (211, 2)
    ellipse_centre: np.ndarray          # (2,)
    ellipse_semi_axes: tuple            # (a_y, a_z) scaled

    @property
    def model_points(self):
        return np.concatenate([self.face_points, self.cranial_points], axis=0)


def _sample_face_arc(layout, scale, angles):
    """128 face points: 8 landmarks + interior points equally spaced in arc."""
    names = anatomy.PROFILE_LANDMARK_NAMES
    psi_marks = np.array([angles[n] for n in names])
    fine = np.arange(psi_marks.min() - 0.5, psi_marks.max() + 0.5, 0.01)
    r = scale * layout.midline_radius(fine)
    dr = np.gradient(r, np.radians(0.01))
    ds = np.sqrt(r * r + dr * dr) * np.radians(0.01)
    s_cum = np.concatenate([[0.0], np.cumsum(ds[:-1])])

    def arc_at(psi):
        return np.interp(psi, fine, s_cum)

    # Arc decreases as psi decreases; walk nasion -> pognion.
    out_psi = []
    for k in range(len(names) - 1):
        a, b = psi_marks[k], psi_marks[k + 1]
        sa, sb = arc_at(a), arc_at(b)
        n_inner = anatomy.FACE_GAP_COUNTS[k]
        out_psi.append(a)
        fracs = np.arange(1, n_inner + 1) / (n_inner + 1)
        s_targets = sa + fracs * (sb - sa)
        lo, hi = (sb, sa) if sb < sa else (sa, sb)
        seg = (s_cum >= lo - 1.0) & (s_cum <= hi + 1.0)
        psi_seg = fine[seg]
        s_seg = s_cum[seg]
        out_psi.extend(np.interp(s_targets, s_seg, psi_seg))
    out_psi.append(psi_marks[-1])
    psi = np.asarray(out_psi)
    rr = scale * layout.midline_radius(psi)
    return np.stack([rr * np.sin(np.radians(psi)), rr * np.cos(np.radians(psi))], axis=1)


def generate_profile_population(n, factor_spec):
    """Generate n corresponded synthetic profiles from latent factors.

    Each sample provides the raw dense profile, the solved profile-landmark
    ground truth, and the 339 corresponded model points (128 face + 211
    cranial) sampled analytically. Deterministic under the spec seed.
    """
    if n < 2:
        raise ValidationError("population size must be at least 2")
    rng = np.random.default_rng(factor_spec.seed)
    samples = []
    for _ in range(n):
        draws = rng.normal(0.0, 1.0, 5)
        f = {}
        for k, (name, clip_lo) in enumerate(
            (
                ("cranial_height", 40.0),
                ("cranial_length", 40.0),
                ("face_ratio", 0.4),
                ("nose_size", 0.25),
                ("global_size", 0.25),
            )
        ):
            mean, std = getattr(factor_spec, name)
            f[name] = max(mean + std * float(np.clip(draws[k], -2.5, 2.5)), clip_lo)

        a_y = f["cranial_height"]
        a_z = f["cranial_length"]
        layout = _FaceLayout(
            a_y,
            a_z,
            nose_length=34.0 * f["nose_size"],
            nose_width=18.0 * f["nose_size"],
            face_length=f["face_ratio"] * a_y,
        )
        g = f["global_size"]
        angles, pts = _solve_profile_landmarks(layout)
        pts = {k: g * v for k, v in pts.items()}

        psi_dense = np.arange(layout.v_pognion - layout.w_chin_v - 8.0, 205.0, 0.25)
        r_dense = g * layout.midline_radius(psi_dense)
        dense = np.stack(
            [r_dense * np.sin(np.radians(psi_dense)), r_dense * np.cos(np.radians(psi_dense))],
            axis=1,
        )

        face_pts = _sample_face_arc(layout, g, angles)
        k = np.arange(int(anatomy.CRANIAL_SPAN_DEG / anatomy.CRANIAL_STEP_DEG) + 1)
        phi = angles["nasion"] + k * anatomy.CRANIAL_STEP_DEG
        r_cr = g * layout.midline_radius(phi)
        cran_pts = np.stack(
            [r_cr * np.sin(np.radians(phi)), r_cr * np.cos(np.radians(phi))], axis=1
        )

        if factor_spec.noise_sigma > 0:
            face_pts = face_pts + rng.normal(0.0, factor_spec.noise_sigma, face_pts.shape)
            cran_pts = cran_pts + rng.normal(0.0, factor_spec.noise_sigma, cran_pts.shape)

        samples.append(
            ProfileSample(
                factors=f,
                dense_points=dense,
                landmark_angles=angles,
                landmark_points=pts,
                face_points=face_pts,
                cranial_points=cran_pts,
                ellipse_centre=np.zeros(2),
                ellipse_semi_axes=(g * a_y, g * a_z),
            )
        )
    return samples
