"""Rotation matrices, organized point-cloud grids and pinhole projection.

Coordinates follow the organized RGB-D convention: x right, y down, z is
the depth axis (positive in front of the camera). A point-cloud grid is an
H x W lattice of 3D points co-located with the pixels of a texture image;
cells with zero depth carry no measurement and are masked invalid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RotationAngles",
    "PointCloudGrid",
    "CameraModel",
    "rotation_matrix",
    "rotate_cloud",
    "view_grid",
    "project_points",
    "backproject_depth",
]

DEFAULT_VIEW_ANGLES = (-math.pi / 6, 0.0, math.pi / 6)


@dataclass(frozen=True)
class RotationAngles:
    """Rotation angles (radians) around the three coordinate axes."""

    theta_x: float
    theta_y: float
    theta_z: float

    def __post_init__(self):
        for name in ("theta_x", "theta_y", "theta_z"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.theta_x, self.theta_y, self.theta_z)


@dataclass
class PointCloudGrid:
    """Organized H x W grid of 3D points with a per-cell validity mask.

    ``points`` has shape (H, W, 3); ``valid`` has shape (H, W). Invalid
    cells are ignored by every downstream operation.
    """

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise ValueError(f"points must have shape (H, W, 3), got {self.points.shape}")
        if self.valid.shape != self.points.shape[:2]:
            raise ValueError(
                f"valid mask shape {self.valid.shape} does not match grid {self.points.shape[:2]}"
            )
        if not np.all(np.isfinite(self.points[self.valid])):
            raise ValueError("points must be finite where valid")

    @property
    def height(self) -> int:
        return self.points.shape[0]

    @property
    def width(self) -> int:
        return self.points.shape[1]

    @classmethod
    def from_depth_grid(cls, xyz: np.ndarray) -> "PointCloudGrid":
        """Build a grid from raw (H, W, 3) coordinates; zero depth means invalid."""
        xyz = np.asarray(xyz, dtype=np.float64)
        valid = xyz[..., 2] > 0
        return cls(points=xyz, valid=valid)

    def valid_points(self) -> np.ndarray:
        """Return the (N, 3) array of valid points in row-major order."""
        return self.points[self.valid]

    def centered(self) -> "PointCloudGrid":
        """Translate so the centroid of the valid points sits at the origin."""
        if not self.valid.any():
            return PointCloudGrid(self.points.copy(), self.valid.copy())
        centroid = self.points[self.valid].mean(axis=0)
        pts = self.points.copy()
        pts[self.valid] -= centroid
        return PointCloudGrid(pts, self.valid.copy())

    def bounding_radius(self) -> float:
        """Largest distance of a valid point from the origin."""
        if not self.valid.any():
            return 0.0
        return float(np.linalg.norm(self.points[self.valid], axis=1).max())


@dataclass
class CameraModel:
    """Pinhole camera: intrinsics (fx, fy, cx, cy) plus a rigid extrinsic.

    The extrinsic maps object coordinates to camera coordinates as
    ``X_cam = rotation @ X + translation``. ``z_c_mode`` fixes how the
    projective normalizer is chosen; only per-point camera depth is
    supported.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    z_c_mode: str = "depth"

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.rotation.shape != (3, 3):
            raise ValueError("extrinsic rotation must be 3x3")
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-9):
            raise ValueError("extrinsic rotation must be orthogonal")
        if self.z_c_mode != "depth":
            raise ValueError(f"unsupported z_c_mode {self.z_c_mode!r}; only 'depth' is defined")


def _check_orthonormal(r: np.ndarray, tol: float = 1e-9) -> None:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got shape {r.shape}")
    if np.abs(r.T @ r - np.eye(3)).max() > tol:
        raise ValueError("matrix is not orthogonal within 1e-9")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("matrix determinant differs from 1 beyond 1e-9")


def rotation_matrix(angles: RotationAngles) -> np.ndarray:
    """Compose the three-factor rotation for the given per-axis angles.

    The factors are multiplied left to right: the theta_x factor acts in the
    xy-plane, the theta_y factor in the xz-plane and the theta_z factor in
    the yz-plane. The factor layout is kept exactly in this (unconventional)
    axis labelling; downstream code only relies on the product being a
    proper rotation.
    """
    tx, ty, tz = angles.as_tuple()
    cx, sx = math.cos(tx), math.sin(tx)
    cy, sy = math.cos(ty), math.sin(ty)
    cz, sz = math.cos(tz), math.sin(tz)
    m1 = np.array([[cx, sx, 0.0], [-sx, cx, 0.0], [0.0, 0.0, 1.0]])
    m2 = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    m3 = np.array([[1.0, 0.0, 0.0], [0.0, cz, sz], [0.0, -sz, cz]])
    return m1 @ m2 @ m3


def rotate_cloud(cloud: PointCloudGrid, r: np.ndarray) -> PointCloudGrid:
    """Rotate every valid point of the grid; the validity mask is unchanged."""
    _check_orthonormal(r)
    pts = cloud.points.copy()
    pts[cloud.valid] = cloud.points[cloud.valid] @ np.asarray(r, dtype=np.float64).T
    return PointCloudGrid(points=pts, valid=cloud.valid.copy())


def view_grid(per_axis_angles=DEFAULT_VIEW_ANGLES) -> list[RotationAngles]:
    """Enumerate the 27 per-axis angle triples of a 3-value rotation grid.

    Triples are ordered lexicographically with theta_x outermost and
    theta_z innermost; consumers index them 1-based. For the default
    symmetric grid the 14th entry is the identity view.
    """
    values = tuple(float(a) for a in per_axis_angles)
    if len(values) != 3:
        raise ValueError(f"expected exactly 3 per-axis angle values, got {len(values)}")
    if len(set(values)) != 3:
        raise ValueError(f"per-axis angle values must be distinct, got {values}")
    return [RotationAngles(tx, ty, tz) for tx, ty, tz in itertools.product(values, repeat=3)]


def project_points(cloud: PointCloudGrid, cam: CameraModel):
    """Project the grid through the camera; returns (u, v, depth, visible).

    Each output has shape (H, W). A cell is visible iff it is valid and its
    camera-space depth is strictly positive; (u, v) and depth are undefined
    (zero-filled) elsewhere. Non-positive depth yields an invisible flag,
    never an error.
    """
    h, w = cloud.points.shape[:2]
    u = np.zeros((h, w), dtype=np.float64)
    v = np.zeros((h, w), dtype=np.float64)
    depth = np.zeros((h, w), dtype=np.float64)
    visible = np.zeros((h, w), dtype=bool)
    if not cloud.valid.any():
        return u, v, depth, visible

    pts = cloud.points[cloud.valid]
    cam_pts = pts @ cam.rotation.T + cam.translation
    z = cam_pts[:, 2]
    vis = z > 0
    # Guard the division on the invisible points; their (u, v) are discarded.
    z_safe = np.where(vis, z, 1.0)
    uu = cam.cx + cam.fx * cam_pts[:, 0] / z_safe
    vv = cam.cy + cam.fy * cam_pts[:, 1] / z_safe

    u[cloud.valid] = np.where(vis, uu, 0.0)
    v[cloud.valid] = np.where(vis, vv, 0.0)
    depth[cloud.valid] = np.where(vis, z, 0.0)
    visible[cloud.valid] = vis
    return u, v, depth, visible


def backproject_depth(depth: np.ndarray, cam: CameraModel) -> PointCloudGrid:
    """Lift a depth image to an organized cloud through the camera intrinsics.

    Cell (i, j) with depth z > 0 becomes ((j - cx) z / fx, (i - cy) z / fy, z),
    so projecting the result through the same camera lands back on pixel
    (i, j). Zero-depth cells are invalid.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValueError(f"depth must be 2D, got shape {depth.shape}")
    h, w = depth.shape
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    pts = np.zeros((h, w, 3), dtype=np.float64)
    pts[..., 0] = (jj - cam.cx) * depth / cam.fx
    pts[..., 1] = (ii - cam.cy) * depth / cam.fy
    pts[..., 2] = depth
    return PointCloudGrid(points=pts, valid=depth > 0)


def fit_camera(cloud: PointCloudGrid, canvas_h: int, canvas_w: int,
               fill: float = 0.8, distance_factor: float = 4.0) -> CameraModel:
    """Choose a camera that keeps a centered cloud in frame under any rotation.

    The cloud is pushed ``distance_factor`` bounding radii down the optical
    axis and the focal length is set so the bounding sphere spans ``fill``
    of the smaller canvas side. Deterministic in the cloud geometry.
    """
    radius = cloud.bounding_radius()
    if radius <= 0:
        radius = 1.0
    dist = distance_factor * radius
    # Lateral extent r at depth (dist - r) maps to at most fill/2 of the canvas.
    half_span = 0.5 * fill * min(canvas_h, canvas_w)
    f = half_span * (dist - radius) / radius
    return CameraModel(
        fx=f,
        fy=f,
        cx=(canvas_w - 1) / 2.0,
        cy=(canvas_h - 1) / 2.0,
        translation=np.array([0.0, 0.0, dist]),
    )
