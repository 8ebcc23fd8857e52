"""Pinhole camera geometry: frames, projection, pixel ray cones, and the
intersection of the field of view with the ground plane.

Conventions: the world frame has z up and a flat ground at z = 0.  The body
frame has x forward (along yaw), y left, z up.  The camera frame has z along
the optical axis, x along pixel rows, y along columns; the camera is pitched
down by a fixed angle theta from the body x-axis.  Pixel (n_r, n_c) is
1-based and covers the half-open coordinate box (n_c-1, n_c] x (n_r-1, n_r].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import (
    ConvexPolygon,
    GroundRegion,
    clip_convex_halfplane,
    disc_polygon_inner,
    disc_polygon_outer,
)

HORIZON_EPS = 1e-6  # rays within this of ground-parallel never hit the ground


class BehindCameraError(ValueError):
    pass


class PixelCoord(NamedTuple):
    row: int  # n_r in [1, n_rows]
    col: int  # n_c in [1, n_cols]


@dataclass(frozen=True)
class CameraIntrinsics:
    n_rows: int
    n_cols: int
    f_c: float       # focal length in pixels, column direction
    f_r: float       # focal length in pixels, row direction
    theta: float     # fixed mount pitch, rad
    d_max: float     # reliable range, m

    @staticmethod
    def from_aperture(n_rows: int, n_cols: int, aperture_rad: float,
                      theta_rad: float, d_max_m: float) -> "CameraIntrinsics":
        """Build intrinsics from the horizontal full aperture, square pixels."""
        f = (n_cols / 2.0) / math.tan(aperture_rad / 2.0)
        return CameraIntrinsics(n_rows, n_cols, f, f, theta_rad, d_max_m)

    @staticmethod
    def from_physical(n_rows: int, n_cols: int, f: float, h_r: float,
                      h_c: float, theta_rad: float, d_max_m: float) -> "CameraIntrinsics":
        return CameraIntrinsics(n_rows, n_cols, f * n_cols / h_c,
                                f * n_rows / h_r, theta_rad, d_max_m)


@dataclass(frozen=True)
class UavPose:
    position: np.ndarray           # (3,), altitude > 0
    yaw: float                     # rad
    camera_offset: np.ndarray = None  # (3,) in body frame

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, float))
        off = np.zeros(3) if self.camera_offset is None else np.asarray(self.camera_offset, float)
        object.__setattr__(self, "camera_offset", off)


def rot_world_to_body(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_body_to_camera(theta: float) -> np.ndarray:
    perm = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    c, s = math.cos(theta), math.sin(theta)
    pitch = np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    return perm @ pitch


def rot_camera_to_world(pose: UavPose, intr: CameraIntrinsics) -> np.ndarray:
    return (rot_body_to_camera(intr.theta) @ rot_world_to_body(pose.yaw)).T


def camera_center(pose: UavPose) -> np.ndarray:
    return pose.position + rot_world_to_body(pose.yaw).T @ pose.camera_offset


def world_to_camera(pose: UavPose, intr: CameraIntrinsics,
                    p: Sequence[float]) -> np.ndarray:
    p = np.asarray(p, float)
    body = rot_world_to_body(pose.yaw) @ (p - pose.position)
    return rot_body_to_camera(intr.theta) @ (body - pose.camera_offset)


def camera_to_world(pose: UavPose, intr: CameraIntrinsics,
                    pc: Sequence[float]) -> np.ndarray:
    pc = np.asarray(pc, float)
    body = rot_body_to_camera(intr.theta).T @ pc + pose.camera_offset
    return rot_world_to_body(pose.yaw).T @ body + pose.position


def project(pose: UavPose, intr: CameraIntrinsics,
            p: Sequence[float]) -> tuple[float, float]:
    """Continuous CCD coordinates (x, y) of a world point."""
    pc = world_to_camera(pose, intr, p)
    if pc[2] <= 0.0:
        raise BehindCameraError("point is behind the camera")
    x = -intr.f_c * pc[0] / pc[2] + intr.n_cols / 2.0
    y = -intr.f_r * pc[1] / pc[2] + intr.n_rows / 2.0
    return float(x), float(y)


def project_points(pose: UavPose, intr: CameraIntrinsics,
                   pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection; returns (x, y, z_cam). Points with z_cam <= 0
    get nan coordinates."""
    m = rot_body_to_camera(intr.theta) @ rot_world_to_body(pose.yaw)
    cam = camera_center(pose)
    pc = (np.asarray(pts, float) - cam) @ m.T
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(z > 0, -intr.f_c * pc[:, 0] / z + intr.n_cols / 2.0, np.nan)
        y = np.where(z > 0, -intr.f_r * pc[:, 1] / z + intr.n_rows / 2.0, np.nan)
    return x, y, z


def pixel_of(x: float, y: float, intr: CameraIntrinsics) -> PixelCoord | None:
    """Pixel containing continuous coordinates under the half-open convention."""
    if not (0.0 <= x <= intr.n_cols and 0.0 <= y <= intr.n_rows):
        return None
    col = min(max(int(math.ceil(x)), 1), intr.n_cols)
    row = min(max(int(math.ceil(y)), 1), intr.n_rows)
    return PixelCoord(row, col)


def pixel_ray(intr: CameraIntrinsics, x: float, y: float) -> np.ndarray:
    """Unit direction, camera frame, of the light ray illuminating (x, y)."""
    v = np.array([(intr.n_cols / 2.0 - x) / intr.f_c,
                  (intr.n_rows / 2.0 - y) / intr.f_r,
                  1.0])
    return v / np.linalg.norm(v)


def pixel_corners(px: PixelCoord) -> list[tuple[float, float]]:
    r, c = px
    return [(c - 1.0, r - 1.0), (float(c), r - 1.0), (float(c), float(r)),
            (c - 1.0, float(r))]


def pixel_cone(pose: UavPose, intr: CameraIntrinsics,
               px: PixelCoord) -> np.ndarray:
    """The 4 corner ray directions of a pixel, unit vectors in the world
    frame.  The pixel's ray set is the convex span of these."""
    m = rot_camera_to_world(pose, intr)
    dirs = np.array([pixel_ray(intr, x, y) for x, y in pixel_corners(px)])
    return dirs @ m.T


# ---------------------------------------------------------------------------
# Ground traces
# ---------------------------------------------------------------------------

def _cone_halfplanes(cam: np.ndarray, dirs: np.ndarray) -> list[tuple[np.ndarray, float]]:
    """Half-plane constraints on the ground induced by a cone's face planes.

    dirs: (4, 3) corner directions in consistent winding order.  Returns
    [(normal_xy, offset)] with inside = normal_xy . p >= offset.  A horizontal
    face contributes nothing when satisfied, or an impossible constraint.
    """
    center = dirs.sum(axis=0)
    planes = []
    for i in range(4):
        n = np.cross(dirs[i], dirs[(i + 1) % 4])
        if n @ center < 0:
            n = -n
        nxy = n[:2]
        off = float(n @ cam)
        if np.hypot(*nxy) < 1e-15:
            if -off < 0:  # constraint 0 >= off is violated everywhere
                return [(np.array([1.0, 0.0]), math.inf)]
            continue
        planes.append((nxy, off))
    return planes


def cone_ground_trace(cam: np.ndarray, dirs: np.ndarray,
                      base: np.ndarray) -> np.ndarray:
    """Clip convex CCW polygon `base` (ground) to the cone's ground trace."""
    out = base
    for nxy, off in _cone_halfplanes(cam, dirs):
        if math.isinf(off):
            return np.empty((0, 2))
        out = clip_convex_halfplane(out, nxy, off)
        if len(out) == 0:
            return out
    return out


def _dmax_base(cam: np.ndarray, d_max: float,
               roi: GroundRegion | None, clip: str, k: int = 64) -> np.ndarray:
    """Convex polygon of the reachable-ground disc, clipped to the RoI box."""
    h = cam[2]
    if h >= d_max:
        return np.empty((0, 2))
    rad = math.sqrt(d_max * d_max - h * h)
    disc = disc_polygon_inner(cam[:2], rad, k) if clip == "inner" \
        else disc_polygon_outer(cam[:2], rad, k)
    base = np.asarray(disc.exterior.coords)[:-1]
    if roi is not None and not roi.is_empty:
        xmin, ymin, xmax, ymax = roi.geom.bounds
        for nrm, off in [((1.0, 0.0), xmin), ((-1.0, 0.0), -xmax),
                         ((0.0, 1.0), ymin), ((0.0, -1.0), -ymax)]:
            base = clip_convex_halfplane(base, nrm, off)
            if len(base) == 0:
                break
    return base


def fov_ground_region(pose: UavPose, intr: CameraIntrinsics,
                      roi: GroundRegion | None = None) -> GroundRegion:
    """Intersection of the FoV half-cone with the ground, clipped to the
    reliable-range ball footprint and the RoI.  Inner-directed: the disc is
    approximated from inside."""
    cam = camera_center(pose)
    m = rot_camera_to_world(pose, intr)
    corners = [(0.0, 0.0), (float(intr.n_cols), 0.0),
               (float(intr.n_cols), float(intr.n_rows)), (0.0, float(intr.n_rows))]
    dirs = np.array([pixel_ray(intr, x, y) for x, y in corners]) @ m.T
    base = _dmax_base(cam, intr.d_max, roi, "inner")
    if len(base) == 0:
        return GroundRegion.empty("inner")
    verts = cone_ground_trace(cam, dirs, base)
    if len(verts) < 3:
        return GroundRegion.empty("inner")
    return GroundRegion.from_convex(ConvexPolygon(verts), "inner")


def pixel_ground_quad(pose: UavPose, intr: CameraIntrinsics, px: PixelCoord,
                      roi: GroundRegion | None = None,
                      clip: str = "inner") -> ConvexPolygon | None:
    """Ground points whose image falls in the pixel, range-clipped.

    `clip` selects the conservatism of the range-ball footprint: "inner" for
    proven-free uses, "outer" for hidden-area uses.
    """
    cam = camera_center(pose)
    dirs = pixel_cone(pose, intr, px)
    base = _dmax_base(cam, intr.d_max, roi, clip)
    if len(base) == 0:
        return None
    verts = cone_ground_trace(cam, dirs, base)
    if len(verts) < 3:
        return None
    return ConvexPolygon(verts)


# ---------------------------------------------------------------------------
# Whole-frame geometry grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameGeometry:
    """Per-frame ray grids shared by the renderer and the set constructions.

    Pure pose/intrinsics geometry; carries no world knowledge.  Corner grids
    have shape (n_rows+1, n_cols+1): corner [i, j] is the ray through CCD
    coordinates (x=j, y=i), shared by the four adjacent pixels.
    """

    cam: np.ndarray                 # (3,)
    corner_dirs: np.ndarray         # (R+1, C+1, 3) unit, world frame
    center_dirs: np.ndarray         # (R, C, 3) unit, world frame
    corner_ground_t: np.ndarray     # (R+1, C+1) ray parameter, inf if no hit
    corner_ground_xy: np.ndarray    # (R+1, C+1, 2) ground hit, nan if no hit
    cos_center_corner: np.ndarray   # (R, C, 4) cos angle center ray/corner ray


def frame_geometry(pose: UavPose, intr: CameraIntrinsics) -> FrameGeometry:
    m = rot_camera_to_world(pose, intr)
    cam = camera_center(pose)

    def dir_grid(xs, ys):
        gx, gy = np.meshgrid(xs, ys)
        vx = (intr.n_cols / 2.0 - gx) / intr.f_c
        vy = (intr.n_rows / 2.0 - gy) / intr.f_r
        v = np.stack([vx, vy, np.ones_like(vx)], axis=-1)
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        return v @ m.T

    corner = dir_grid(np.arange(intr.n_cols + 1, dtype=float),
                      np.arange(intr.n_rows + 1, dtype=float))
    center = dir_grid(np.arange(intr.n_cols, dtype=float) + 0.5,
                      np.arange(intr.n_rows, dtype=float) + 0.5)

    dz = corner[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dz < -HORIZON_EPS, -cam[2] / dz, np.inf)
        xy = cam[:2] + t[..., None] * corner[..., :2]

    cosang = np.empty(center.shape[:2] + (4,))
    cosang[..., 0] = np.einsum("ijk,ijk->ij", center, corner[:-1, :-1])
    cosang[..., 1] = np.einsum("ijk,ijk->ij", center, corner[:-1, 1:])
    cosang[..., 2] = np.einsum("ijk,ijk->ij", center, corner[1:, 1:])
    cosang[..., 3] = np.einsum("ijk,ijk->ij", center, corner[1:, :-1])

    return FrameGeometry(cam=cam, corner_dirs=corner, center_dirs=center,
                         corner_ground_t=t, corner_ground_xy=xy,
                         cos_center_corner=cosang)
