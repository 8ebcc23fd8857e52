"""From one CVS frame to the four measurement sets.

Directions of conservatism are fixed per set and survive every shortcut in
here: target location sets and the hidden area are outer approximations
(never under-cover), proven-free ground and obstacle margins are inner
approximations (never over-claim).

Per-pixel constructions are aggregated by row runs: adjacent same-class
pixels in a row share one merged construction.  For ground quads the merge is
exact (the merged cone's ground trace equals the union of member traces); for
depth frusta the merged truncated pyramid uses the run's depth extremes,
which contains every member pixel's pyramid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import (
    CameraIntrinsics,
    FrameGeometry,
    PixelCoord,
    UavPose,
    _dmax_base,
    cone_ground_trace,
    frame_geometry,
    pixel_cone,
    pixel_corners,
    pixel_ray,
    rot_camera_to_world,
)
from .geometry import (
    ConvexPolygon,
    GroundRegion,
    convex_hull,
    dilate_outer,
    disc_intersection_inner,
    union_of_polygons,
)
from .vision import CvsFrame, Detection, Label


class HypothesisViolation(RuntimeError):
    """A CVS contract the estimator relies on failed; the frame is invalid."""


@dataclass(frozen=True)
class PerceptionConfig:
    r_t: float = 2.5                 # target bounding-cylinder radius, m
    r_s: float = 3.0                 # obstacle safety distance, m
    noise_lo: float = -0.01
    noise_hi: float = 0.01
    dilate_k: int = 16               # circumscribed k-gon for target dilation
    arc_points: int = 16             # inscribed arc sampling for margins
    target_chunk_px: int = 3
    target_depth_break: float = 0.5  # m, split chunks on depth jumps
    margin_chunk_px: int = 5
    margin_depth_break: float = 0.75
    margin_budget: int = 800         # max margin chunks per frame
    simplify_area: float = 0.01      # per-vertex area slack for frame sets


@dataclass(frozen=True)
class TruncatedPyramid:
    """Eight-vertex outer approximation of a pixel's depth frustum.

    vertices[0:4] sit at the near range along the corner rays, vertices[4:8]
    at the far range stretched by 1/cos of the corner-to-axis angle, so the
    solid contains every point of the exact cone-shell intersection.
    """

    vertices: np.ndarray  # (8, 3)

    def ground_hull(self) -> ConvexPolygon | None:
        return convex_hull(self.vertices[:, :2])


def pixel_frustum(pose: UavPose, intr: CameraIntrinsics, px: PixelCoord,
                  depth: float, noise_lo: float, noise_hi: float,
                  ) -> TruncatedPyramid:
    """Outer pyramid for a single pixel's noisy depth sample."""
    from .camera import camera_center

    cam = camera_center(pose)
    m = rot_camera_to_world(pose, intr)
    dirs = np.array([pixel_ray(intr, x, y) for x, y in pixel_corners(px)]) @ m.T
    r, c = px
    axis = pixel_ray(intr, c - 0.5, r - 0.5) @ m.T
    near = depth / (1.0 + noise_hi)
    far = depth / (1.0 + noise_lo)
    cosang = np.clip(dirs @ axis, 1e-9, 1.0)
    verts = np.concatenate([cam + near * dirs, cam + (far / cosang)[:, None] * dirs])
    return TruncatedPyramid(verts)


def _chunk_pyramids(geo: FrameGeometry, rows: np.ndarray, c0: np.ndarray,
                    c1: np.ndarray, near: np.ndarray, far: np.ndarray,
                    ) -> np.ndarray:
    """Batched merged pyramids for pixel chunks [c0, c1] on given rows.

    Uses the normalized corner mean as the axis; any unit axis preserves the
    outer-containment argument.  Returns (n, 8, 3).
    """
    d = np.stack([geo.corner_dirs[rows, c0], geo.corner_dirs[rows, c1 + 1],
                  geo.corner_dirs[rows + 1, c1 + 1], geo.corner_dirs[rows + 1, c0]],
                 axis=1)                                  # (n, 4, 3)
    axis = d.sum(axis=1)
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    cosang = np.clip(np.einsum("nij,nj->ni", d, axis), 1e-9, 1.0)
    near_v = geo.cam + near[:, None, None] * d
    far_v = geo.cam + (far[:, None] / cosang)[:, :, None] * d
    return np.concatenate([near_v, far_v], axis=1)


def _mask_runs(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row runs of a boolean image mask: (rows, col_start, col_end) inclusive."""
    padded = np.zeros((mask.shape[0], mask.shape[1] + 2), dtype=np.int8)
    padded[:, 1:-1] = mask
    d = np.diff(padded, axis=1)
    starts = np.argwhere(d == 1)
    ends = np.argwhere(d == -1)
    return starts[:, 0], starts[:, 1], ends[:, 1] - 1


def _split_chunks(depth_row: np.ndarray, c0: int, c1: int, max_px: int,
                  depth_break: float) -> list[tuple[int, int]]:
    """Split [c0, c1] at depth discontinuities and a max pixel width."""
    out = []
    s = c0
    for c in range(c0, c1 + 1):
        wide = c + 1 - s >= max_px
        jump = c < c1 and abs(depth_row[c + 1] - depth_row[c]) > depth_break
        if wide or jump or c == c1:
            out.append((s, c))
            s = c + 1
    return out


def _run_ground_quads(geo: FrameGeometry, rows, c0s, c1s,
                      base: np.ndarray) -> list[np.ndarray]:
    """Ground traces of run cones.  Runs whose four extreme corners all hit
    the ground use the exact homography quad; others fall back to half-plane
    clipping against `base` (which already bounds range and RoI)."""
    quads: list[np.ndarray] = []
    t = geo.corner_ground_t
    fin = np.isfinite(t)
    for r, a, b in zip(rows, c0s, c1s):
        if fin[r, a] and fin[r, b + 1] and fin[r + 1, a] and fin[r + 1, b + 1]:
            quads.append(np.array([geo.corner_ground_xy[r, a],
                                   geo.corner_ground_xy[r, b + 1],
                                   geo.corner_ground_xy[r + 1, b + 1],
                                   geo.corner_ground_xy[r + 1, a]]))
        else:
            dirs = np.stack([geo.corner_dirs[r, a], geo.corner_dirs[r, b + 1],
                             geo.corner_dirs[r + 1, b + 1], geo.corner_dirs[r + 1, a]])
            verts = cone_ground_trace(geo.cam, dirs, base)
            if len(verts) >= 3:
                quads.append(verts)
    return quads


def free_ground(geo: FrameGeometry, intr: CameraIntrinsics, labels: np.ndarray,
                reliable: np.ndarray, roi: GroundRegion) -> GroundRegion:
    """Ground proven free of target locations: the union of reliable
    Ground-pixel quads, range-clipped from inside."""
    mask = (labels == Label.GROUND) & reliable
    if not mask.any():
        return GroundRegion.empty("inner")
    base = _dmax_base(geo.cam, intr.d_max, roi, "inner")
    if len(base) == 0:
        return GroundRegion.empty("inner")
    rows, c0s, c1s = _mask_runs(mask)
    quads = _run_ground_quads(geo, rows, c0s, c1s, base)
    region = union_of_polygons(quads, "inner")
    return region.intersect(GroundRegion.from_convex(ConvexPolygon(base), "inner"))


def hidden_ground(geo: FrameGeometry, intr: CameraIntrinsics, labels: np.ndarray,
                  reliable: np.ndarray, roi: GroundRegion) -> GroundRegion:
    """Ground with no usable sight line: quads of reliable non-Ground pixels,
    range-clipped from outside."""
    mask = (labels != Label.GROUND) & reliable
    if not mask.any():
        return GroundRegion.empty("outer")
    base = _dmax_base(geo.cam, intr.d_max, roi, "outer")
    if len(base) == 0:
        return GroundRegion.empty("outer")
    rows, c0s, c1s = _mask_runs(mask)
    quads = _run_ground_quads(geo, rows, c0s, c1s, base)
    region = union_of_polygons(quads, "outer")
    return region.intersect(GroundRegion.from_convex(ConvexPolygon(base), "outer"))


def obstacle_margin(geo: FrameGeometry, intr: CameraIntrinsics,
                    labels: np.ndarray, reliable: np.ndarray, depth: np.ndarray,
                    cfg: PerceptionConfig, roi: GroundRegion) -> GroundRegion:
    """Inner approximation of the safety-distance neighborhood of observed
    obstacles: per chunk, the inscribed polygon of the intersection of discs
    centered on the projected pyramid vertices."""
    mask = (labels == Label.OBSTACLE) & reliable
    if not mask.any():
        return GroundRegion.empty("inner")
    rows, c0s, c1s = _mask_runs(mask)
    chunks: list[tuple[int, int, int]] = []
    for r, a, b in zip(rows, c0s, c1s):
        for s, e in _split_chunks(depth[r], a, b, cfg.margin_chunk_px,
                                  cfg.margin_depth_break):
            chunks.append((r, s, e))
    if len(chunks) > cfg.margin_budget:
        idx = np.unique(np.linspace(0, len(chunks) - 1, cfg.margin_budget).astype(int))
        chunks = [chunks[i] for i in idx]
    arr = np.array(chunks)
    rcs, s0, s1 = arr[:, 0], arr[:, 1], arr[:, 2]
    near = np.array([depth[r, a:b + 1].min() for r, a, b in chunks]) / (1.0 + cfg.noise_hi)
    far = np.array([depth[r, a:b + 1].max() for r, a, b in chunks]) / (1.0 + cfg.noise_lo)
    pyr = _chunk_pyramids(geo, rcs, s0, s1, near, far)
    polys = []
    for verts in pyr:
        poly = disc_intersection_inner(verts[:, :2], cfg.r_s, cfg.arc_points)
        if poly is not None:
            polys.append(poly.vertices)
    region = union_of_polygons(polys, "inner")
    return region.clip(roi)


def target_measurement_set(geo: FrameGeometry, intr: CameraIntrinsics,
                           det: Detection, labels: np.ndarray,
                           reliable: np.ndarray, depth: np.ndarray,
                           cfg: PerceptionConfig, roi: GroundRegion,
                           ) -> GroundRegion:
    """Outer set guaranteed to contain the detected target's ground location.

    Union of ground-projected pyramid hulls over the box's reliable Target
    pixels, dilated by the bounding-cylinder radius.
    """
    b = det.box
    mask = np.zeros_like(reliable)
    mask[b.row_lo - 1:b.row_hi, b.col_lo - 1:b.col_hi] = True
    mask &= (labels == Label.TARGET) & reliable
    if not mask.any():
        raise HypothesisViolation(
            f"detection of target {det.target_id}: box contains no reliable"
            " Target pixel")
    rows, c0s, c1s = _mask_runs(mask)
    chunks = []
    for r, a, b2 in zip(rows, c0s, c1s):
        for s, e in _split_chunks(depth[r], a, b2, cfg.target_chunk_px,
                                  cfg.target_depth_break):
            chunks.append((r, s, e))
    arr = np.array(chunks)
    near = np.array([depth[r, a:b2 + 1].min() for r, a, b2 in chunks]) / (1.0 + cfg.noise_hi)
    far = np.array([depth[r, a:b2 + 1].max() for r, a, b2 in chunks]) / (1.0 + cfg.noise_lo)
    pyr = _chunk_pyramids(geo, arr[:, 0], arr[:, 1], arr[:, 2], near, far)
    hulls = []
    for verts in pyr:
        h = convex_hull(verts[:, :2])
        if h is not None:
            hulls.append(h.vertices)
    projected = union_of_polygons(hulls, "outer")
    if projected.is_empty:
        raise HypothesisViolation(
            f"detection of target {det.target_id}: degenerate projection")
    return dilate_outer(projected, cfg.r_t, cfg.dilate_k).clip(roi)


@dataclass
class FramePerception:
    """One frame's measurement sets for one UAV."""

    free_ground: GroundRegion                 # inner
    obstacle_margin: GroundRegion             # inner
    hidden: GroundRegion                      # outer
    target_sets: dict[int, GroundRegion] = field(default_factory=dict)  # outer

    def to_json(self) -> dict:
        return {
            "free_ground": self.free_ground.to_json(),
            "obstacle_margin": self.obstacle_margin.to_json(),
            "hidden": self.hidden.to_json(),
            "target_sets": {str(k): v.to_json() for k, v in self.target_sets.items()},
        }

    @staticmethod
    def from_json(data: dict) -> "FramePerception":
        return FramePerception(
            free_ground=GroundRegion.from_json(data["free_ground"]),
            obstacle_margin=GroundRegion.from_json(data["obstacle_margin"]),
            hidden=GroundRegion.from_json(data["hidden"]),
            target_sets={int(k): GroundRegion.from_json(v)
                         for k, v in data["target_sets"].items()},
        )


def build_frame_perception(frame: CvsFrame, dets: list[Detection],
                           cfg: PerceptionConfig, intr: CameraIntrinsics,
                           roi: GroundRegion) -> FramePerception:
    geo = frame.geometry
    free = free_ground(geo, intr, frame.labels, frame.reliable, roi)
    hid = hidden_ground(geo, intr, frame.labels, frame.reliable, roi)
    margin = obstacle_margin(geo, intr, frame.labels, frame.reliable,
                             frame.depth, cfg, roi)
    targets = {}
    for det in dets:
        targets[det.target_id] = target_measurement_set(
            geo, intr, det, frame.labels, frame.reliable, frame.depth, cfg, roi)
    return FramePerception(
        free_ground=free.simplified(cfg.simplify_area),
        obstacle_margin=margin.simplified(cfg.simplify_area),
        hidden=hid.simplified(cfg.simplify_area),
        target_sets=targets,
    )
