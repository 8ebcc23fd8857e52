"""Synthetic vision oracle: depth map, label map, and target detections
rendered from ground truth so that every bounded-error hypothesis the
estimator relies on holds by construction.

Per pixel, the center ray supplies the depth sample (scaled by a uniform
relative noise) and the four shared corner rays plus the center supply the
label vote: unanimous class wins, anything mixed or UAV-related is Unknown.
Two guards keep the label contract airtight against sub-pixel slivers that
point sampling cannot see: `strict_labels` demotes pixels at class borders,
and the pixel containing each target's ground-point projection is never
allowed to stay Ground.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .camera import CameraIntrinsics, FrameGeometry, UavPose, frame_geometry
from .world import HitClass, World


class Label(IntEnum):
    UNKNOWN = 0
    GROUND = 1
    OBSTACLE = 2
    TARGET = 3


class PixelBox(NamedTuple):
    """Axis-aligned pixel rectangle, 1-based inclusive bounds."""
    row_lo: int
    row_hi: int
    col_lo: int
    col_hi: int


@dataclass(frozen=True)
class Detection:
    target_id: int
    box: PixelBox


@dataclass(frozen=True)
class CvsConfig:
    noise_lo: float = -0.01
    noise_hi: float = 0.01
    d_max: float = 300.0
    min_pixels: int = 20
    d_ident: float = 150.0
    box_pad: int = 2
    strict_labels: bool = True


@dataclass
class CvsFrame:
    """One UAV's CVS output for one time step.

    `depth`, `labels`, `reliable` are the exported surface.  The center-ray
    hit arrays are renderer-private ground truth used only to build the
    detection list (the per-pixel target association is never exported).
    """

    depth: np.ndarray            # (R, C) noisy range, inf where nothing hit
    labels: np.ndarray           # (R, C) Label values
    reliable: np.ndarray         # (R, C) bool
    geometry: FrameGeometry
    center_dist: np.ndarray      # (R, C) true center-ray range
    center_cls: np.ndarray       # (R, C) HitClass of the center ray
    center_id: np.ndarray        # (R, C) hit index of the center ray


def _hit_to_label(cls: np.ndarray) -> np.ndarray:
    out = np.full(cls.shape, Label.UNKNOWN, dtype=np.int8)
    out[cls == HitClass.GROUND] = Label.GROUND
    out[cls == HitClass.OBSTACLE] = Label.OBSTACLE
    out[cls == HitClass.TARGET] = Label.TARGET
    return out


def _strict_demote(labels: np.ndarray) -> np.ndarray:
    """Demote pixels adjacent to any label disagreement to Unknown."""
    out = labels.copy()
    agree = np.ones(labels.shape, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            shifted = np.full(labels.shape, -1, dtype=np.int8)
            rs = slice(max(dr, 0), labels.shape[0] + min(dr, 0))
            rd = slice(max(-dr, 0), labels.shape[0] + min(-dr, 0))
            cs = slice(max(dc, 0), labels.shape[1] + min(dc, 0))
            cd = slice(max(-dc, 0), labels.shape[1] + min(-dc, 0))
            shifted[rd, cd] = labels[rs, cs]
            agree &= (shifted == labels) | (shifted == -1)
    out[~agree] = Label.UNKNOWN
    return out


def render(world: World, pose: UavPose, intr: CameraIntrinsics,
           cfg: CvsConfig, seed: int, frame_index: int,
           uav_index: int) -> CvsFrame:
    """Render the CVS triple (depth, labels, reliability) for one frame.

    Noise is drawn from a counter-keyed generator so the output depends only
    on (seed, frame_index, uav_index), never on evaluation order.
    """
    geo = frame_geometry(pose, intr)
    rows, cols = intr.n_rows, intr.n_cols
    bundle = np.array([geo.corner_dirs[0, 0], geo.corner_dirs[0, -1],
                       geo.corner_dirs[-1, -1], geo.corner_dirs[-1, 0]])

    cd, cc, ci = world.ray_cast_many(
        geo.cam, geo.corner_dirs.reshape(-1, 3), skip_uav=uav_index,
        cone_dirs=bundle)
    corner_cls = cc.reshape(rows + 1, cols + 1)
    corner_id = ci.reshape(rows + 1, cols + 1)

    zd, zc, zi = world.ray_cast_many(
        geo.cam, geo.center_dirs.reshape(-1, 3), skip_uav=uav_index,
        cone_dirs=bundle)
    center_dist = zd.reshape(rows, cols)
    center_cls = zc.reshape(rows, cols)
    center_id = zi.reshape(rows, cols)

    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=(int(frame_index), int(uav_index)))
    rng = np.random.Generator(np.random.Philox(ss))
    w = rng.uniform(cfg.noise_lo, cfg.noise_hi, size=(rows, cols))
    depth = center_dist * (1.0 + w)

    # Label vote over the 4 shared corners plus the center.
    lab_corner = _hit_to_label(corner_cls)
    lab_center = _hit_to_label(center_cls)
    samples = np.stack([lab_corner[:-1, :-1], lab_corner[:-1, 1:],
                        lab_corner[1:, 1:], lab_corner[1:, :-1], lab_center])
    unanimous = np.all(samples == samples[0], axis=0)
    labels = np.where(unanimous, samples[0], Label.UNKNOWN).astype(np.int8)

    # A Target label additionally requires a single target over all samples.
    ids = np.stack([corner_id[:-1, :-1], corner_id[:-1, 1:], corner_id[1:, 1:],
                    corner_id[1:, :-1], center_id])
    same_id = np.all(ids == ids[0], axis=0)
    labels[(labels == Label.TARGET) & ~same_id] = Label.UNKNOWN

    if cfg.strict_labels:
        labels = _strict_demote(labels)

    _force_target_pixels(world, pose, intr, labels)

    reliable = depth / (1.0 + cfg.noise_lo) <= cfg.d_max

    return CvsFrame(depth=depth, labels=labels, reliable=reliable,
                    geometry=geo, center_dist=center_dist,
                    center_cls=center_cls, center_id=center_id)


def _force_target_pixels(world: World, pose: UavPose, intr: CameraIntrinsics,
                         labels: np.ndarray) -> None:
    """No pixel containing a target's ground-point projection may be Ground.

    The line of sight to that point crosses the target body, so a Ground
    label there would violate the all-rays-stem-from-ground hypothesis even
    when every sampled ray happened to miss the body.
    """
    from .camera import project_points

    pts = np.array([[t.x1, t.x2, 0.0] for t in world.targets])
    if len(pts) == 0:
        return
    xs, ys, zs = project_points(pose, intr, pts)
    for x, y, z in zip(xs, ys, zs):
        if not (z > 0) or math.isnan(x):
            continue
        if not (0.0 <= x <= intr.n_cols and 0.0 <= y <= intr.n_rows):
            continue
        cols = {min(max(int(math.ceil(x)), 1), intr.n_cols)}
        rows = {min(max(int(math.ceil(y)), 1), intr.n_rows)}
        # A projection sitting on a pixel edge belongs to both closed quads.
        if abs(x - math.floor(x)) < 1e-9:
            cols.add(min(max(int(x), 1), intr.n_cols))
        if abs(y - math.floor(y)) < 1e-9:
            rows.add(min(max(int(y), 1), intr.n_rows))
        for r in rows:
            for c in cols:
                if labels[r - 1, c - 1] == Label.GROUND:
                    labels[r - 1, c - 1] = Label.UNKNOWN


def reliable_mask(depth: np.ndarray, cfg: CvsConfig) -> np.ndarray:
    """Pixels whose worst-case true range is within the reliable horizon."""
    return depth / (1.0 + cfg.noise_lo) <= cfg.d_max


def detect(frame: CvsFrame, cfg: CvsConfig) -> list[Detection]:
    """Identified targets and their boxes.

    A target is identified when enough reliable Target-labeled pixels whose
    center ray hits it exist and the nearest one is close enough to resolve.
    The box is the tight rectangle of those pixels, padded; the padding keeps
    the box a superset of the target's own pixels.
    """
    out: list[Detection] = []
    base = (frame.labels == Label.TARGET) & frame.reliable & \
        (frame.center_cls == HitClass.TARGET)
    if not base.any():
        return out
    for j in np.unique(frame.center_id[base]):
        mask = base & (frame.center_id == j)
        if mask.sum() < cfg.min_pixels:
            continue
        if frame.depth[mask].min() > cfg.d_ident:
            continue
        rows, cols = np.nonzero(mask)
        box = PixelBox(
            row_lo=max(int(rows.min()) + 1 - cfg.box_pad, 1),
            row_hi=min(int(rows.max()) + 1 + cfg.box_pad, frame.labels.shape[0]),
            col_lo=max(int(cols.min()) + 1 - cfg.box_pad, 1),
            col_hi=min(int(cols.max()) + 1 + cfg.box_pad, frame.labels.shape[1]),
        )
        out.append(Detection(int(j), box))
    return sorted(out, key=lambda d: d.target_id)


def check_observation_assumption(world: World, pose: UavPose,
                                 intr: CameraIntrinsics, j: int) -> bool:
    """Scenario-validity monitor: when a target's ground point is in the
    reliable FoV, the line of sight to it must cross the target's body.
    Vacuously true outside the FoV."""
    from .camera import camera_center, project_points

    tgt = world.targets[j]
    cam = camera_center(pose)
    p = np.array([[tgt.x1, tgt.x2, 0.0]])
    xs, ys, zs = project_points(pose, intr, p)
    if not (zs[0] > 0):
        return True
    if not (0.0 <= xs[0] <= intr.n_cols and 0.0 <= ys[0] <= intr.n_rows):
        return True
    if np.linalg.norm(p[0] - cam) > intr.d_max:
        return True
    return world.segment_hits_target(cam, j)


def write_pgm(frame: CvsFrame, cfg: CvsConfig, prefix: str) -> None:
    """Debug dump: depth quantized to uint16 over [0, d_max], labels as raw
    class ids."""
    depth = np.clip(np.nan_to_num(frame.depth, posinf=cfg.d_max), 0, cfg.d_max)
    q = np.round(depth / cfg.d_max * 65535).astype(">u2")
    r, c = q.shape
    with open(f"{prefix}_depth.pgm", "wb") as f:
        f.write(f"P5\n# depth, scale {cfg.d_max / 65535.0:.6g} m/step\n"
                f"{c} {r}\n65535\n".encode())
        f.write(q.tobytes())
    with open(f"{prefix}_labels.pgm", "wb") as f:
        f.write(f"P5\n# labels: 0 unknown, 1 ground, 2 obstacle, 3 target\n"
                f"{c} {r}\n255\n".encode())
        f.write(frame.labels.astype(np.uint8).tobytes())
