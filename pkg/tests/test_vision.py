import math

import numpy as np
import pytest

from setsearch.camera import (
    CameraIntrinsics,
    UavPose,
    camera_center,
    pixel_of,
    project_points,
)
from setsearch.vision import (
    CvsConfig,
    Label,
    check_observation_assumption,
    detect,
    reliable_mask,
    render,
    write_pgm,
)
from setsearch.world import HitClass, Obstacle, TargetTruth, UavTruth, World


def small_intr(theta=math.pi / 4, d_max=300.0, rows=36, cols=48):
    return CameraIntrinsics.from_aperture(rows, cols, math.pi / 4, theta, d_max)


def scene_world(targets=None, obstacles=None):
    return World(roi_half=100.0,
                 obstacles=list(obstacles or []),
                 targets=list(targets or []),
                 uavs=[UavTruth(0.0, 0.0, 40.0, 0.0, 5.0)],
                 r_s=3.0, v_max=1.0)


def look_pose(alt=40.0, yaw=0.0):
    return UavPose(np.array([0.0, 0.0, alt]), yaw=yaw)


# ---------------------------------------------------------------------------
# depth model
# ---------------------------------------------------------------------------

def test_zero_noise_depth_equals_exact_range():
    w = scene_world(targets=[TargetTruth(30.0, 0.0, 0.0, 0.0)])
    cfg = CvsConfig(noise_lo=0.0, noise_hi=0.0)
    frame = render(w, look_pose(), small_intr(), cfg, seed=1, frame_index=0,
                   uav_index=0)
    finite = np.isfinite(frame.center_dist)
    assert np.allclose(frame.depth[finite], frame.center_dist[finite])


def test_depth_enclosure_interval_contains_truth():
    w = scene_world(obstacles=[Obstacle.box(35, 5, 10, 10, 15)])
    cfg = CvsConfig()
    frame = render(w, look_pose(), small_intr(), cfg, seed=7, frame_index=3,
                   uav_index=0)
    finite = np.isfinite(frame.center_dist)
    lo = frame.depth / (1.0 + cfg.noise_hi)
    hi = frame.depth / (1.0 + cfg.noise_lo)
    assert np.all(lo[finite] <= frame.center_dist[finite] + 1e-9)
    assert np.all(frame.center_dist[finite] <= hi[finite] + 1e-9)


def test_reliable_mask_threshold_values():
    cfg = CvsConfig(noise_lo=-0.01, noise_hi=0.01, d_max=300.0)
    depth = np.array([[297.0, 298.0, np.inf]])
    mask = reliable_mask(depth, cfg)
    assert mask[0, 0]          # 297 / 0.99 = 300.0 <= 300
    assert not mask[0, 1]      # 298 / 0.99 = 301.01 > 300
    assert not mask[0, 2]      # sky


def test_render_deterministic_per_key():
    w = scene_world(targets=[TargetTruth(25.0, 3.0, 0.4, 0.0)])
    cfg = CvsConfig()
    a = render(w, look_pose(), small_intr(), cfg, seed=5, frame_index=2, uav_index=1)
    b = render(w, look_pose(), small_intr(), cfg, seed=5, frame_index=2, uav_index=1)
    c = render(w, look_pose(), small_intr(), cfg, seed=5, frame_index=3, uav_index=1)
    assert np.array_equal(a.depth, b.depth)
    assert np.array_equal(a.labels, b.labels)
    finite = np.isfinite(a.depth) & np.isfinite(c.depth)
    assert not np.allclose(a.depth[finite], c.depth[finite])


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------

def test_building_edge_pixels_unknown():
    obs = Obstacle.box(30.0, 0.0, 12.0, 12.0, 20.0)
    w = scene_world(obstacles=[obs])
    cfg = CvsConfig(strict_labels=False)
    intr = small_intr()
    frame = render(w, look_pose(), intr, cfg, seed=1, frame_index=0, uav_index=0)
    corner_is_obs = frame.geometry.corner_dirs  # noqa: F841 (documented below)
    # Pixels whose corner votes disagree must be Unknown: find a pixel whose
    # center hits the obstacle adjacent to one whose center hits ground.
    obs_px = frame.center_cls == HitClass.OBSTACLE
    gnd_px = frame.center_cls == HitClass.GROUND
    boundary = obs_px & (np.roll(gnd_px, 1, axis=1) | np.roll(gnd_px, -1, axis=1))
    rows, cols = np.nonzero(boundary)
    assert len(rows) > 0
    mixed = frame.labels[boundary]
    # The exact silhouette pixels vote mixed corners -> Unknown.
    assert (mixed == Label.UNKNOWN).sum() > 0
    # And far from any silhouette, labels match the center hit class.
    interior = obs_px.copy()
    for ax, sh in [(0, 1), (0, -1), (1, 1), (1, -1)]:
        interior &= np.roll(obs_px, sh, axis=ax)
    assert np.all(frame.labels[interior] == Label.OBSTACLE)


def test_strict_labels_demote_class_borders():
    obs = Obstacle.box(30.0, 0.0, 12.0, 12.0, 20.0)
    w = scene_world(obstacles=[obs])
    intr = small_intr()
    loose = render(w, look_pose(), intr, CvsConfig(strict_labels=False),
                   seed=1, frame_index=0, uav_index=0)
    strict = render(w, look_pose(), intr, CvsConfig(strict_labels=True),
                    seed=1, frame_index=0, uav_index=0)
    assert (strict.labels == Label.UNKNOWN).sum() > (loose.labels == Label.UNKNOWN).sum()
    # Strictness only demotes, never invents a class.
    changed = strict.labels != loose.labels
    assert np.all(strict.labels[changed] == Label.UNKNOWN)


def test_other_uavs_label_unknown():
    w = World(roi_half=100.0, obstacles=[], targets=[],
              uavs=[UavTruth(0.0, 0.0, 40.0, 0.0, 5.0),
                    UavTruth(25.0, 0.0, 15.0, 0.0, 5.0)],
              r_s=3.0, v_max=1.0)
    w.uav_body_radius = 2.0  # fat body so several pixels see it
    intr = small_intr()
    frame = render(w, look_pose(), intr, CvsConfig(strict_labels=False),
                   seed=1, frame_index=0, uav_index=0)
    uav_px = frame.center_cls == HitClass.UAV
    assert uav_px.any()
    assert np.all(frame.labels[uav_px] == Label.UNKNOWN)


def test_no_reliable_ground_pixel_holds_a_target_projection(rng):
    # The load-bearing label contract, checked against ground truth.
    intr = small_intr(theta=math.pi / 5)
    cfg = CvsConfig(d_max=120.0)
    for trial in range(10):
        targets = [TargetTruth(rng.uniform(5, 60), rng.uniform(-25, 25),
                               rng.uniform(-3, 3), 0.0) for _ in range(3)]
        w = scene_world(targets=targets)
        pose = look_pose(alt=rng.uniform(25, 50))
        frame = render(w, pose, intr, cfg, seed=trial, frame_index=0, uav_index=0)
        pts = np.array([[t.x1, t.x2, 0.0] for t in targets])
        xs, ys, zs = project_points(pose, intr, pts)
        for x, y, z in zip(xs, ys, zs):
            if not (z > 0) or math.isnan(x):
                continue
            px = pixel_of(x, y, intr)
            if px is None:
                continue
            lab = frame.labels[px.row - 1, px.col - 1]
            if frame.reliable[px.row - 1, px.col - 1]:
                assert lab != Label.GROUND


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

def test_detect_visible_target():
    w = scene_world(targets=[TargetTruth(30.0, 0.0, 0.3, 0.0)])
    cfg = CvsConfig(min_pixels=5, d_ident=150.0)
    frame = render(w, look_pose(), small_intr(rows=72, cols=96), cfg, seed=2,
                   frame_index=0, uav_index=0)
    dets = detect(frame, cfg)
    assert [d.target_id for d in dets] == [0]
    box = dets[0].box
    mask = (frame.center_id == 0) & (frame.center_cls == HitClass.TARGET) & \
        (frame.labels == Label.TARGET) & frame.reliable
    rows, cols = np.nonzero(mask)
    assert box.row_lo <= rows.min() + 1 and rows.max() + 1 <= box.row_hi
    assert box.col_lo <= cols.min() + 1 and cols.max() + 1 <= box.col_hi


def test_detect_skips_occluded_target():
    # Building between the camera and the target.
    w = scene_world(targets=[TargetTruth(60.0, 0.0, 0.0, 0.0)],
                    obstacles=[Obstacle.box(30.0, 0.0, 10.0, 30.0, 30.0)])
    cfg = CvsConfig(min_pixels=3)
    frame = render(w, look_pose(), small_intr(rows=72, cols=96), cfg, seed=2,
                   frame_index=0, uav_index=0)
    assert detect(frame, cfg) == []


def test_detect_skips_target_beyond_ident_range():
    intr = small_intr(theta=math.pi / 12, d_max=300.0, rows=144, cols=192)
    w = scene_world(targets=[TargetTruth(170.0, 0.0, 0.0, 0.0)])
    cfg = CvsConfig(min_pixels=1, d_ident=150.0)
    frame = render(w, look_pose(), intr, cfg, seed=2, frame_index=0, uav_index=0)
    assert detect(frame, cfg) == []
    # min_pixels gate alone would have passed: the pixels are there.
    assert ((frame.center_cls == HitClass.TARGET) & frame.reliable).sum() >= 1


def test_two_overlapping_targets_get_own_boxes():
    # One car partly behind the other in image space.
    w = scene_world(targets=[TargetTruth(28.0, 0.0, 0.0, 0.0),
                             TargetTruth(36.0, 2.0, 0.0, 0.0)])
    cfg = CvsConfig(min_pixels=3, box_pad=2)
    frame = render(w, look_pose(), small_intr(rows=72, cols=96), cfg, seed=2,
                   frame_index=0, uav_index=0)
    dets = detect(frame, cfg)
    assert [d.target_id for d in dets] == [0, 1]
    for d in dets:
        mask = (frame.center_id == d.target_id) & \
            (frame.center_cls == HitClass.TARGET) & \
            (frame.labels == Label.TARGET) & frame.reliable
        rows, cols = np.nonzero(mask)
        assert d.box.row_lo <= rows.min() + 1 and rows.max() + 1 <= d.box.row_hi
        assert d.box.col_lo <= cols.min() + 1 and cols.max() + 1 <= d.box.col_hi


# ---------------------------------------------------------------------------
# observation assumption
# ---------------------------------------------------------------------------

def test_observation_assumption_cases():
    w = scene_world(targets=[TargetTruth(30.0, 0.0, 0.7, 0.0),
                             TargetTruth(500.0, 0.0, 0.0, 0.0)])
    intr = small_intr()
    pose = look_pose()
    assert check_observation_assumption(w, pose, intr, 0)
    # Outside the FoV: vacuously true.
    assert check_observation_assumption(w, pose, intr, 1)


def test_write_pgm(tmp_path):
    w = scene_world(targets=[TargetTruth(30.0, 0.0, 0.0, 0.0)])
    cfg = CvsConfig()
    frame = render(w, look_pose(), small_intr(), cfg, seed=1, frame_index=0,
                   uav_index=0)
    prefix = str(tmp_path / "frame0")
    write_pgm(frame, cfg, prefix)
    data = (tmp_path / "frame0_depth.pgm").read_bytes()
    assert data.startswith(b"P5")
    assert (tmp_path / "frame0_labels.pgm").exists()
