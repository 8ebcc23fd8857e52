"""Ground-truth environment: obstacles, targets, UAVs, dynamics, and the
range oracle used by the synthetic vision system.

Obstacles are stacks of extruded convex prisms with nested footprints, which
makes every vertical segment from a solid point to its ground projection stay
inside the solid by construction.  Targets are unicycle cars following a road
graph; UAVs fly at constant speed and altitude with yaw-increment control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Sequence

import numpy as np

from .geometry import ConvexPolygon, GroundRegion, convex_hull


class HitClass(IntEnum):
    NONE = 0
    GROUND = 1
    OBSTACLE = 2
    TARGET = 3
    UAV = 4


@dataclass(frozen=True)
class RayHit:
    distance: float
    hit_class: HitClass
    hit_id: int


@dataclass(frozen=True)
class PrismLevel:
    footprint: ConvexPolygon
    z_lo: float
    z_hi: float

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Constraints a . p >= b describing the solid prism."""
        v = self.footprint.vertices
        e = np.roll(v, -1, axis=0) - v
        # Inward normal of a CCW polygon edge.
        n = np.column_stack([-e[:, 1], e[:, 0], np.zeros(len(e))])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        b = np.einsum("ij,ij->i", n[:, :2], v)
        a = np.vstack([n, [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
        b = np.concatenate([b, [self.z_lo, -self.z_hi]])
        return a, b


@dataclass(frozen=True)
class Obstacle:
    levels: tuple[PrismLevel, ...]

    @staticmethod
    def box(cx: float, cy: float, len_x: float, len_y: float, height: float,
            yaw: float = 0.0, z_lo: float = 0.0) -> "Obstacle":
        hx, hy = len_x / 2.0, len_y / 2.0
        local = np.array([(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)])
        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s], [s, c]])
        verts = local @ rot.T + np.array([cx, cy])
        return Obstacle((PrismLevel(ConvexPolygon(verts), z_lo, z_lo + height),))

    def stacked(self, len_x: float, len_y: float, height: float) -> "Obstacle":
        """Add a nested level on top of the current topmost one."""
        top = self.levels[-1]
        c = top.footprint.vertices.mean(axis=0)
        hx, hy = len_x / 2.0, len_y / 2.0
        verts = np.array([(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]) + c
        lvl = PrismLevel(ConvexPolygon(verts), top.z_hi, top.z_hi + height)
        return Obstacle(self.levels + (lvl,))

    @property
    def height(self) -> float:
        return max(lvl.z_hi for lvl in self.levels)

    def footprint_region(self) -> GroundRegion:
        return GroundRegion.from_convex(self.levels[0].footprint)

    def bbox_corners(self) -> np.ndarray:
        pts = []
        for lvl in self.levels:
            v = lvl.footprint.vertices
            for z in (lvl.z_lo, lvl.z_hi):
                pts.append(np.column_stack([v, np.full(len(v), z)]))
        return np.concatenate(pts)


@dataclass(frozen=True)
class TargetTruth:
    x1: float
    x2: float
    heading: float
    speed: float                 # constant per target, in [0, v_max]
    turn_rate: float = 0.0       # most recent turn-rate input, rad/s
    body_len: float = 4.6
    body_wid: float = 1.8
    body_hgt: float = 1.5
    r_t: float = 2.5             # bounding cylinder radius
    h_t: float = 2.0             # bounding cylinder height

    @property
    def ground(self) -> np.ndarray:
        return np.array([self.x1, self.x2])


@dataclass(frozen=True)
class UavTruth:
    x1: float
    x2: float
    altitude: float
    yaw: float
    speed: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.altitude])


def step_target(t: TargetTruth, turn_rate: float, T: float) -> TargetTruth:
    """Unicycle step: displacement T*speed along the current heading."""
    return replace(
        t,
        x1=t.x1 + T * t.speed * math.cos(t.heading),
        x2=t.x2 + T * t.speed * math.sin(t.heading),
        heading=t.heading + T * turn_rate,
        turn_rate=turn_rate,
    )


def step_uav(u: UavTruth, yaw_increment: float, T: float,
             control_set: Sequence[float] | None = None) -> UavTruth:
    """Planar arc step at constant altitude; heading updates before moving."""
    if control_set is not None:
        if min(abs(yaw_increment - c) for c in control_set) > 1e-12:
            raise ValueError(f"yaw increment {yaw_increment} not in control set")
    yaw = u.yaw + yaw_increment
    return replace(
        u,
        x1=u.x1 + T * u.speed * math.cos(yaw),
        x2=u.x2 + T * u.speed * math.sin(yaw),
        yaw=yaw,
    )


# ---------------------------------------------------------------------------
# Roads
# ---------------------------------------------------------------------------

@dataclass
class RoadGraph:
    nodes: np.ndarray                  # (K, 2)
    neighbors: list[list[int]]

    @staticmethod
    def grid(half_extent: float, pitch: float) -> "RoadGraph":
        n = int(math.floor((half_extent - pitch / 2.0) / pitch))
        coords = np.arange(-n, n + 1) * pitch
        nodes = []
        index = {}
        for iy, y in enumerate(coords):
            for ix, x in enumerate(coords):
                index[(ix, iy)] = len(nodes)
                nodes.append((x, y))
        neigh: list[list[int]] = [[] for _ in nodes]
        m = len(coords)
        for (ix, iy), k in index.items():
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                jx, jy = ix + dx, iy + dy
                if 0 <= jx < m and 0 <= jy < m:
                    neigh[k].append(index[(jx, jy)])
        return RoadGraph(np.array(nodes, dtype=float), neigh)


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


class RoadFollower:
    """Drives targets along the road graph with a bounded turn rate.

    The UAVs never see this logic; it only supplies the per-step turn-rate
    input of each target.
    """

    def __init__(self, graph: RoadGraph, rng: np.random.Generator,
                 turn_rate_max: float = 1.5, reach_dist: float = 2.0):
        self.graph = graph
        self.rng = rng
        self.turn_rate_max = turn_rate_max
        self.reach_dist = reach_dist
        self.goal: list[int] = []
        self.prev: list[int] = []

    def spawn(self, count: int, speeds: np.ndarray) -> list[TargetTruth]:
        k = len(self.graph.nodes)
        starts = self.rng.choice(k, size=min(count, k), replace=False)
        targets = []
        for j in range(count):
            s = int(starts[j % len(starts)])
            goal = int(self.rng.choice(self.graph.neighbors[s]))
            p = self.graph.nodes[s]
            g = self.graph.nodes[goal]
            heading = math.atan2(g[1] - p[1], g[0] - p[0])
            targets.append(TargetTruth(p[0], p[1], heading, float(speeds[j])))
            self.goal.append(goal)
            self.prev.append(s)
        return targets

    def turn_rate(self, j: int, t: TargetTruth, T: float) -> float:
        g = self.graph.nodes[self.goal[j]]
        if np.hypot(g[0] - t.x1, g[1] - t.x2) < self.reach_dist:
            options = [n for n in self.graph.neighbors[self.goal[j]]
                       if n != self.prev[j]]
            if not options:
                options = list(self.graph.neighbors[self.goal[j]])
            self.prev[j] = self.goal[j]
            self.goal[j] = int(self.rng.choice(options))
            g = self.graph.nodes[self.goal[j]]
        desired = math.atan2(g[1] - t.x2, g[0] - t.x1)
        err = _wrap_angle(desired - t.heading)
        return max(-self.turn_rate_max, min(self.turn_rate_max, err / T))


# ---------------------------------------------------------------------------
# World and the range oracle
# ---------------------------------------------------------------------------

@dataclass
class World:
    roi_half: float
    obstacles: list[Obstacle]
    targets: list[TargetTruth]
    uavs: list[UavTruth]
    r_s: float
    v_max: float
    uav_body_radius: float = 0.4
    road_graph: RoadGraph | None = None
    follower: RoadFollower | None = None
    _obstacle_planes: list[list[tuple[np.ndarray, np.ndarray]]] = field(
        default_factory=list, repr=False)
    _obstacle_corners: list[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._obstacle_planes = [[lvl.halfspaces() for lvl in o.levels]
                                 for o in self.obstacles]
        self._obstacle_corners = [o.bbox_corners() for o in self.obstacles]

    def roi_region(self) -> GroundRegion:
        h = self.roi_half
        return GroundRegion.box(-h, -h, h, h)

    # -- ray casting --------------------------------------------------------

    def ray_cast_many(self, origin: np.ndarray, dirs: np.ndarray,
                      skip_uav: int | None = None,
                      cone_dirs: np.ndarray | None = None,
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nearest hit along each ray.  Returns (dist, cls, ids).

        cone_dirs: optional (4, 3) bundle bounding all rays, used to cull
        obstacles/targets that cannot intersect any ray.
        """
        origin = np.asarray(origin, float)
        dirs = np.asarray(dirs, float).reshape(-1, 3)
        n = len(dirs)
        best = np.full(n, np.inf)
        cls = np.full(n, HitClass.NONE, dtype=np.int16)
        ids = np.full(n, -1, dtype=np.int32)

        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_ground = np.where(dz < -1e-12, -origin[2] / dz, np.inf)
        hit = t_ground < best
        best[hit] = t_ground[hit]
        cls[hit] = HitClass.GROUND
        ids[hit] = 0

        faces = None
        if cone_dirs is not None:
            center = cone_dirs.sum(axis=0)
            faces = []
            for i in range(4):
                nf = np.cross(cone_dirs[i], cone_dirs[(i + 1) % 4])
                faces.append(nf if nf @ center >= 0 else -nf)
            faces = np.array(faces)

        def culled(corners: np.ndarray) -> bool:
            if faces is None:
                return False
            rel = corners - origin
            return bool(np.any(np.all(rel @ faces.T < 0.0, axis=0)))

        for oi, levels in enumerate(self._obstacle_planes):
            if culled(self._obstacle_corners[oi]):
                continue
            for a, b in levels:
                t = self._slab(origin, dirs, a, b)
                hit = t < best
                best[hit] = t[hit]
                cls[hit] = HitClass.OBSTACLE
                ids[hit] = oi

        for ti, tgt in enumerate(self.targets):
            t = self._target_hit(origin, dirs, tgt, faces)
            hit = t < best
            best[hit] = t[hit]
            cls[hit] = HitClass.TARGET
            ids[hit] = ti

        for ui, uav in enumerate(self.uavs):
            if ui == skip_uav:
                continue
            t = self._sphere_hit(origin, dirs, uav.position, self.uav_body_radius)
            hit = t < best
            best[hit] = t[hit]
            cls[hit] = HitClass.UAV
            ids[hit] = ui

        return best, cls, ids

    @staticmethod
    def _slab(origin: np.ndarray, dirs: np.ndarray, a: np.ndarray,
              b: np.ndarray) -> np.ndarray:
        """Entry parameter of rays into the convex solid {p | a.p >= b}."""
        ao = a @ origin - b                    # (m,)
        ad = dirs @ a.T                        # (n, m)
        t_lo = np.full(len(dirs), 1e-9)
        t_hi = np.full(len(dirs), np.inf)
        for i in range(len(a)):
            adi = ad[:, i]
            pos = adi > 1e-15
            neg = adi < -1e-15
            bound = np.where(pos | neg, -ao[i] / np.where(adi == 0, 1.0, adi), 0.0)
            t_lo = np.where(pos, np.maximum(t_lo, bound), t_lo)
            t_hi = np.where(neg, np.minimum(t_hi, bound), t_hi)
            flat_out = ~(pos | neg) & (ao[i] < 0)
            t_hi = np.where(flat_out, -np.inf, t_hi)
        return np.where(t_lo <= t_hi, t_lo, np.inf)

    def _target_hit(self, origin, dirs, tgt: TargetTruth,
                    faces) -> np.ndarray:
        if faces is not None:
            r = tgt.r_t + 1.0
            c = np.array([tgt.x1, tgt.x2, 0.0])
            corners = c + np.array([[sx * r, sy * r, sz * tgt.h_t]
                                    for sx in (-1, 1) for sy in (-1, 1)
                                    for sz in (0, 1)])
            rel = corners - origin
            if np.any(np.all(rel @ faces.T < 0.0, axis=0)):
                return np.full(len(dirs), np.inf)
        ch, sh = math.cos(tgt.heading), math.sin(tgt.heading)
        rot = np.array([[ch, sh, 0.0], [-sh, ch, 0.0], [0.0, 0.0, 1.0]])
        o = rot @ (origin - np.array([tgt.x1, tgt.x2, 0.0]))
        d = dirs @ rot.T
        hl, hw = tgt.body_len / 2.0, tgt.body_wid / 2.0
        a = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0],
                      [0, 0, 1.0], [0, 0, -1.0]])
        b = np.array([-hl, -hl, -hw, -hw, 0.0, -tgt.body_hgt])
        return self._slab(o, d, a, b)

    @staticmethod
    def _sphere_hit(origin, dirs, center, radius) -> np.ndarray:
        oc = origin - center
        bq = dirs @ oc
        cq = oc @ oc - radius * radius
        disc = bq * bq - cq
        with np.errstate(invalid="ignore"):
            root = np.sqrt(np.where(disc >= 0, disc, 0.0))
            t = -bq - root
        return np.where((disc >= 0) & (t > 1e-9), t, np.inf)

    def ray_cast(self, origin: Sequence[float], direction: Sequence[float],
                 skip_uav: int | None = None) -> RayHit:
        d, c, i = self.ray_cast_many(np.asarray(origin, float),
                                     np.asarray(direction, float)[None, :],
                                     skip_uav=skip_uav)
        if not math.isfinite(d[0]):
            return RayHit(math.inf, HitClass.NONE, -1)
        return RayHit(float(d[0]), HitClass(int(c[0])), int(i[0]))

    # -- dynamics -----------------------------------------------------------

    def advance_targets(self, T: float) -> None:
        for j, tgt in enumerate(self.targets):
            tr = self.follower.turn_rate(j, tgt, T) if self.follower else 0.0
            self.targets[j] = step_target(tgt, tr, T)

    def segment_hits_target(self, start: np.ndarray, j: int) -> bool:
        """Does the half-open segment [start, target ground point) cross the
        target's body?"""
        tgt = self.targets[j]
        end = np.array([tgt.x1, tgt.x2, 0.0])
        d = end - start
        length = np.linalg.norm(d)
        if length <= 0:
            return False
        t = self._target_hit(start, (d / length)[None, :], tgt, None)[0]
        return bool(t < length * (1.0 - 1e-12))


def validate_world(w: World) -> list[str]:
    """Static hypothesis checks; returns human-readable violations."""
    out: list[str] = []
    roi = w.roi_region()
    for oi, obs in enumerate(w.obstacles):
        prev = None
        for li, lvl in enumerate(obs.levels):
            fp = GroundRegion.from_convex(lvl.footprint)
            if prev is not None and fp.subtract(prev).area > 1e-9:
                out.append(f"obstacle {oi} level {li} footprint not nested")
            prev = fp
    for j, tgt in enumerate(w.targets):
        g = tgt.ground
        if not roi.contains_point(g):
            out.append(f"target {j} outside the RoI")
        half_diag = math.hypot(tgt.body_len / 2.0, tgt.body_wid / 2.0)
        if half_diag > tgt.r_t + 1e-9 or tgt.body_hgt > tgt.h_t + 1e-9:
            out.append(f"target {j} body exceeds its bounding cylinder")
        if not (0.0 <= tgt.speed <= w.v_max + 1e-12):
            out.append(f"target {j} speed outside [0, v_max]")
        for oi, obs in enumerate(w.obstacles):
            d = obs.footprint_region().distance(g)
            if d <= w.r_s:
                out.append(f"target {j} within safety distance of obstacle {oi}"
                           f" ({d:.2f} m <= {w.r_s} m)")
    if w.obstacles:
        top = max(o.height for o in w.obstacles)
        for ui, uav in enumerate(w.uavs):
            if uav.altitude <= top:
                out.append(f"uav {ui} altitude {uav.altitude} m not above the"
                           f" tallest obstacle ({top} m)")
    alts = [u.altitude for u in w.uavs]
    if len(set(alts)) != len(alts):
        out.append("uav altitudes are not pairwise distinct")
    return out
