"""Guaranteed 2D region algebra with explicitly directed conservatism.

Ground sets are finite unions of simple polygons, backed by shapely for the
boolean algebra.  Every approximation in this module has a declared
direction: "outer" constructions may only over-cover the exact set, "inner"
constructions may only under-cover it.  The direction rules are what let the
estimator keep its enclosure/exclusion guarantees after discretization and
simplification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, NamedTuple, Sequence

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Point, Polygon
from shapely.geometry.polygon import orient
from shapely.ops import unary_union

# Tolerances: the RoI spans <= 500 m, so doubles leave ~1e-10 m of headroom.
SNAP_EPS = 1e-9           # vertex dedup, meters
AREA_EPS = 1e-6           # area comparisons, m^2
SIMPLIFY_AREA_EPS = 1e-4  # default per-vertex area-change threshold, m^2

ConservatismTag = Literal["exact", "outer", "inner"]


class GeometryError(ValueError):
    pass


class Point2(NamedTuple):
    x: float
    y: float


def _dedup(points: np.ndarray, eps: float = SNAP_EPS) -> np.ndarray:
    """Drop consecutive-duplicate rows (closing duplicate included)."""
    if len(points) == 0:
        return points
    keep = [points[0]]
    for p in points[1:]:
        if abs(p[0] - keep[-1][0]) > eps or abs(p[1] - keep[-1][1]) > eps:
            keep.append(p)
    while len(keep) > 1 and np.all(np.abs(keep[-1] - keep[0]) <= eps):
        keep.pop()
    return np.array(keep)


@dataclass(frozen=True)
class ConvexPolygon:
    """Strictly convex polygon, counter-clockwise vertex order."""

    vertices: np.ndarray  # (n, 2), n >= 3

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def to_shapely(self) -> Polygon:
        return Polygon(self.vertices)


def convex_hull(points: Iterable[Sequence[float]]) -> ConvexPolygon | None:
    """Minimal convex polygon containing all points (monotone chain).

    Collinear/degenerate inputs collapse to None rather than erroring; they
    arise routinely from grazing view geometry.
    """
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise GeometryError("convex_hull needs at least one point")
    pts = np.unique(np.round(pts / SNAP_EPS) * SNAP_EPS, axis=0)
    if len(pts) < 3:
        return None
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        return None
    return ConvexPolygon(hull)


def clip_convex_halfplane(vertices: np.ndarray, normal: Sequence[float],
                          offset: float) -> np.ndarray:
    """Clip a convex CCW polygon to the half-plane {p | normal . p >= offset}.

    Returns an (m, 2) array, possibly empty.  Sutherland-Hodgman for a single
    plane; exact up to float arithmetic.
    """
    if len(vertices) == 0:
        return vertices
    n = np.asarray(normal, dtype=float)
    d = vertices @ n - offset
    out: list[np.ndarray] = []
    m = len(vertices)
    for i in range(m):
        j = (i + 1) % m
        di, dj = d[i], d[j]
        if di >= 0:
            out.append(vertices[i])
        if (di > 0) != (dj > 0) and di != dj:
            t = di / (di - dj)
            if 0.0 <= t <= 1.0:
                out.append(vertices[i] + t * (vertices[j] - vertices[i]))
    if len(out) < 3:
        return np.empty((0, 2))
    return _dedup(np.array(out))


# ---------------------------------------------------------------------------
# GroundRegion
# ---------------------------------------------------------------------------

def _polygonal(geom) -> shapely.Geometry:
    """Keep only the polygonal component of a geometry."""
    if geom.is_empty:
        return Polygon()
    if isinstance(geom, (Polygon, MultiPolygon)):
        return geom
    polys = [g for g in getattr(geom, "geoms", []) if isinstance(g, (Polygon, MultiPolygon))]
    if not polys:
        return Polygon()
    return unary_union(polys)


@dataclass(frozen=True)
class GroundRegion:
    """A finite union of simple polygons in the ground plane.

    `tag` records which way the stored set errs relative to the exact set it
    stands for.  It is carried metadata: the algebra below does not enforce
    it, but `simplified()` respects it.
    """

    geom: shapely.Geometry = field(default_factory=Polygon)
    tag: ConservatismTag = "exact"

    # -- constructors -------------------------------------------------------

    @staticmethod
    def empty(tag: ConservatismTag = "exact") -> "GroundRegion":
        return GroundRegion(Polygon(), tag)

    @staticmethod
    def box(xmin: float, ymin: float, xmax: float, ymax: float,
            tag: ConservatismTag = "exact") -> "GroundRegion":
        return GroundRegion(shapely.box(xmin, ymin, xmax, ymax), tag)

    @staticmethod
    def from_shapely(geom, tag: ConservatismTag = "exact") -> "GroundRegion":
        g = _polygonal(geom)
        if not g.is_valid:
            g = _polygonal(shapely.make_valid(g))
        return GroundRegion(g, tag)

    @staticmethod
    def from_convex(poly: ConvexPolygon | None,
                    tag: ConservatismTag = "exact") -> "GroundRegion":
        if poly is None:
            return GroundRegion.empty(tag)
        return GroundRegion(poly.to_shapely(), tag)

    # -- basic queries ------------------------------------------------------

    @property
    def area(self) -> float:
        return self.geom.area

    @property
    def is_empty(self) -> bool:
        return self.geom.is_empty or self.geom.area <= 0.0

    @property
    def vertex_count(self) -> int:
        return sum(
            len(p.exterior.coords) + sum(len(r.coords) for r in p.interiors)
            for p in self.polygons()
        )

    def polygons(self) -> list[Polygon]:
        if self.geom.is_empty:
            return []
        if isinstance(self.geom, Polygon):
            return [self.geom]
        return list(self.geom.geoms)

    def contains_point(self, p: Sequence[float], tol: float = 1e-9) -> bool:
        pt = Point(p[0], p[1])
        if self.geom.is_empty:
            return False
        return bool(self.geom.covers(pt)) or self.geom.distance(pt) <= tol

    # -- boolean algebra ----------------------------------------------------
    # Result tags default to the left operand's tag: the typical call sites
    # update an accumulator region in place.

    def union(self, other: "GroundRegion",
              tag: ConservatismTag | None = None) -> "GroundRegion":
        return GroundRegion.from_shapely(self.geom.union(other.geom),
                                         tag or self.tag)

    def intersect(self, other: "GroundRegion",
                  tag: ConservatismTag | None = None) -> "GroundRegion":
        return GroundRegion.from_shapely(self.geom.intersection(other.geom),
                                         tag or self.tag)

    def subtract(self, other: "GroundRegion",
                 tag: ConservatismTag | None = None) -> "GroundRegion":
        return GroundRegion.from_shapely(self.geom.difference(other.geom),
                                         tag or self.tag)

    def clip(self, bounds: "GroundRegion") -> "GroundRegion":
        """Restrict to the configured RoI (or any bounding region)."""
        return self.intersect(bounds)

    # -- measures -----------------------------------------------------------

    def barycenter(self) -> Point2:
        if self.is_empty:
            raise GeometryError("empty region has no barycenter")
        c = self.geom.centroid
        return Point2(c.x, c.y)

    def distance(self, p: Sequence[float]) -> float:
        if self.is_empty:
            raise GeometryError("empty region has no distance")
        pt = Point(p[0], p[1])
        if self.geom.covers(pt):
            return 0.0
        return float(self.geom.distance(pt))

    def simplified(self, area_tol: float = SIMPLIFY_AREA_EPS,
                   max_vertices: int | None = None,
                   dp_tol: float = 0.05) -> "GroundRegion":
        return simplify_region(self, area_tol=area_tol,
                               max_vertices=max_vertices, dp_tol=dp_tol)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        polys = []
        for p in self.polygons():
            polys.append({
                "outer": [[float(x), float(y)] for x, y in p.exterior.coords[:-1]],
                "holes": [[[float(x), float(y)] for x, y in r.coords[:-1]]
                          for r in p.interiors],
            })
        return {"polygons": polys, "tag": self.tag}

    @staticmethod
    def from_json(data: dict) -> "GroundRegion":
        parts = []
        for p in data["polygons"]:
            parts.append(Polygon(p["outer"], p.get("holes", [])))
        geom = unary_union(parts) if parts else Polygon()
        return GroundRegion.from_shapely(geom, data.get("tag", "exact"))


def area(r: GroundRegion) -> float:
    return r.area


def barycenter(r: GroundRegion) -> Point2:
    return r.barycenter()


def distance_point_region(p: Sequence[float], r: GroundRegion) -> float:
    return r.distance(p)


def union(a: GroundRegion, b: GroundRegion,
          tag: ConservatismTag | None = None) -> GroundRegion:
    return a.union(b, tag)


def intersect(a: GroundRegion, b: GroundRegion,
              tag: ConservatismTag | None = None) -> GroundRegion:
    return a.intersect(b, tag)


def subtract(a: GroundRegion, b: GroundRegion,
             tag: ConservatismTag | None = None) -> GroundRegion:
    return a.subtract(b, tag)


def union_of_polygons(vertex_arrays: Sequence[np.ndarray],
                      tag: ConservatismTag = "exact") -> GroundRegion:
    """Union a batch of simple polygons given as (n_i, 2) vertex arrays."""
    rings = [np.asarray(v, float) for v in vertex_arrays if len(v) >= 3]
    if not rings:
        return GroundRegion.empty(tag)
    geoms = shapely.polygons([shapely.linearrings(r) for r in rings])
    valid = shapely.is_valid(geoms)
    if not valid.all():
        geoms = [g if ok else shapely.make_valid(g) for g, ok in zip(geoms, valid)]
    return GroundRegion.from_shapely(shapely.union_all(geoms), tag)


# ---------------------------------------------------------------------------
# Disc polygons and outer dilation
# ---------------------------------------------------------------------------

def _kgon_offsets(radius: float, k: int) -> np.ndarray:
    """Vertices of the regular k-gon circumscribed about a radius-r disc.

    Tangent points sit at angles 2*pi*i/k (edge midpoints), so the polygon
    contains the disc: outer direction.
    """
    ang = (2.0 * np.arange(k) + 1.0) * math.pi / k
    rr = radius / math.cos(math.pi / k)
    return np.column_stack([rr * np.cos(ang), rr * np.sin(ang)])


def disc_polygon_outer(center: Sequence[float], radius: float, k: int = 64) -> Polygon:
    return Polygon(_kgon_offsets(radius, k) + np.asarray(center, float))


def disc_polygon_inner(center: Sequence[float], radius: float, k: int = 64) -> Polygon:
    ang = 2.0 * math.pi * np.arange(k) / k
    v = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    return Polygon(v + np.asarray(center, float))


def _swept_kgon_hulls(p: np.ndarray, q: np.ndarray, offs: np.ndarray) -> np.ndarray:
    """Convex hulls of a k-gon swept along segments, batched.

    p, q: (E, 2) segment endpoints; offs: (k, 2) CCW k-gon vertex offsets.
    Returns (E, k + 2, 2) CCW rings.  Degenerate alignments yield repeated
    vertices, which shapely tolerates.
    """
    k = len(offs)
    d = q - p                                    # (E, 2)
    # Outward normal of k-gon edge j = (v_j -> v_j+1).
    edge = np.roll(offs, -1, axis=0) - offs
    nrm = np.column_stack([edge[:, 1], -edge[:, 0]])  # (k, 2) outward for CCW
    a = (d @ nrm.T) > 0.0                         # (E, k) edge-normal faces +d
    ai = a.astype(np.int8)
    rise = (ai - np.roll(ai, 1, axis=1)) == 1     # start of the leading arc
    s = np.argmax(rise, axis=1)                   # (E,)
    m = ai.sum(axis=1)                            # leading-arc length
    J = np.arange(k + 2)[None, :]                 # (1, k+2)
    M = m[:, None]
    vidx = (s[:, None] + J - (J > M)) % k         # vertex index per output slot
    verts = offs[vidx]                            # (E, k+2, 2)
    lead = (J <= M)[:, :, None]
    base = np.where(lead, q[:, None, :], p[:, None, :])
    return base + verts


def dilate_outer(r: "GroundRegion | Point2 | Sequence[float]", radius: float,
                 k: int = 16) -> GroundRegion:
    """Guaranteed outer approximation of r (+) disc(0, radius).

    The disc is replaced by its circumscribed regular k-gon, so the result
    contains the exact Minkowski sum.  For a region, the sum is computed
    exactly as region U (boundary edges (+) k-gon).
    """
    if k < 3:
        raise GeometryError(f"invalid k-gon vertex count: {k}")
    if radius <= 0:
        raise GeometryError("dilation radius must be > 0")
    offs = _kgon_offsets(radius, k)
    if not isinstance(r, GroundRegion):
        c = np.asarray(r, dtype=float).reshape(2)
        return GroundRegion(Polygon(offs + c), "outer")
    if r.is_empty:
        return GroundRegion.empty("outer")

    p_list, q_list = [], []
    for poly in r.polygons():
        for ring in [poly.exterior, *poly.interiors]:
            coords = np.asarray(ring.coords)
            p_list.append(coords[:-1])
            q_list.append(coords[1:])
    p = np.concatenate(p_list)
    q = np.concatenate(q_list)
    ok = np.hypot(*(q - p).T) > SNAP_EPS
    rings = _swept_kgon_hulls(p[ok], q[ok], offs)
    parts = shapely.polygons(rings)
    valid = shapely.is_valid(parts)
    if not valid.all():
        parts = [g if v else shapely.make_valid(g) for g, v in zip(parts, valid)]
    geom = shapely.union_all(list(parts) + [r.geom])
    return GroundRegion.from_shapely(geom, "outer")


# ---------------------------------------------------------------------------
# Inner approximation of a disc intersection
# ---------------------------------------------------------------------------

def _intersect_circular_intervals(intervals: list[tuple[float, float]],
                                  lo: float, hi: float) -> list[tuple[float, float]]:
    """Intersect a list of arcs (non-wrapping, within [0, 4pi)) with [lo, hi]."""
    pieces = [(lo, hi)] if hi <= 2 * math.pi else [(lo, 2 * math.pi), (0.0, hi - 2 * math.pi)]
    out = []
    for a0, a1 in intervals:
        for b0, b1 in pieces:
            c0, c1 = max(a0, b0), min(a1, b1)
            if c1 > c0:
                out.append((c0, c1))
    return out


def disc_intersection_inner(centers: Sequence[Sequence[float]], radius: float,
                            arc_points: int = 16) -> ConvexPolygon | None:
    """Guaranteed inner approximation of the intersection of discs.

    Vertices are placed on the true boundary arcs (inscribed chords of a
    convex set), so the returned polygon is a subset of the intersection,
    up to a 1e-9 m slack on the circle-circle intersection points.  Returns
    None when the intersection is empty or degenerate.
    """
    if radius <= 0:
        raise GeometryError("radius must be > 0")
    pts = np.asarray(centers, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise GeometryError("needs at least one center")
    # Dedup within snap tolerance.
    keep: list[np.ndarray] = []
    for c in pts:
        if all(np.hypot(*(c - o)) > SNAP_EPS for o in keep):
            keep.append(c)
    cs = np.array(keep)
    n = len(cs)

    # Quick infeasibility: two centers further apart than 2r.
    for i in range(n):
        for j in range(i + 1, n):
            if np.hypot(*(cs[i] - cs[j])) > 2 * radius:
                return None

    tol = 1e-9
    samples: list[np.ndarray] = []

    def inside_all(p: np.ndarray) -> bool:
        return bool(np.all(np.hypot(*(cs - p).T) <= radius + tol))

    # Circle-circle intersection points that survive every disc.
    for i in range(n):
        for j in range(i + 1, n):
            dv = cs[j] - cs[i]
            d = np.hypot(*dv)
            if d <= SNAP_EPS or d > 2 * radius:
                continue
            h2 = radius * radius - 0.25 * d * d
            h = math.sqrt(max(h2, 0.0))
            mid = 0.5 * (cs[i] + cs[j])
            perp = np.array([-dv[1], dv[0]]) / d
            for sgn in (1.0, -1.0):
                p = mid + sgn * h * perp
                if inside_all(p):
                    samples.append(p)

    # Active arcs of each circle, sampled with inscribed points.
    step = 2 * math.pi / max(arc_points, 3)
    for i in range(n):
        arcs = [(0.0, 2 * math.pi)]
        for j in range(n):
            if j == i:
                continue
            dv = cs[j] - cs[i]
            d = np.hypot(*dv)
            if d <= SNAP_EPS:
                continue
            half = math.acos(min(1.0, max(-1.0, d / (2 * radius))))
            phi = math.atan2(dv[1], dv[0])
            lo = (phi - half) % (2 * math.pi)
            arcs = _intersect_circular_intervals(arcs, lo, lo + 2 * half)
            if not arcs:
                break
        for a0, a1 in arcs:
            count = max(2, int(math.ceil((a1 - a0) / step)) + 1)
            ang = np.linspace(a0, a1, count)
            ps = cs[i] + radius * np.column_stack([np.cos(ang), np.sin(ang)])
            for p in ps:
                if inside_all(p):
                    samples.append(p)

    if len(samples) < 3:
        return None
    return convex_hull(samples)


# ---------------------------------------------------------------------------
# Direction-preserving simplification
# ---------------------------------------------------------------------------

def _simplify_ring(coords: np.ndarray, grow: bool, area_tol: float) -> np.ndarray:
    """Visvalingam pass removing only direction-safe vertices.

    coords: open ring (n, 2) with region to the LEFT of travel (exterior CCW,
    holes CW).  Removing vertex v grows the region iff v lies left of the
    chord prev->next; `grow` selects which removals are allowed.
    """
    pts = coords
    changed = True
    while changed and len(pts) > 3:
        changed = False
        prev = np.roll(pts, 1, axis=0)
        nxt = np.roll(pts, -1, axis=0)
        chord = nxt - prev
        rel = pts - prev
        cross = chord[:, 0] * rel[:, 1] - chord[:, 1] * rel[:, 0]
        tri = 0.5 * np.abs(cross)
        if grow:
            ok = (cross > 0) | (tri <= 0.0)
        else:
            ok = (cross < 0) | (tri <= 0.0)
        cand = ok & (tri < area_tol)
        if not cand.any():
            break
        keep = np.ones(len(pts), dtype=bool)
        blocked = np.zeros(len(pts), dtype=bool)
        for i in np.nonzero(cand)[0]:
            if blocked[i]:
                continue
            keep[i] = False
            blocked[(i + 1) % len(pts)] = True
            blocked[i - 1] = True
            changed = True
        pts = pts[keep]
    return pts


def simplify_region(r: GroundRegion, area_tol: float = SIMPLIFY_AREA_EPS,
                    max_vertices: int | None = None,
                    dp_tol: float = 0.05) -> GroundRegion:
    """Reduce vertex count while preserving the region's conservatism tag.

    Phase 1 removes vertices whose removal changes area by < area_tol, only
    in the tag's safe direction (outer regions may only grow, inner only
    shrink, exact only loses collinear vertices).  If `max_vertices` is still
    exceeded, a Douglas-Peucker pass bounded by dp_tol is applied with a
    mitre-buffer guard in the safe direction.
    """
    if r.is_empty:
        return r
    if r.tag == "exact":
        grow = None
        tol = 1e-12
    else:
        grow = r.tag == "outer"
        tol = area_tol

    parts = []
    for poly in r.polygons():
        poly = orient(poly, 1.0)  # exterior CCW, holes CW: region on the left
        ext = np.asarray(poly.exterior.coords)[:-1]
        ext2 = _simplify_ring(ext, grow if grow is not None else False, tol)
        if grow is None:
            ext2 = _simplify_ring(ext2, True, tol)
        holes2 = []
        for ring in poly.interiors:
            h = np.asarray(ring.coords)[:-1]
            h2 = _simplify_ring(h, grow if grow is not None else False, tol)
            if grow is None:
                h2 = _simplify_ring(h2, True, tol)
            if len(h2) >= 3 and Polygon(h2).area > AREA_EPS:
                holes2.append(h2)
            elif grow is False or grow is None:
                holes2.append(h)  # inner/exact: a hole may not vanish
        if len(ext2) < 3:
            if grow:
                parts.append(poly)  # outer: an island may not vanish
            continue
        cand = Polygon(ext2, holes2)
        parts.append(cand if cand.is_valid else poly)

    geom = unary_union(parts) if parts else Polygon()
    out = GroundRegion.from_shapely(geom, r.tag)

    if max_vertices is not None and out.vertex_count > max_vertices and r.tag != "exact":
        rough = out.geom.simplify(dp_tol, preserve_topology=True)
        guard = 2.0 * dp_tol
        if r.tag == "outer":
            rough = rough.buffer(guard, join_style="mitre", mitre_limit=4.0)
            rough = rough.union(out.geom)
        else:
            rough = rough.buffer(-guard, join_style="mitre", mitre_limit=4.0)
            rough = rough.intersection(out.geom)
        out = GroundRegion.from_shapely(rough, r.tag)
    return out
