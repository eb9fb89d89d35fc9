"""Planar polygon primitives and arbitrary-polygon IoU.

Polygons are immutable vertex tuples in pixel coordinates. Public functions
accept either winding and normalize internally.

Intersection area is computed by boundary integration: the boundary of
``A ∩ B`` is made of the pieces of ``∂A`` lying inside ``B`` and the pieces of
``∂B`` lying inside ``A`` (shared collinear edges counted once when both
polygons traverse them in the same direction). Summing the shoelace terms of
those pieces gives the exact intersection area for any pair of simple
polygons, convex or not, without building the clipped polygon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

EPS = 1e-9

Point = tuple[float, float]


class GeometryError(ValueError):
    """Raised for polygons that cannot take part in an area computation."""


@dataclass(frozen=True)
class AxisAlignedBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise GeometryError(f"inverted box {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def overlaps(self, other: AxisAlignedBox) -> bool:
        """True when the boxes share interior area."""
        return (
            self.x_min < other.x_max
            and other.x_min < self.x_max
            and self.y_min < other.y_max
            and other.y_min < self.y_max
        )

    def as_xywh(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.width, self.height)


@dataclass(frozen=True)
class Polygon:
    """Ordered vertex ring; the closing edge is implicit."""

    vertices: tuple[Point, ...]

    def __post_init__(self) -> None:
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise GeometryError(f"polygon needs at least 3 vertices, got {len(verts)}")
        for x, y in verts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise GeometryError(f"non-finite vertex ({x}, {y})")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def from_flat(cls, coords: Sequence[float]) -> Polygon:
        """Build from ``[x1, y1, x2, y2, ...]``."""
        if len(coords) % 2:
            raise GeometryError(f"odd coordinate count {len(coords)}")
        return cls(tuple(zip(coords[0::2], coords[1::2])))

    def flat(self) -> list[float]:
        return [c for xy in self.vertices for c in xy]

    def __len__(self) -> int:
        return len(self.vertices)

    def edges(self) -> Iterable[tuple[Point, Point]]:
        verts = self.vertices
        return zip(verts, verts[1:] + verts[:1])

    @cached_property
    def signed_area(self) -> float:
        return signed_area(self.vertices)

    @cached_property
    def is_simple(self) -> bool:
        return not self_intersections(self)

    @cached_property
    def bbox(self) -> AxisAlignedBox:
        return bounding_box(self)


def signed_area(vertices: Sequence[Point]) -> float:
    """Shoelace sum; positive for counter-clockwise rings."""
    total = 0.0
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return total / 2.0


def polygon_area(p: Polygon) -> float:
    return abs(p.signed_area)


def bounding_box(p: Polygon) -> AxisAlignedBox:
    xs = [x for x, _ in p.vertices]
    ys = [y for _, y in p.vertices]
    return AxisAlignedBox(min(xs), min(ys), max(xs), max(ys))


def _same_point(a: Point, b: Point) -> bool:
    return abs(a[0] - b[0]) <= EPS and abs(a[1] - b[1]) <= EPS


def normalize_polygon(p: Polygon) -> Polygon:
    """Drop consecutive duplicate vertices and orient counter-clockwise.

    Self-intersection is left in place; check ``result.is_simple``.
    """
    verts: list[Point] = []
    for v in p.vertices:
        if not verts or not _same_point(verts[-1], v):
            verts.append(v)
    while len(verts) > 1 and _same_point(verts[0], verts[-1]):
        verts.pop()
    if len(verts) < 3:
        raise GeometryError("degenerate polygon")
    if signed_area(verts) < 0:
        verts.reverse()
    if tuple(verts) == p.vertices:
        return p
    return Polygon(tuple(verts))


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _on_segment(p: Point, a: Point, b: Point) -> bool:
    """``p`` lies on the closed segment ``ab`` within EPS."""
    return _point_segment_distance(p, a, b) <= EPS


def _point_segment_distance(p: Point, a: Point, b: Point) -> float:
    dx, dy = b[0] - a[0], b[1] - a[1]
    length2 = dx * dx + dy * dy
    if length2 == 0.0:
        return math.hypot(p[0] - a[0], p[1] - a[1])
    t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / length2
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (a[0] + t * dx), p[1] - (a[1] + t * dy))


def segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool:
    """Closed-segment intersection test, touching and collinear overlap included."""
    d1 = _cross(c, d, a)
    d2 = _cross(c, d, b)
    d3 = _cross(a, b, c)
    d4 = _cross(a, b, d)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    return (
        _on_segment(a, c, d)
        or _on_segment(b, c, d)
        or _on_segment(c, a, b)
        or _on_segment(d, a, b)
    )


def self_intersections(p: Polygon) -> list[tuple[int, int]]:
    """Index pairs of edges that touch where a simple ring would not.

    Edge ``i`` runs from vertex ``i`` to ``i + 1``. Adjacent edges may only
    share their common vertex; they are reported when they fold back onto
    each other.
    """
    verts = p.vertices
    n = len(verts)
    found = []
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        for j in range(i + 1, n):
            c, d = verts[j], verts[(j + 1) % n]
            if j == i + 1 or (i == 0 and j == n - 1):
                # adjacent: shared vertex is fine, overlap is not
                shared, far_i, far_j = (b, a, d) if j == i + 1 else (a, b, c)
                if _on_segment(far_j, shared, far_i) and not _same_point(far_j, shared):
                    found.append((i, j))
                elif _on_segment(far_i, shared, far_j) and not _same_point(far_i, shared):
                    found.append((i, j))
                continue
            if segments_intersect(a, b, c, d):
                found.append((i, j))
    return found


def _require_simple(p: Polygon) -> Polygon:
    q = normalize_polygon(p)
    if not q.is_simple:
        raise GeometryError("non-simple polygon")
    return q


def _locate(pt: Point, poly: Polygon) -> tuple[int, int]:
    """Classify ``pt`` against ``poly``.

    Returns ``(1, -1)`` inside, ``(0, -1)`` outside, or ``(2, k)`` when the
    point lies on edge ``k``.
    """
    verts = poly.vertices
    n = len(verts)
    inside = False
    x, y = pt
    for k in range(n):
        a, b = verts[k], verts[(k + 1) % n]
        if _on_segment(pt, a, b):
            return 2, k
        if (a[1] > y) != (b[1] > y):
            x_cross = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if x < x_cross:
                inside = not inside
    return (1 if inside else 0), -1


def _split_params(a: Point, b: Point, other: Polygon) -> list[float]:
    """Parameters in (0, 1) where segment ``ab`` meets edges of ``other``."""
    ts = []
    dx, dy = b[0] - a[0], b[1] - a[1]
    length2 = dx * dx + dy * dy
    for c, d in other.edges():
        ex, ey = d[0] - c[0], d[1] - c[1]
        denom = dx * ey - dy * ex
        if abs(denom) > EPS * math.sqrt(length2 * (ex * ex + ey * ey)):
            t = ((c[0] - a[0]) * ey - (c[1] - a[1]) * ex) / denom
            u = ((c[0] - a[0]) * dy - (c[1] - a[1]) * dx) / denom
            if -EPS <= u <= 1 + EPS and 0.0 < t < 1.0:
                ts.append(t)
        else:
            # parallel: endpoints of a collinear edge split ab
            for q in (c, d):
                if _point_segment_distance(q, a, b) <= EPS:
                    t = ((q[0] - a[0]) * dx + (q[1] - a[1]) * dy) / length2
                    if 0.0 < t < 1.0:
                        ts.append(t)
    return ts


def _boundary_integral(subject: Polygon, clip: Polygon, keep_shared: bool) -> float:
    """Shoelace contribution of the parts of ``∂subject`` inside ``clip``.

    Both polygons must be counter-clockwise. Pieces lying on ``∂clip`` are
    counted only when ``keep_shared`` is set and both rings run the same way.
    """
    total = 0.0
    clip_verts = clip.vertices
    m = len(clip_verts)
    for a, b in subject.edges():
        ts = sorted(_split_params(a, b, clip))
        cuts = [0.0, *ts, 1.0]
        dx, dy = b[0] - a[0], b[1] - a[1]
        for t0, t1 in zip(cuts, cuts[1:]):
            if t1 - t0 <= 0.0:
                continue
            p0 = (a[0] + t0 * dx, a[1] + t0 * dy)
            p1 = (a[0] + t1 * dx, a[1] + t1 * dy)
            mid = ((p0[0] + p1[0]) / 2.0, (p0[1] + p1[1]) / 2.0)
            where, k = _locate(mid, clip)
            if where == 0:
                continue
            if where == 2:
                if not keep_shared:
                    continue
                c, d = clip_verts[k], clip_verts[(k + 1) % m]
                if dx * (d[0] - c[0]) + dy * (d[1] - c[1]) <= 0.0:
                    continue
            total += p0[0] * p1[1] - p1[0] * p0[1]
    return total / 2.0


def intersection_area_normalized(a: Polygon, b: Polygon) -> float:
    """Intersection area of polygons already normalized and known to be simple."""
    if not a.bbox.overlaps(b.bbox):
        return 0.0
    if b.vertices < a.vertices:
        # fixed operand order keeps the result bitwise symmetric
        a, b = b, a
    area = _boundary_integral(a, b, keep_shared=True) + _boundary_integral(
        b, a, keep_shared=False
    )
    bound = min(abs(a.signed_area), abs(b.signed_area))
    return min(max(area, 0.0), bound)


def polygon_intersection_area(a: Polygon, b: Polygon) -> float:
    """Area of ``a ∩ b`` for simple polygons of either winding.

    Raises:
        GeometryError: "non-simple polygon" if either input self-intersects,
            "degenerate polygon" if either has fewer than 3 distinct vertices.
    """
    return intersection_area_normalized(_require_simple(a), _require_simple(b))


def iou(a: Polygon, b: Polygon) -> float:
    """Intersection over union of two simple polygons of either winding.

    Raises:
        GeometryError: "degenerate pair" when both polygons have zero area,
            "non-simple polygon" when either self-intersects.
    """
    a = normalize_polygon(a)
    b = normalize_polygon(b)
    if abs(a.signed_area) + abs(b.signed_area) <= EPS:
        raise GeometryError("degenerate pair")
    a = _require_simple(a)
    b = _require_simple(b)
    inter = intersection_area_normalized(a, b)
    union = abs(a.signed_area) + abs(b.signed_area) - inter
    if union <= EPS:
        raise GeometryError("degenerate pair")
    return min(1.0, max(0.0, inter / union))
