"""Polygonal partitions of a scatterer and the local corner frames.

Two partition types are supported:

* a *nest*: strictly nested convex polygons, outermost first. Layer ``k``
  occupies the shell between polygon ``k`` and polygon ``k + 1``.
* a *cell* tiling: polygons with disjoint interiors whose union is the
  scatterer, each owning at least one corner whose two edges lie on the
  outer boundary.

Every polygon vertex yields a :class:`CornerDescriptor` carrying the sector
``W = {theta_m < arg x < theta_M}`` seen from that vertex, a probe radius
``h`` and the CGO decay constant ``delta_W``.

Indices are zero based throughout. Region names use one-based numbering
(``"layer 1"`` is the outermost shell) to match the usual notation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon

__all__ = [
    "GeometryError",
    "NotConvex",
    "NotStrictlyNested",
    "SelfIntersecting",
    "OverlappingCells",
    "NoExteriorCorner",
    "DisconnectedCells",
    "DegenerateCorner",
    "Point2",
    "SimplePolygon",
    "InterfaceId",
    "RegionLabel",
    "NestPartition",
    "CellPartition",
    "SectorGeometry",
    "RigidMotion",
    "CornerDescriptor",
    "build_nest_partition",
    "build_cell_partition",
    "extract_corners",
    "locate",
    "locate_many",
    "segment_distance",
    "region_index_many",
]

SNAP_RELATIVE = 1e-9


class GeometryError(ValueError):
    """Base class for invalid geometry. ``index`` names the offending polygon."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class NotConvex(GeometryError):
    pass


class NotStrictlyNested(GeometryError):
    pass


class SelfIntersecting(GeometryError):
    pass


class OverlappingCells(GeometryError):
    pass


class NoExteriorCorner(GeometryError):
    pass


class DisconnectedCells(GeometryError):
    pass


class DegenerateCorner(GeometryError):
    pass


@dataclass(frozen=True)
class Point2:
    """A point of the plane."""

    x1: float
    x2: float

    def __post_init__(self):
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise GeometryError(f"non-finite point ({self.x1}, {self.x2})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2], dtype=float)

    @classmethod
    def of(cls, xy) -> "Point2":
        return cls(float(xy[0]), float(xy[1]))


def _signed_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class SimplePolygon:
    """Polygon with vertices stored counterclockwise.

    Clockwise input is reversed on construction. Self-intersection is not
    checked here; the partition builders do that so they can name the layer.
    """

    vertices: tuple[Point2, ...]

    def __post_init__(self):
        verts = tuple(v if isinstance(v, Point2) else Point2.of(v) for v in self.vertices)
        if len(verts) < 3:
            raise GeometryError("a polygon needs at least 3 vertices")
        xy = np.array([[v.x1, v.x2] for v in verts])
        area = _signed_area(xy)
        scale = max(float(np.ptp(xy, axis=0).max()), 1e-300)
        if abs(area) <= 1e-14 * scale * scale:
            raise GeometryError("polygon has zero area")
        if area < 0:
            verts = tuple(reversed(verts))
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def from_coords(cls, coords: Sequence[Sequence[float]]) -> "SimplePolygon":
        return cls(tuple(Point2.of(c) for c in coords))

    def coords(self) -> np.ndarray:
        """Vertex coordinates as an ``(n, 2)`` array."""
        return np.array([[v.x1, v.x2] for v in self.vertices], dtype=float)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        return _signed_area(self.coords())

    def edges(self) -> np.ndarray:
        """Edges as an ``(n, 2, 2)`` array; edge ``k`` runs from vertex ``k`` to ``k + 1``."""
        xy = self.coords()
        return np.stack([xy, np.roll(xy, -1, axis=0)], axis=1)

    def is_simple(self) -> bool:
        return bool(self._shape().is_valid) and _no_edge_crossings(self.edges())

    def is_convex(self, tol: float = 1e-12) -> bool:
        xy = self.coords()
        a = np.roll(xy, 1, axis=0)
        b = np.roll(xy, -1, axis=0)
        e1 = xy - a
        e2 = b - xy
        cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
        return bool(np.all(cross >= -tol * scale))

    def diameter(self) -> float:
        xy = self.coords()
        d = xy[:, None, :] - xy[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def _shape(self) -> Polygon:
        return Polygon(self.coords())


def _no_edge_crossings(edges: np.ndarray) -> bool:
    n = len(edges)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_touch(edges[i], edges[j]):
                return False
    return True


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_touch(s, t, tol: float = 1e-12) -> bool:
    p1, p2 = s
    q1, q2 = t
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    scale = max(np.linalg.norm(p2 - p1), np.linalg.norm(q2 - q1))
    gap = min(
        segment_distance(p1, q1, q2),
        segment_distance(p2, q1, q2),
        segment_distance(q1, p1, p2),
        segment_distance(q2, p1, p2),
    )
    return bool(gap <= tol * scale)


def segment_distance(x, a, b) -> np.ndarray:
    """Euclidean distance from point(s) ``x`` to the segment ``[a, b]``."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip(((x - a) @ ab) / denom, 0.0, 1.0)
    proj = a + np.multiply.outer(t, ab)
    return np.linalg.norm(x - proj, axis=-1)


@dataclass(frozen=True, order=True)
class InterfaceId:
    """Edge ``edge`` of partition polygon ``polygon``."""

    polygon: int
    edge: int


@dataclass(frozen=True)
class RegionLabel:
    """Result of :func:`locate`.

    ``kind`` is one of ``"layer"``, ``"cell"``, ``"exterior"`` or
    ``"interface"``; ``index`` is the zero-based layer or cell index.
    """

    kind: str
    index: int | None = None
    interface: InterfaceId | None = None

    @property
    def name(self) -> str:
        if self.kind in ("layer", "cell"):
            return f"{self.kind} {self.index + 1}"
        if self.kind == "interface":
            return f"interface {self.interface.polygon + 1}.{self.interface.edge + 1}"
        return "exterior"


class _PartitionBase:
    polygons: tuple[SimplePolygon, ...]
    kind: str

    @property
    def diameter(self) -> float:
        xy = np.concatenate([p.coords() for p in self.polygons])
        d = xy[:, None, :] - xy[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    @property
    def snap_tolerance(self) -> float:
        return SNAP_RELATIVE * self.diameter

    @property
    def max_radius(self) -> float:
        """Largest vertex distance from the origin (the DtN disk is origin centred)."""
        xy = np.concatenate([p.coords() for p in self.polygons])
        return float(np.linalg.norm(xy, axis=1).max())

    def interfaces(self) -> list[InterfaceId]:
        return [InterfaceId(i, k) for i, p in enumerate(self.polygons) for k in range(len(p))]

    def has_interface(self, iid: InterfaceId) -> bool:
        return 0 <= iid.polygon < len(self.polygons) and 0 <= iid.edge < len(
            self.polygons[iid.polygon]
        )

    def region_count(self) -> int:
        return len(self.polygons)


@dataclass(frozen=True)
class NestPartition(_PartitionBase):
    """Strictly nested convex layers, outermost first."""

    layers: tuple[SimplePolygon, ...]
    kind: str = field(default="nest", init=False)

    @property
    def polygons(self) -> tuple[SimplePolygon, ...]:
        return self.layers


@dataclass(frozen=True)
class CellPartition(_PartitionBase):
    """Cell tiling with one exterior-corner certificate per cell.

    ``exterior_corners[k]`` lists the vertex indices of cell ``k`` whose two
    incident edges lie on the outer boundary.
    """

    cells: tuple[SimplePolygon, ...]
    exterior_corners: tuple[tuple[int, ...], ...]
    kind: str = field(default="cell", init=False)

    @property
    def polygons(self) -> tuple[SimplePolygon, ...]:
        return self.cells


def _as_polygon(p) -> SimplePolygon:
    if isinstance(p, SimplePolygon):
        return p
    return SimplePolygon.from_coords(p)


def build_nest_partition(layers: Sequence) -> NestPartition:
    """Validate nested convex layers (outermost first).

    Raises
    ------
    SelfIntersecting, NotConvex, NotStrictlyNested
        With ``index`` set to the offending layer.
    """
    if len(layers) == 0:
        raise GeometryError("a nest needs at least one layer")
    polys = tuple(_as_polygon(p) for p in layers)
    for k, p in enumerate(polys):
        if not p.is_simple():
            raise SelfIntersecting(f"layer {k + 1} is self-intersecting", k)
        if not p.is_convex():
            raise NotConvex(f"layer {k + 1} is not convex", k)
    scale = max(p.diameter() for p in polys)
    tol = SNAP_RELATIVE * scale
    for k in range(len(polys) - 1):
        outer, inner = polys[k], polys[k + 1]
        xy = inner.coords()
        inside = shapely.contains_xy(outer._shape(), xy[:, 0], xy[:, 1])
        clearance = min(
            float(segment_distance(xy, e[0], e[1]).min()) for e in outer.edges()
        )
        if not np.all(inside) or clearance <= tol:
            raise NotStrictlyNested(
                f"layer {k + 2} is not strictly inside layer {k + 1}", k + 1
            )
    return NestPartition(polys)


def build_cell_partition(cells: Sequence) -> CellPartition:
    """Validate a cell tiling.

    A cell adjacency graph that is disconnected (cells meeting only at points
    or not at all) is rejected with :class:`DisconnectedCells`.

    Raises
    ------
    SelfIntersecting, OverlappingCells, NoExteriorCorner, DisconnectedCells
    """
    if len(cells) == 0:
        raise GeometryError("a cell partition needs at least one cell")
    polys = tuple(_as_polygon(p) for p in cells)
    for k, p in enumerate(polys):
        if not p.is_simple():
            raise SelfIntersecting(f"cell {k + 1} is self-intersecting", k)
    shapes = [p._shape() for p in polys]
    scale = max(p.diameter() for p in polys)
    tol = SNAP_RELATIVE * scale
    area_tol = 1e-9 * scale * scale
    n = len(polys)
    adjacency = {k: set() for k in range(n)}
    for i in range(n):
        for j in range(i + 1, n):
            if shapes[i].intersection(shapes[j]).area > area_tol:
                raise OverlappingCells(f"cells {i + 1} and {j + 1} overlap", j)
            shared = shapes[i].boundary.intersection(shapes[j].boundary)
            if shared.length > 1e3 * tol:
                adjacency[i].add(j)
                adjacency[j].add(i)
    seen = {0}
    stack = [0]
    while stack:
        k = stack.pop()
        for m in adjacency[k] - seen:
            seen.add(m)
            stack.append(m)
    if len(seen) != n:
        missing = min(set(range(n)) - seen)
        raise DisconnectedCells(f"cell {missing + 1} shares no edge with cell 1", missing)

    outer = shapely.union_all(shapes).boundary.buffer(1e3 * tol)
    certificates = []
    for k, p in enumerate(polys):
        edges = p.edges()
        on_outer = [
            LineString(e).difference(outer).length <= 1e3 * tol for e in edges
        ]
        m = len(edges)
        ext = tuple(v for v in range(m) if on_outer[v] and on_outer[(v - 1) % m])
        if not ext:
            raise NoExteriorCorner(f"cell {k + 1} owns no exterior corner", k)
        certificates.append(ext)
    return CellPartition(polys, tuple(certificates))


@dataclass(frozen=True)
class SectorGeometry:
    """Sector ``theta_m < arg x < theta_M`` truncated at radius ``h``.

    ``delta_W = cos(opening / 2)`` is the decay constant obtained with the
    reversed bisector direction. It is positive only for convex openings,
    which is what the CGO probe requires.
    """

    apex: Point2
    theta_m: float
    theta_M: float
    h: float
    delta_W: float

    def __post_init__(self):
        if not (-math.pi < self.theta_m < self.theta_M < math.pi):
            raise DegenerateCorner(
                f"sector angles must satisfy -pi < theta_m < theta_M < pi, got "
                f"({self.theta_m}, {self.theta_M})"
            )
        if not self.h > 0:
            raise DegenerateCorner(f"sector radius must be positive, got {self.h}")

    @classmethod
    def from_angles(cls, theta_m: float, theta_M: float, h: float = 1.0, apex=None):
        apex = Point2(0.0, 0.0) if apex is None else apex
        return cls(apex, theta_m, theta_M, h, math.cos(0.5 * (theta_M - theta_m)))

    @property
    def opening(self) -> float:
        return self.theta_M - self.theta_m

    @property
    def is_convex(self) -> bool:
        return 0.0 < self.opening < math.pi

    @property
    def bisector(self) -> float:
        return 0.5 * (self.theta_m + self.theta_M)

    @property
    def reversed_bisector(self) -> float:
        """Angle of the probe direction ``d``, wrapped to ``(-pi, pi]``."""
        t = self.bisector + math.pi
        return math.atan2(math.sin(t), math.cos(t))


@dataclass(frozen=True)
class RigidMotion:
    """``x -> Q (x - translation)`` with ``Q`` the rotation by ``angle``."""

    angle: float
    translation: tuple[float, float]

    def _q(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - np.asarray(self.translation)) @ self._q().T

    def inverse(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return y @ self._q() + np.asarray(self.translation)

    def rotate_vector(self, v) -> np.ndarray:
        return np.asarray(v) @ self._q().T

    def unrotate_vector(self, v) -> np.ndarray:
        return np.asarray(v) @ self._q()


@dataclass(frozen=True)
class CornerDescriptor:
    """A polygon vertex with its sector in local (rigidly moved) coordinates."""

    owner: int
    vertex_index: int
    vertex: Point2
    sector: SectorGeometry
    rigid_motion: RigidMotion


def extract_corners(partition) -> list[CornerDescriptor]:
    """One descriptor per vertex of every partition polygon.

    ``h`` is half the clearance from the vertex to every edge of the
    partition that does not pass through it.

    Raises
    ------
    DegenerateCorner
        If an opening is not in ``(0, 2 pi)`` or ``h`` would vanish.
    """
    polys = partition.polygons
    tol = partition.snap_tolerance
    all_edges = np.concatenate([p.edges() for p in polys])
    corners: list[CornerDescriptor] = []
    for owner, poly in enumerate(polys):
        xy = poly.coords()
        m = len(xy)
        for k in range(m):
            v = xy[k]
            e_next = xy[(k + 1) % m] - v
            e_prev = xy[(k - 1) % m] - v
            a_next = math.atan2(e_next[1], e_next[0])
            a_prev = math.atan2(e_prev[1], e_prev[0])
            opening = (a_prev - a_next) % (2 * math.pi)
            if not (tol < opening < 2 * math.pi - tol):
                raise DegenerateCorner(
                    f"vertex {k + 1} of polygon {owner + 1} has opening {opening}", owner
                )
            dist = np.array([float(segment_distance(v, e[0], e[1])) for e in all_edges])
            far = dist[dist > tol]
            if far.size == 0:
                raise DegenerateCorner(f"vertex {k + 1} of polygon {owner + 1} has no clearance", owner)
            h = 0.5 * float(far.min())
            theta_m = a_next
            rotation = 0.0
            if theta_m + opening >= math.pi or theta_m <= -math.pi:
                rotation = -(a_next + 0.5 * opening)
                theta_m = -0.5 * opening
            sector = SectorGeometry(
                Point2.of(v), theta_m, theta_m + opening, h, math.cos(0.5 * opening)
            )
            motion = RigidMotion(rotation, (float(v[0]), float(v[1])))
            corners.append(CornerDescriptor(owner, k, Point2.of(v), sector, motion))
    return corners


def _edge_distances(partition, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum distance to any partition edge and the index of that edge."""
    ids = partition.interfaces()
    best = np.full(len(xy), np.inf)
    arg = np.zeros(len(xy), dtype=int)
    for j, iid in enumerate(ids):
        e = partition.polygons[iid.polygon].edges()[iid.edge]
        d = segment_distance(xy, e[0], e[1])
        better = d < best
        best[better] = d[better]
        arg[better] = j
    return best, arg


def locate_many(partition, xy) -> list[RegionLabel]:
    """Vectorised :func:`locate` for an ``(n, 2)`` array of points."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    ids = partition.interfaces()
    dist, arg = _edge_distances(partition, xy)
    on_iface = dist < partition.snap_tolerance
    region = np.full(len(xy), -1)
    for k, poly in enumerate(partition.polygons):
        inside = shapely.contains_xy(poly._shape(), xy[:, 0], xy[:, 1])
        if partition.kind == "nest":
            region[inside] = k
        else:
            region[inside & (region < 0)] = k
    kind = "layer" if partition.kind == "nest" else "cell"
    labels = []
    for i in range(len(xy)):
        if on_iface[i]:
            labels.append(RegionLabel("interface", interface=ids[arg[i]]))
        elif region[i] < 0:
            labels.append(RegionLabel("exterior"))
        else:
            labels.append(RegionLabel(kind, int(region[i])))
    return labels


def locate(partition, x) -> RegionLabel:
    """Region containing ``x``: a layer, a cell, the exterior or an interface.

    A point closer than the snap tolerance to a partition edge is reported
    as ``"interface"`` with the id of the nearest edge.
    """
    if isinstance(x, Point2):
        x = x.as_array()
    return locate_many(partition, np.asarray(x, dtype=float)[None, :])[0]


def region_index_many(partition, xy) -> np.ndarray:
    """Region index per point (``-1`` exterior); interfaces are not snapped."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    region = np.full(len(xy), -1)
    for k, poly in enumerate(partition.polygons):
        inside = shapely.contains_xy(poly._shape(), xy[:, 0], xy[:, 1])
        if partition.kind == "nest":
            region[inside] = k
        else:
            region[inside & (region < 0)] = k
    return region
