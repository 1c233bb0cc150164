"""Piecewise-linear finite elements for the DtN-truncated scattering problem.

The scattered field ``v`` solves, for every test function ``phi`` on ``B_R``,

    int_{B_R} (C : grad v) : grad conj(phi) - omega**2 q v . conj(phi)
      - sum_interfaces int eta v . conj(phi) - int_{|x|=R} (DtN v) . conj(phi)
    = - int_Omega f . conj(phi) - int_interfaces g . conj(phi),

with ``f = omega**2 (1 - q) u_inc`` and ``g = -eta u_inc``. Interfaces are
the layer boundaries of a nest (each with its own ``eta``) or every cell
edge of a tiling (one shared ``eta``); an edge shared by two cells counts
once.

The DtN term is assembled through the polar Fourier modes of the trace,
``c_n = (2 pi)**-1 int (v . e_r, v . e_theta) exp(-i n theta) dtheta``, so
that it becomes ``-2 pi R Q^H diag(DtN_n) Q`` for the projection matrix
``Q``. Boundary edges are parametrised by angle, which places the trace on
the true circle.

Performance
-----------
Assembly is vectorised over triangles. The DtN block is dense on the
boundary dofs, about ``(4 pi R / h)**2`` entries, and is added to the
sparse matrix before a SuperLU factorisation.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import triangle as tr

from .dtn_farfield import DtnOperator, RadiatingSolution
from .elastic_core import PlaneWave, plane_wave_eval
from .geometry import InterfaceId, region_index_many, segment_distance
from .materials import LameParameters, MediumConfig, PositiveImpedanceWarning, elastic_tensor, sample_eta
from .quadrature import gauss_nodes

__all__ = [
    "MeshError",
    "GeometryOutsideDisk",
    "MeshingFailed",
    "RegionMismatch",
    "SingularSystem",
    "ResidualTooLarge",
    "Mesh",
    "AssembledSystem",
    "ScatteredField",
    "generate_mesh",
    "refine_uniform",
    "assemble",
    "rhs_from_incident",
    "solve",
    "circle_trace_modes",
    "trace_tail_ratio",
    "prolong",
    "boundary_projection",
    "h1_seminorm_matrix",
    "mass_matrix",
    "write_field_dump",
    "read_field_dump",
    "write_mesh_dump",
    "read_mesh_dump",
    "default_radius",
]

log = logging.getLogger(__name__)

BOUNDARY_MARKER = 1
INTERFACE_MARKER_BASE = 2
RESIDUAL_TOL = 1e-10


class MeshError(RuntimeError):
    pass


class GeometryOutsideDisk(MeshError, ValueError):
    pass


class MeshingFailed(MeshError):
    pass


class RegionMismatch(ValueError):
    pass


class SingularSystem(ArithmeticError):
    pass


class ResidualTooLarge(ArithmeticError):
    pass


def default_radius(partition) -> float:
    """``1.5`` times the largest vertex distance from the origin."""
    return 1.5 * partition.max_radius


@dataclass(frozen=True)
class Mesh:
    """Interface-conforming triangulation of ``B_R``.

    Attributes
    ----------
    vertices : (nv, 2) float
    triangles : (nt, 3) int, counterclockwise
    regions : (nt,) int
        Partition region of each triangle, ``-1`` for the exterior annulus.
    interface_edges : dict
        ``InterfaceId -> (ne, 2)`` vertex pairs covering that interface.
    boundary_edges : (nb, 2) int
        Edges on the circle, counterclockwise.
    corner_vertices : (nc,) int
        Mesh vertex of each partition vertex, in corner-extraction order.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    interface_edges: dict
    boundary_edges: np.ndarray
    corner_vertices: np.ndarray
    partition: object
    R: float
    h_mesh: float
    corner_grading: float = 0.5

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_dofs(self) -> int:
        return 2 * len(self.vertices)

    def areas(self) -> np.ndarray:
        x = self.vertices[self.triangles]
        d1 = x[:, 1] - x[:, 0]
        d2 = x[:, 2] - x[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_vertices(self) -> np.ndarray:
        return self.boundary_edges[:, 0]


def _unique_segments(partition, tol: float):
    """Split polygon edges at partition vertices lying on them and deduplicate."""
    points: list[np.ndarray] = []

    def point_id(p) -> int:
        for k, q in enumerate(points):
            if np.linalg.norm(p - q) <= tol:
                return k
        points.append(np.asarray(p, dtype=float))
        return len(points) - 1

    for poly in partition.polygons:
        for v in poly.coords():
            point_id(v)
    pts = np.array(points)
    segments: dict[tuple[int, int], InterfaceId] = {}
    for pi, poly in enumerate(partition.polygons):
        for ei, (a, b) in enumerate(poly.edges()):
            ia, ib = point_id(a), point_id(b)
            ab = b - a
            length2 = float(ab @ ab)
            inner = []
            for k, p in enumerate(pts):
                if k in (ia, ib):
                    continue
                if float(segment_distance(p, a, b)) <= tol:
                    inner.append((float((p - a) @ ab) / length2, k))
            chain = [ia] + [k for _, k in sorted(inner)] + [ib]
            for u, w in zip(chain[:-1], chain[1:]):
                key = (min(u, w), max(u, w))
                segments.setdefault(key, InterfaceId(pi, ei))
    return pts, segments


def _segment_parameters(length: float, h: float, grading: float, rings: int) -> np.ndarray:
    ts = set()
    n = max(1, math.ceil(length / h))
    ts.update(j / n for j in range(1, n))
    for k in range(1, rings + 1):
        t = h * grading**k / length
        if t < 0.4:
            ts.add(t)
            ts.add(1 - t)
    ts = sorted(ts)
    out = []
    for t in ts:
        if not out or (t - out[-1]) * length > 0.2 * h * grading**rings:
            out.append(t)
    return np.array([t for t in out if 0 < t < 1])


def generate_mesh(
    partition,
    R: float | None = None,
    h_mesh: float = 0.1,
    corner_grading: float = 0.5,
    rings: int = 3,
    min_angle: float = 28.0,
) -> Mesh:
    """Conforming triangulation of ``B_R`` with partition edges as constraints.

    Around each partition vertex, ``rings`` circles of radius
    ``h_mesh * corner_grading**k`` carry extra vertices so the local mesh
    size shrinks geometrically toward the corner.

    Raises
    ------
    GeometryOutsideDisk
        If any partition vertex is not strictly inside ``B_R``.
    MeshingFailed
        If the triangulator fails or returns an incomplete mesh.
    """
    if R is None:
        R = default_radius(partition)
    if not h_mesh > 0:
        raise ValueError("h_mesh must be positive")
    tol = partition.snap_tolerance
    if partition.max_radius >= R - max(tol, 1e-12 * R):
        raise GeometryOutsideDisk(
            f"partition reaches radius {partition.max_radius:.6g}, not inside B_R with R={R:.6g}"
        )
    pts, segments = _unique_segments(partition, tol)
    verts = [p for p in pts]
    segs: list[tuple[int, int]] = []
    marks: list[int] = []
    seg_ids = list(segments.items())
    for uid, ((ia, ib), _) in enumerate(seg_ids):
        a, b = pts[ia], pts[ib]
        length = float(np.linalg.norm(b - a))
        chain = [ia]
        for t in _segment_parameters(length, h_mesh, corner_grading, rings):
            verts.append(a + t * (b - a))
            chain.append(len(verts) - 1)
        chain.append(ib)
        for u, w in zip(chain[:-1], chain[1:]):
            segs.append((u, w))
            marks.append(INTERFACE_MARKER_BASE + uid)

    all_edges = np.array([(pts[a], pts[b]) for (a, b), _ in seg_ids])
    for v in pts:
        for k in range(1, rings + 1):
            rk = h_mesh * corner_grading**k
            for j in range(12):
                p = v + rk * np.array([math.cos(j * math.pi / 6 + 0.1), math.sin(j * math.pi / 6 + 0.1)])
                if np.linalg.norm(p) >= R - h_mesh:
                    continue
                clearance = min(float(segment_distance(p, e[0], e[1])) for e in all_edges)
                if clearance >= 0.35 * rk:
                    verts.append(p)

    nb = max(16, math.ceil(2 * math.pi * R / h_mesh))
    start = len(verts)
    for j in range(nb):
        th = 2 * math.pi * j / nb
        verts.append(np.array([R * math.cos(th), R * math.sin(th)]))
    for j in range(nb):
        segs.append((start + j, start + (j + 1) % nb))
        marks.append(BOUNDARY_MARKER)

    area = math.sqrt(3) / 4 * h_mesh**2
    data = {
        "vertices": np.array(verts),
        "segments": np.array(segs, dtype=np.int32),
        "segment_markers": np.array(marks, dtype=np.int32)[:, None],
    }
    try:
        out = tr.triangulate(data, f"pq{min_angle}a{area:.12g}")
    except Exception as exc:  # the C library reports failures as generic errors
        raise MeshingFailed(f"triangulation failed: {exc}") from exc
    if "triangles" not in out or "segments" not in out:
        raise MeshingFailed("triangulation returned no triangles")
    vertices = np.array(out["vertices"], dtype=float)
    triangles = np.array(out["triangles"], dtype=np.int64)
    seg_out = np.array(out["segments"], dtype=np.int64)
    mark_out = np.array(out["segment_markers"]).ravel()
    return _finish_mesh(
        partition, vertices, triangles, seg_out, mark_out, [iid for _, iid in seg_ids],
        R, h_mesh, corner_grading,
    )


def _finish_mesh(partition, vertices, triangles, seg_out, mark_out, uid_owner, R, h_mesh, grading):
    bmask = mark_out == BOUNDARY_MARKER
    bverts = np.unique(seg_out[bmask])
    rad = np.linalg.norm(vertices[bverts], axis=1)
    vertices[bverts] *= (R / rad)[:, None]

    x = vertices[triangles]
    det = (x[:, 1, 0] - x[:, 0, 0]) * (x[:, 2, 1] - x[:, 0, 1]) - (x[:, 1, 1] - x[:, 0, 1]) * (
        x[:, 2, 0] - x[:, 0, 0]
    )
    flip = det < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    if np.any(np.abs(det) == 0):
        raise MeshingFailed("degenerate triangle in output")
    regions = region_index_many(partition, vertices[triangles].mean(axis=1))

    interface_edges: dict = {}
    for (a, b), m in zip(seg_out[~bmask], mark_out[~bmask]):
        iid = uid_owner[int(m) - INTERFACE_MARKER_BASE]
        interface_edges.setdefault(iid, []).append((int(a), int(b)))
    interface_edges = {k: np.array(v, dtype=np.int64) for k, v in interface_edges.items()}

    bedges = seg_out[bmask]
    ang = np.arctan2(vertices[:, 1], vertices[:, 0])
    oriented = []
    for a, b in bedges:
        da = (ang[b] - ang[a]) % (2 * math.pi)
        oriented.append((a, b) if da < math.pi else (b, a))
    oriented = np.array(oriented, dtype=np.int64)
    oriented = oriented[np.argsort(ang[oriented[:, 0]] % (2 * math.pi))]

    corners = []
    tol = max(partition.snap_tolerance, 1e-12)
    for poly in partition.polygons:
        for v in poly.coords():
            d = np.linalg.norm(vertices - v, axis=1)
            k = int(np.argmin(d))
            if d[k] > tol:
                raise MeshingFailed("partition vertex missing from mesh")
            corners.append(k)
    return Mesh(
        vertices, triangles, regions, interface_edges, oriented, np.array(corners, dtype=np.int64),
        partition, float(R), float(h_mesh), float(grading),
    )


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four; new circle vertices are moved onto the circle.

    Old vertices keep their indices, so a coarse P1 field prolongs to the
    refined mesh by averaging edge endpoints (see :func:`prolong`).
    """
    tri = mesh.triangles
    edges = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    vertices = np.concatenate([mesh.vertices, mids])
    nt = len(tri)
    m01 = nv + inv[:nt]
    m12 = nv + inv[nt : 2 * nt]
    m20 = nv + inv[2 * nt :]
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    new_tri = np.concatenate(
        [
            np.stack([a, m01, m20], 1),
            np.stack([m01, b, m12], 1),
            np.stack([m20, m12, c], 1),
            np.stack([m01, m12, m20], 1),
        ]
    )
    regions = np.concatenate([mesh.regions] * 4)
    lookup = {tuple(e): nv + k for k, e in enumerate(uniq)}

    def split(pairs):
        out = []
        for p, q in pairs:
            m = lookup[(min(p, q), max(p, q))]
            out.extend([(p, m), (m, q)])
        return np.array(out, dtype=np.int64)

    interface_edges = {k: split(v) for k, v in mesh.interface_edges.items()}
    bedges = split(mesh.boundary_edges)
    bmid = np.unique(bedges[1::2, 0])
    vertices[bmid] *= (mesh.R / np.linalg.norm(vertices[bmid], axis=1))[:, None]
    return Mesh(
        vertices, new_tri, regions, interface_edges, bedges, mesh.corner_vertices,
        mesh.partition, mesh.R, 0.5 * mesh.h_mesh, mesh.corner_grading,
    )


def prolong(coarse: Mesh, fine: Mesh, values: np.ndarray) -> np.ndarray:
    """Interpolate nodal values from ``coarse`` to ``refine_uniform(coarse)``."""
    tri = coarse.triangles
    edges = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    uniq = np.unique(edges, axis=0)
    mids = 0.5 * (values[uniq[:, 0]] + values[uniq[:, 1]])
    out = np.concatenate([values, mids])
    if len(out) != fine.n_vertices:
        raise ValueError("fine mesh is not the uniform refinement of the coarse mesh")
    return out


def _p1_gradients(mesh: Mesh):
    x = mesh.vertices[mesh.triangles]
    d1 = x[:, 1] - x[:, 0]
    d2 = x[:, 2] - x[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    G = np.empty((len(x), 3, 2))
    G[:, 1, 0] = d2[:, 1] / det
    G[:, 1, 1] = -d2[:, 0] / det
    G[:, 2, 0] = -d1[:, 1] / det
    G[:, 2, 1] = d1[:, 0] / det
    G[:, 0] = -G[:, 1] - G[:, 2]
    return G, 0.5 * det


def _element_dofs(mesh: Mesh) -> np.ndarray:
    t = mesh.triangles
    return np.stack([2 * t, 2 * t + 1], axis=-1).reshape(len(t), 6)


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    dofs = _element_dofs(mesh)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = mesh.n_dofs
    return sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()


def _stiffness(mesh: Mesh, lame: LameParameters) -> sp.csr_matrix:
    G, area = _p1_gradients(mesh)
    C = elastic_tensor(lame)
    K = np.einsum("cjdl,eaj,ebl->eacbd", C, G, G) * area[:, None, None, None, None]
    return _scatter(mesh, K.reshape(-1, 6, 6))


def _mass_local(area: np.ndarray, weight: np.ndarray) -> np.ndarray:
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    M = np.einsum("e,ab,cd->eacbd", area * weight, base, np.eye(2))
    return M.reshape(-1, 6, 6)


def mass_matrix(mesh: Mesh, weight: np.ndarray | None = None) -> sp.csr_matrix:
    """Vector P1 mass matrix, optionally weighted per triangle."""
    _, area = _p1_gradients(mesh)
    w = np.ones(len(area)) if weight is None else np.asarray(weight, dtype=float)
    return _scatter(mesh, _mass_local(area, w))


def h1_seminorm_matrix(mesh: Mesh, mask: np.ndarray | None = None) -> sp.csr_matrix:
    """Componentwise ``int grad u : grad conj(v)`` over the triangles in ``mask``."""
    G, area = _p1_gradients(mesh)
    w = area if mask is None else area * mask
    K = np.einsum("eaj,ebj,cd->eacbd", G, G, np.eye(2)) * w[:, None, None, None, None]
    return _scatter(mesh, K.reshape(-1, 6, 6))


def _edge_mass(mesh: Mesh, edges: np.ndarray, weight: float) -> sp.csr_matrix:
    n = mesh.n_dofs
    if len(edges) == 0:
        return sp.csr_matrix((n, n))
    L = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    base = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    rows, cols, vals = [], [], []
    for a in range(2):
        for b in range(2):
            for c in range(2):
                rows.append(2 * edges[:, a] + c)
                cols.append(2 * edges[:, b] + c)
                vals.append(weight * L * base[a, b])
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()


def boundary_projection(mesh: Mesh, N: int, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Matrix ``Q`` sending boundary dofs to polar trace modes ``-N..N``.

    Returns ``(Q, dofs)`` with ``Q`` of shape ``(2 (2N+1), len(dofs))``; row
    ``2 m + j`` is mode ``m - N`` of the radial (``j = 0``) or tangential
    (``j = 1``) component.
    """
    be = mesh.boundary_edges
    bverts = np.unique(be)
    local = {int(v): k for k, v in enumerate(bverts)}
    ang = np.arctan2(mesh.vertices[:, 1], mesh.vertices[:, 0])
    t, w = gauss_nodes(order)
    n = np.arange(-N, N + 1)
    Q = np.zeros((2 * N + 1, 2, len(bverts), 2), dtype=complex)
    for a, b in be:
        ta = ang[a]
        span = (ang[b] - ta) % (2 * math.pi)
        th = ta + span * t
        wt = w * span / (2 * math.pi)
        er = np.stack([np.cos(th), np.sin(th)], -1)
        et = np.stack([-np.sin(th), np.cos(th)], -1)
        frame = np.stack([er, et], axis=1)
        ph = np.exp(-1j * np.outer(n, th)) * wt
        for v, hat in ((a, 1 - t), (b, t)):
            Q[:, :, local[int(v)], :] += np.einsum("nq,qjc->njc", ph * hat, frame)
    dofs = np.stack([2 * bverts, 2 * bverts + 1], -1).ravel()
    return Q.reshape(2 * (2 * N + 1), 2 * len(bverts)), dofs


@dataclass
class AssembledSystem:
    """Sparse complex system for the scattered field.

    ``matrix`` already contains the dense DtN block on the boundary dofs.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray | None
    mesh: Mesh
    config: MediumConfig
    lame: LameParameters
    omega: float
    dtn: DtnOperator | None
    projection: np.ndarray | None = field(default=None, repr=False)
    boundary_dofs: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]

    def with_rhs(self, rhs: np.ndarray) -> "AssembledSystem":
        return AssembledSystem(
            self.matrix, rhs, self.mesh, self.config, self.lame, self.omega, self.dtn,
            self.projection, self.boundary_dofs,
        )


def _interface_weights(mesh: Mesh, config: MediumConfig) -> list[tuple[np.ndarray, float]]:
    return [(edges, sample_eta(config, iid)) for iid, edges in sorted(mesh.interface_edges.items())]


def _check_regions(mesh: Mesh, config: MediumConfig) -> None:
    part = config.partition
    if mesh.partition is not part and mesh.partition != part:
        raise RegionMismatch("mesh and medium were built on different partitions")
    if mesh.regions.max(initial=-1) >= len(config.q_values):
        raise RegionMismatch("mesh region index exceeds the number of q values")


def assemble(
    mesh: Mesh,
    config: MediumConfig,
    lame: LameParameters,
    omega: float,
    dtn: DtnOperator | None,
) -> AssembledSystem:
    """Assemble stiffness minus weighted mass, interface and DtN terms.

    Passing ``dtn=None`` omits the boundary term.

    Raises
    ------
    RegionMismatch
        If the mesh was not generated on the medium's partition.
    """
    _check_regions(mesh, config)
    q = np.array([config.q_of_region(int(r)) for r in mesh.regions])
    A = _stiffness(mesh, lame) - omega**2 * mass_matrix(mesh, q)
    for edges, eta in _interface_weights(mesh, config):
        if eta != 0.0:
            A = A - _edge_mass(mesh, edges, eta)
    Q = dofs = None
    if dtn is not None:
        if abs(dtn.R - mesh.R) > 1e-12 * mesh.R or dtn.omega != omega:
            raise RegionMismatch("DtN operator radius or frequency does not match the mesh")
        Q, dofs = boundary_projection(mesh, dtn.N)
        blocks = sp.block_diag(list(dtn.maps), format="csr")
        dense = -2 * math.pi * mesh.R * (Q.conj().T @ (blocks @ Q))
        rr, cc = np.meshgrid(dofs, dofs, indexing="ij")
        A = A + sp.coo_matrix(
            (dense.ravel(), (rr.ravel(), cc.ravel())), shape=A.shape
        ).tocsr()
    return AssembledSystem(A.tocsr(), None, mesh, config, lame, omega, dtn, Q, dofs)


_EDGE_MID = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def rhs_from_incident(mesh: Mesh, config: MediumConfig, wave: PlaneWave) -> np.ndarray:
    """Load vector ``-int_Omega f . phi - int_interfaces g . phi``.

    Triangles use the three-point edge-midpoint rule and interface edges the
    two-point Gauss rule.
    """
    omega = wave.k.omega
    b = np.zeros(mesh.n_dofs, dtype=complex)
    inside = mesh.regions >= 0
    if np.any(inside):
        tri = mesh.triangles[inside]
        _, area_all = _p1_gradients(mesh)
        area = area_all[inside]
        q = np.array([config.q_values[int(r)] for r in mesh.regions[inside]])
        coef = -(omega**2) * (1.0 - q) * area / 3.0
        x = mesh.vertices[tri]
        for bary in _EDGE_MID:
            pts = np.einsum("a,eak->ek", bary, x)
            ui = plane_wave_eval(wave, pts).value
            for a in range(3):
                if bary[a] == 0:
                    continue
                for c in range(2):
                    np.add.at(b, 2 * tri[:, a] + c, coef * bary[a] * ui[:, c])
    gp = np.array([0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3)])
    for edges, eta in _interface_weights(mesh, config):
        if eta == 0.0 or len(edges) == 0:
            continue
        pa, pb = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
        L = np.linalg.norm(pb - pa, axis=1)
        for t in gp:
            ui = plane_wave_eval(wave, pa + t * (pb - pa)).value
            for v, hat in ((edges[:, 0], 1 - t), (edges[:, 1], t)):
                for c in range(2):
                    np.add.at(b, 2 * v + c, eta * 0.5 * L * hat * ui[:, c])
    return b


@dataclass
class ScatteredField:
    """Nodal scattered displacement with solve diagnostics."""

    mesh: Mesh
    values: np.ndarray
    wave: PlaneWave | None
    config: MediumConfig
    lame: LameParameters
    omega: float
    residual: float
    stability: dict = field(default_factory=dict)

    def incident_values(self) -> np.ndarray:
        if self.wave is None:
            return np.zeros_like(self.values)
        return plane_wave_eval(self.wave, self.mesh.vertices).value

    def total_values(self) -> np.ndarray:
        return self.values + self.incident_values()

    def h1_norm(self, mask: np.ndarray | None = None) -> float:
        x = self.values.reshape(-1)
        K = h1_seminorm_matrix(self.mesh, mask)
        w = None if mask is None else mask.astype(float)
        M = mass_matrix(self.mesh, w)
        return math.sqrt(max(float(np.real(np.conj(x) @ (K @ x + M @ x))), 0.0))


def _incident_l2_scatterer(mesh: Mesh, wave: PlaneWave) -> float:
    inside = mesh.regions >= 0
    _, area = _p1_gradients(mesh)
    x = mesh.vertices[mesh.triangles[inside]]
    total = 0.0
    for bary in _EDGE_MID:
        ui = plane_wave_eval(wave, np.einsum("a,eak->ek", bary, x)).value
        total += float(np.sum(area[inside] / 3.0 * (np.abs(ui) ** 2).sum(-1)))
    return math.sqrt(total)


def solve(system: AssembledSystem, wave: PlaneWave | None = None, refinements: int = 3) -> ScatteredField:
    """Sparse LU solve with iterative refinement.

    Raises
    ------
    SingularSystem
        If the factorisation fails.
    ResidualTooLarge
        If the relative residual stays above ``1e-10`` after refinement.
    """
    if system.rhs is None:
        raise ValueError("system has no right-hand side; use rhs_from_incident")
    if any(v > 0 for v in system.config.eta_values):
        warnings.warn(
            "eta > 0 somewhere: existence of the forward solution is not guaranteed",
            PositiveImpedanceWarning,
            stacklevel=2,
        )
    A = system.matrix.tocsc()
    b = np.asarray(system.rhs, dtype=complex)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        x = np.zeros(system.n_dofs, dtype=complex)
        rel = 0.0
    else:
        try:
            lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularSystem(f"factorisation failed: {exc}") from exc
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularSystem("solution is not finite")
        rel = float(np.linalg.norm(b - A @ x)) / bnorm
        for _ in range(refinements):
            if rel <= RESIDUAL_TOL:
                break
            x = x + lu.solve(b - A @ x)
            rel = float(np.linalg.norm(b - A @ x)) / bnorm
        if rel > RESIDUAL_TOL:
            raise ResidualTooLarge(f"relative residual {rel:.3e} exceeds {RESIDUAL_TOL:.0e}")
    field_ = ScatteredField(
        system.mesh, x.reshape(-1, 2), wave, system.config, system.lame, system.omega, rel
    )
    if wave is not None:
        cfg = system.config
        data = system.omega**2 * cfg.q_contrast_sup + cfg.eta_sup
        inc = _incident_l2_scatterer(system.mesh, wave)
        norm = field_.h1_norm()
        field_.stability = {
            "h1_scattered": norm,
            "data_bound": data * inc,
            "ratio": norm / (data * inc) if data * inc > 0 else 0.0,
        }
        log.info("solve: residual %.2e, stability ratio %.3g", rel, field_.stability["ratio"])
    return field_


TAIL_WARNING = 1e-8


def trace_tail_ratio(modes: np.ndarray) -> float:
    """Largest ``|n| = N`` trace mode relative to the largest mode."""
    mags = np.abs(modes).max(axis=1)
    top = mags.max()
    return float(max(mags[0], mags[-1]) / top) if top > 0 else 0.0


def circle_trace_modes(field_: ScatteredField, dtn: DtnOperator) -> RadiatingSolution:
    """Potential coefficients of the radiating extension of the circle trace.

    Logs a warning when the trace modes at ``|n| = N`` exceed ``1e-8`` of
    the largest mode; the truncation is then visible in the near field.
    """
    Q, dofs = boundary_projection(field_.mesh, dtn.N)
    x = field_.values.reshape(-1)[dofs]
    modes = (Q @ x).reshape(2 * dtn.N + 1, 2)
    ratio = trace_tail_ratio(modes)
    if ratio > TAIL_WARNING:
        log.warning("trace modes at |n| = %d are %.1e of the peak", dtn.N, ratio)
    a, b = dtn.potentials(modes)
    return RadiatingSolution(dtn.lame, dtn.omega, a, b)


def write_field_dump(path, field_: ScatteredField, total: bool = False) -> None:
    """Text table ``vertex_id, x1, x2, Re u1, Im u1, Re u2, Im u2``."""
    u = field_.total_values() if total else field_.values
    lines = ["vertex_id, x1, x2, Re u1, Im u1, Re u2, Im u2"]
    for k, (p, v) in enumerate(zip(field_.mesh.vertices, u)):
        lines.append(
            f"{k}, {p[0]:.16e}, {p[1]:.16e}, {v[0].real:.16e}, {v[0].imag:.16e}, "
            f"{v[1].real:.16e}, {v[1].imag:.16e}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_dump(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(vertices, values)`` from a field dump."""
    rows = [
        [float(v) for v in line.split(",")]
        for line in Path(path).read_text().splitlines()[1:]
        if line.strip()
    ]
    data = np.array(rows).reshape(-1, 7)
    return data[:, 1:3], np.stack([data[:, 3] + 1j * data[:, 4], data[:, 5] + 1j * data[:, 6]], -1)


def write_mesh_dump(stem, mesh: Mesh) -> tuple[Path, Path]:
    """Write ``stem.node`` and ``stem.ele`` in the Triangle file format.

    Node markers are 1 on the circle and 0 elsewhere; the element attribute
    is the region index (``-1`` for the exterior annulus).
    """
    stem = Path(stem)
    marker = np.zeros(mesh.n_vertices, dtype=int)
    marker[np.unique(mesh.boundary_edges)] = 1
    node = [f"{mesh.n_vertices} 2 0 1"]
    node += [f"{k} {p[0]:.16e} {p[1]:.16e} {m}" for k, (p, m) in enumerate(zip(mesh.vertices, marker))]
    ele = [f"{len(mesh.triangles)} 3 1"]
    ele += [f"{k} {t[0]} {t[1]} {t[2]} {r}" for k, (t, r) in enumerate(zip(mesh.triangles, mesh.regions))]
    node_path = stem.with_suffix(".node")
    ele_path = stem.with_suffix(".ele")
    node_path.write_text("\n".join(node) + "\n")
    ele_path.write_text("\n".join(ele) + "\n")
    return node_path, ele_path


def read_mesh_dump(stem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(vertices, triangles, regions)`` from ``stem.node`` / ``stem.ele``."""
    stem = Path(stem)
    node = stem.with_suffix(".node").read_text().split("\n")
    nv = int(node[0].split()[0])
    vertices = np.array([[float(v) for v in line.split()[1:3]] for line in node[1 : nv + 1]])
    ele = stem.with_suffix(".ele").read_text().split("\n")
    nt = int(ele[0].split()[0])
    rows = np.array([[int(v) for v in line.split()[1:5]] for line in ele[1 : nt + 1]])
    return vertices, rows[:, :3], rows[:, 3]
