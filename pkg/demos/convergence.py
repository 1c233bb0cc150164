"""Observed H1 convergence of the P1 solver on a penetrable square.

Solutions on h0 = 0.1 and three uniform halvings are prolonged to the
finest mesh and compared there, away from disks of radius h0 around
the corners where the solution is only Hoelder continuous.
"""

import math

import numpy as np

from elastocorner import fem_solver as fs
from elastocorner.dtn_farfield import build_dtn
from elastocorner.elastic_core import PlaneWave
from elastocorner.geometry import SimplePolygon, build_nest_partition, extract_corners
from elastocorner.materials import LameParameters, MediumConfig

lame = LameParameters(1.0, 1.0)
omega = math.sqrt(2.0)
wave = PlaneWave.of("p", 0.3, lame, omega)
part = build_nest_partition([SimplePolygon.from_coords([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])])
cfg = MediumConfig.build(part, [2.0], [-0.3])

meshes, fields = [fs.generate_mesh(part, 1.3, 0.1)], []
for k in range(4):
    m = meshes[-1]
    dtn = build_dtn(lame, omega, m.R)
    fields.append(fs.solve(fs.assemble(m, cfg, lame, omega, dtn).with_rhs(fs.rhs_from_incident(m, cfg, wave)), wave))
    print(f"h = {m.h_mesh:.4f}  vertices {m.n_vertices:6d}  residual {fields[-1].residual:.1e}")
    if k < 3:
        meshes.append(fs.refine_uniform(m))

fine = meshes[-1]
corners = np.array([(c.vertex.x1, c.vertex.x2) for c in extract_corners(part)])
centroids = fine.vertices[fine.triangles].mean(axis=1)
mask = np.linalg.norm(centroids[:, None] - corners[None], axis=-1).min(axis=1) > meshes[0].h_mesh
K = fs.h1_seminorm_matrix(fine, mask) + fs.mass_matrix(fine, mask.astype(float))

errors = []
for k in range(3):
    v = fields[k].values
    for j in range(k, 3):
        v = fs.prolong(meshes[j], meshes[j + 1], v)
    e = (v - fields[-1].values).ravel()
    errors.append(math.sqrt(abs(np.conj(e) @ (K @ e))))
for k in range(2):
    print(f"order between h = {meshes[k].h_mesh:.4f} and {meshes[k + 1].h_mesh:.4f}: {math.log2(errors[k] / errors[k + 1]):.2f}")
