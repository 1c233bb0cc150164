"""Far-field patterns of a square and a triangle of equal area.

Both scatterers share the material (q = 2, eta = -0.3) and the incident
compressional wave. The patterns differ by far more than the gap between
two successive mesh refinements of the same shape.
"""

import math

from elastocorner import fem_solver as fs
from elastocorner.dtn_farfield import build_dtn, far_field_from_solution, farfield_distance
from elastocorner.elastic_core import PlaneWave
from elastocorner.geometry import SimplePolygon, build_nest_partition
from elastocorner.materials import LameParameters, MediumConfig

lame = LameParameters(1.0, 1.0)
omega = math.sqrt(2.0)
wave = PlaneWave.of("p", 0.3, lame, omega)
a = math.sqrt(4 / math.sqrt(3))
shapes = {
    "square": [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)],
    "triangle": [(-a / 2, -a * math.sqrt(3) / 6), (a / 2, -a * math.sqrt(3) / 6), (0.0, a * math.sqrt(3) / 3)],
}


def pattern(mesh):
    cfg = MediumConfig.build(mesh.partition, [2.0], [-0.3])
    dtn = build_dtn(lame, omega, mesh.R)
    system = fs.assemble(mesh, cfg, lame, omega, dtn).with_rhs(fs.rhs_from_incident(mesh, cfg, wave))
    return far_field_from_solution(fs.circle_trace_modes(fs.solve(system, wave), dtn))


finest = {}
for name, coords in shapes.items():
    mesh = fs.generate_mesh(build_nest_partition([SimplePolygon.from_coords(coords)]), 1.3, 0.05)
    coarse, fine = pattern(mesh), pattern(fs.refine_uniform(mesh))
    finest[name] = fine
    print(f"{name:8s}  |A| = {fine.l2_norm():.5f}   refinement gap {farfield_distance(coarse, fine):.2e}")
print(f"square vs triangle distance {farfield_distance(*finest.values()):.4e}")
