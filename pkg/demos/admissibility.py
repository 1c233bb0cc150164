"""Low-frequency admissibility of the corners of a square.

At omega * diam = 0.1 the total field at each corner stays close to the
incident amplitude, so every corner passes the 0.5 floor. The sweep
to higher frequencies shows how far the corner values move for this
weak scatterer.
"""

import math

from elastocorner import corner_probe as cp
from elastocorner import fem_solver as fs
from elastocorner.dtn_farfield import build_dtn
from elastocorner.elastic_core import PlaneWave
from elastocorner.geometry import SimplePolygon, build_nest_partition, extract_corners
from elastocorner.materials import LameParameters, MediumConfig

lame = LameParameters(1.0, 1.0)
part = build_nest_partition([SimplePolygon.from_coords([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])])
cfg = MediumConfig.build(part, [1.2], [-0.1])
mesh = fs.generate_mesh(part, fs.default_radius(part), 0.1)
corners = extract_corners(part)

for omega_diam in (0.1, 1.0, 4.0, 8.0):
    omega = omega_diam / math.sqrt(2.0)
    wave = PlaneWave.of("p", 0.0, lame, omega)
    dtn = build_dtn(lame, omega, mesh.R)
    f = fs.solve(fs.assemble(mesh, cfg, lame, omega, dtn).with_rhs(fs.rhs_from_incident(mesh, cfg, wave)), wave)
    rep = cp.admissibility_check(f, corners, 0.5)
    vals = ", ".join(f"{v:.3f}" for v in rep.corner_values)
    print(f"omega * diam = {omega_diam:4.1f}  |u(x_c)| = [{vals}]  admissible {rep.admissible}")
