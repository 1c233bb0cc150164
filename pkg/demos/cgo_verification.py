"""Closed forms of the CGO probe against brute-force quadrature.

For a few sectors and growing ``s`` the sector and edge integrals of the
probe are evaluated exactly and by adaptive Gauss quadrature. Once
``s h delta >= 5`` the decay bounds are compared with the quadrature values.
"""

import math

from elastocorner.cli import cgo_rows
from elastocorner.geometry import SectorGeometry
from elastocorner.materials import LameParameters

lame = LameParameters(1.0, 1.0)
for theta_m, theta_M, h in [(-math.pi / 4, math.pi / 4, 1.0), (-1.2, 0.3, 0.7)]:
    sector = SectorGeometry.from_angles(theta_m, theta_M, h=h)
    print(f"\nsector [{theta_m:.3f}, {theta_M:.3f}], h = {h}, delta_W = {sector.delta_W:.4f}")
    for s, name, ref, quad, ok in cgo_rows(sector, [5.0, 10.0, 20.0, 40.0], lame):
        gap = abs(ref - quad) / max(abs(ref), 1e-300)
        kind = "bound" if "bound" in name else "rel gap"
        print(f"  s = {s:5.1f}  {name:28s} {kind} {gap if kind == 'rel gap' else abs(ref):10.3e}  {'ok' if ok else 'FAIL'}")
