"""Elastic scattering by polygonal media with conductive interfaces, and CGO corner probes.

Modules
-------
geometry      polygon partitions, corners and sectors
materials     Lame parameters and piecewise-constant media
elastic_core  plane waves, tractions and the CGO probe with its closed forms
dtn_farfield  circle DtN map, radiating solutions and far-field patterns
fem_solver    interface-conforming P1 finite elements on the truncated disk
corner_probe  corner integral identity and recovery of interface jumps
cli           command-line orchestration
"""

import os as _os

__version__ = "0.1.0"

_threads = _os.environ.get("ELASTOCORNER_THREADS")
if _threads:
    # must precede the first numpy import to reach the BLAS pool
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
