"""Gauss-Legendre quadrature with panel doubling.

These routines are the independent oracle for every closed form in
:mod:`elastocorner.elastic_core`. Integrands are vectorised callables.
Panel counts double until two successive estimates agree to the requested
tolerance, so the reported error is the last observed change.

Radial integrals over sectors use the substitution ``r = R t**p`` which
clusters nodes at the apex, where both the exponential boundary layer of
the CGO field and any ``r**alpha`` factor live.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

__all__ = [
    "QuadratureResult",
    "QuadratureFailure",
    "gauss_nodes",
    "panel_gauss",
    "adaptive_gauss",
    "adaptive_polar",
    "tail_radius",
]


# cancellation floor: changes below this fraction of int |f| are rounding noise
ROUNDOFF = 1e-14


class QuadratureFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    error: float
    panels: int


@lru_cache(maxsize=None)
def gauss_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _panel_points(a: float, b: float, panels: int, order: int):
    x, w = gauss_nodes(order)
    edges = np.linspace(a, b, panels + 1)
    width = np.diff(edges)
    pts = (edges[:-1, None] + width[:, None] * x[None, :]).ravel()
    wts = (width[:, None] * w[None, :]).ravel()
    return pts, wts


def panel_gauss(f, a: float, b: float, panels: int = 1, order: int = 16):
    """Composite Gauss-Legendre rule with ``panels`` equal panels."""
    pts, wts = _panel_points(a, b, panels, order)
    return np.tensordot(wts, f(pts), axes=(0, 0))


def adaptive_gauss(
    f,
    a: float,
    b: float,
    rtol: float = 1e-12,
    atol: float = 0.0,
    order: int = 16,
    max_panels: int = 2**15,
) -> QuadratureResult:
    """Integrate ``f`` over ``[a, b]`` doubling the panel count until converged."""
    panels = 1
    prev = panel_gauss(f, a, b, panels, order)
    while True:
        panels *= 2
        pts, wts = _panel_points(a, b, panels, order)
        vals = f(pts)
        cur = np.tensordot(wts, vals, axes=(0, 0))
        err = float(np.max(np.abs(cur - prev)))
        mass = float(np.max(np.tensordot(wts, np.abs(vals), axes=(0, 0))))
        if err <= max(atol, rtol * float(np.max(np.abs(cur))), ROUNDOFF * mass):
            return QuadratureResult(complex(cur) if np.ndim(cur) == 0 else cur, err, panels)
        if panels >= max_panels:
            raise QuadratureFailure(f"no convergence with {panels} panels (change {err:.3e})")
        prev = cur


def tail_radius(decay: float, power: float, tol: float) -> float:
    """Radius beyond which ``int_R^inf r**power exp(-decay r) dr <= tol``.

    The tail equals ``Gamma(power + 1) Q(power + 1, decay R) / decay**(power + 1)``
    with ``Q`` the regularised upper incomplete gamma function.
    """
    if decay <= 0:
        raise ValueError("decay rate must be positive")
    a = power + 1.0
    scale = special.gamma(a) / decay**a
    q = tol / scale
    if q >= 1.0:
        return 0.0
    return float(special.gammainccinv(a, q) / decay)


def adaptive_polar(
    f,
    theta_range: tuple[float, float],
    r_range: tuple[float, float],
    rtol: float = 1e-12,
    atol: float = 0.0,
    order: int = 16,
    power: int = 2,
    max_panels: int = 2**11,
) -> QuadratureResult:
    """Integrate ``f(r, theta) r dr dtheta`` over an annular sector.

    ``f`` receives broadcastable arrays ``r`` of shape ``(nr, 1)`` and
    ``theta`` of shape ``(1, nt)``. The inner radius is mapped with
    ``r = r0 + (r1 - r0) t**power`` to cluster nodes near ``r0``.
    """
    t0, t1 = theta_range
    r0, r1 = r_range
    span = r1 - r0

    def estimate(nr: int, nt: int):
        tp, tw = _panel_points(0.0, 1.0, nr, order)
        r = r0 + span * tp**power
        jac = span * power * tp ** (power - 1)
        th, thw = _panel_points(t0, t1, nt, order)
        vals = f(r[:, None], th[None, :]) * r[:, None]
        return (tw * jac) @ vals @ thw, (tw * jac) @ np.abs(vals) @ thw

    nr, nt = 1, 1
    prev, _ = estimate(nr, nt)
    err = np.inf
    while True:
        cand_r, mass = estimate(2 * nr, nt)
        cand_t, _ = estimate(nr, 2 * nt)
        dr = abs(cand_r - prev)
        dt = abs(cand_t - prev)
        scale = max(abs(cand_r), abs(cand_t))
        if max(dr, dt) <= max(atol, rtol * scale, ROUNDOFF * mass):
            final, _ = estimate(2 * nr, 2 * nt)
            err = max(dr, dt, abs(final - prev))
            return QuadratureResult(complex(final), float(err), nr * nt)
        if dr >= dt:
            nr *= 2
            prev = cand_r
        else:
            nt *= 2
            prev = cand_t
        if nr > max_panels or nt > max_panels:
            raise QuadratureFailure(f"polar quadrature did not converge (nr={nr}, nt={nt})")
