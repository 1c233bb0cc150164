"""Analytic elastic fields, CGO closed forms and their decay bounds.

Conventions
-----------
* ``gradient[..., i, j]`` is the derivative of component ``i`` along ``x_j``.
* The scalar curl of a vector field is ``d1 u2 - d2 u1`` and the vector curl
  of a scalar ``w`` is ``(d2 w, -d1 w)``. With these, every solution of the
  homogeneous Lame equation ``L u + omega**2 u = 0`` splits as
  ``u = -k_p**-2 grad div u + k_s**-2 curl curl u``.
* The CGO probe is ``u0 = (1, i) exp(rho . x)`` with
  ``rho = s (d + i d_perp) = s exp(-i theta_d) (1, i)``, so that
  ``rho . x = s r exp(i (theta - theta_d))``. Dot products between complex
  vectors never conjugate.

The closed forms below are checked against :mod:`elastocorner.quadrature`
in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special

from .geometry import Point2, SectorGeometry
from .materials import LameParameters, Wavenumbers, wavenumbers as _wavenumbers
from .quadrature import adaptive_gauss, adaptive_polar, gauss_nodes, tail_radius

__all__ = [
    "InvalidSector",
    "DomainError",
    "GridTooCoarse",
    "FieldSample",
    "PlaneWave",
    "CGOProbe",
    "BoundaryIntegral",
    "BoundReport",
    "plane_wave_eval",
    "plane_wave_hessian",
    "lame_operator",
    "traction",
    "helmholtz_split",
    "cgo_eval",
    "cgo_sector_integral_exact",
    "cgo_boundary_integral_exact",
    "laplace_moment",
    "cgo_moment_bound",
    "cgo_tail_bound",
    "cgo_norm_bounds",
    "ASYMPTOTIC_THRESHOLD",
    "cgo_sector_integral_quadrature",
    "cgo_boundary_integral_quadrature",
    "cgo_moment_quadrature",
    "cgo_tail_quadrature",
    "cgo_arc_norms_quadrature",
    "laplace_moment_quadrature",
]

ASYMPTOTIC_THRESHOLD = 5.0
"""Bounds stated for ``s -> infinity`` are asserted only when ``s h delta >= 5``."""

CGO_POLARIZATION = np.array([1.0, 1.0j])


class InvalidSector(ValueError):
    pass


class DomainError(ValueError):
    pass


class GridTooCoarse(ValueError):
    pass


@dataclass(frozen=True)
class FieldSample:
    """Value, gradient and divergence of a complex vector field.

    Arrays broadcast over leading point dimensions: ``value`` has shape
    ``(..., 2)``, ``gradient`` ``(..., 2, 2)`` and ``divergence`` ``(...)``.
    """

    value: np.ndarray
    gradient: np.ndarray
    divergence: np.ndarray


def _points(x) -> np.ndarray:
    if isinstance(x, Point2):
        return x.as_array()
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class PlaneWave:
    """Incident plane wave ``d exp(i k_p x.d)`` or ``d_perp exp(i k_s x.d)``.

    Parameters
    ----------
    kind : {"p", "s"}
        Compressional or shear.
    angle : float
        Propagation direction ``d = (cos angle, sin angle)``.
    k : Wavenumbers
    """

    kind: Literal["p", "s"]
    angle: float
    k: Wavenumbers

    def __post_init__(self):
        if self.kind not in ("p", "s"):
            raise ValueError(f"plane wave kind must be 'p' or 's', got {self.kind!r}")

    @classmethod
    def of(cls, kind: str, angle: float, lame: LameParameters, omega: float) -> "PlaneWave":
        return cls(kind, angle, _wavenumbers(lame, omega))

    @property
    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])

    @property
    def polarization(self) -> np.ndarray:
        d = self.direction
        return d if self.kind == "p" else np.array([-d[1], d[0]])

    @property
    def wavenumber(self) -> float:
        return self.k.k_p if self.kind == "p" else self.k.k_s


def plane_wave_eval(w: PlaneWave, x) -> FieldSample:
    """Analytic value, gradient and divergence of a plane wave at ``x``."""
    x = _points(x)
    d = w.direction
    a = w.polarization
    k = w.wavenumber
    phase = np.exp(1j * k * (x @ d))
    value = phase[..., None] * a
    grad = (1j * k) * phase[..., None, None] * np.outer(a, d)
    return FieldSample(value, grad, np.trace(grad, axis1=-2, axis2=-1))


def plane_wave_hessian(w: PlaneWave, x) -> np.ndarray:
    """Second derivatives ``H[..., i, j, l] = d_j d_l u_i``."""
    x = _points(x)
    d = w.direction
    k = w.wavenumber
    phase = np.exp(1j * k * (x @ d))
    return -(k**2) * phase[..., None, None, None] * np.einsum("i,j,l->ijl", w.polarization, d, d)


def lame_operator(hessian: np.ndarray, lame: LameParameters) -> np.ndarray:
    """``mu Lap u + (lambda + mu) grad div u`` from second derivatives ``H[..., i, j, l]``."""
    lap = np.einsum("...ijj->...i", hessian)
    grad_div = np.einsum("...jji->...i", hessian)
    return lame.mu * lap + (lame.lam + lame.mu) * grad_div


def traction(f: FieldSample, nu, lame: LameParameters) -> np.ndarray:
    """``lambda (div u) nu + 2 mu sym(grad u) nu``."""
    nu = np.asarray(nu, dtype=float)
    g = f.gradient
    sym = 0.5 * (g + np.swapaxes(g, -1, -2))
    div = np.asarray(f.divergence)
    return lame.lam * div[..., None] * nu + 2.0 * lame.mu * np.einsum("...ij,...j->...i", sym, nu)


_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def _diff(a: np.ndarray, step: float, axis: int) -> np.ndarray:
    """Fourth-order central difference; drops two points at each end of ``axis``."""
    n = a.shape[axis]
    out = 0.0
    for k, c in enumerate(_D1):
        if c == 0.0:
            continue
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(k, n - 4 + k)
        out = out + c * a[tuple(sl)]
    return out / step


def helmholtz_split(x1: np.ndarray, x2: np.ndarray, u: np.ndarray, k: Wavenumbers):
    """Compressional and shear parts of a sampled field.

    Parameters
    ----------
    x1, x2 : 1-D arrays
        Uniform grid coordinates; ``u`` has shape ``(len(x2), len(x1), 2)``.
    k : Wavenumbers

    Returns
    -------
    (x1_inner, x2_inner, u_p, u_s)
        The parts on the grid interior (four points trimmed at each side).

    Raises
    ------
    GridTooCoarse
        If fewer than 10 points resolve one shear wavelength, or the grid is too small.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    u = np.asarray(u)
    h1 = float(x1[1] - x1[0])
    h2 = float(x2[1] - x2[0])
    wavelength = 2 * math.pi / k.k_s
    if max(h1, h2) > wavelength / 10 or len(x1) < 9 or len(x2) < 9:
        raise GridTooCoarse(
            f"grid spacing {max(h1, h2):.3g} does not resolve shear wavelength {wavelength:.3g}"
        )
    dx = lambda a: _diff(a, h1, axis=1)  # noqa: E731
    dy = lambda a: _diff(a, h2, axis=0)  # noqa: E731
    u1, u2 = u[..., 0], u[..., 1]
    div = dx(u1[2:-2, :]) + dy(u2[:, 2:-2])
    curl = dx(u2[2:-2, :]) - dy(u1[:, 2:-2])
    up = -np.stack([dx(div[2:-2, :]), dy(div[:, 2:-2])], axis=-1) / k.k_p**2
    us = np.stack([dy(curl[:, 2:-2]), -dx(curl[2:-2, :])], axis=-1) / k.k_s**2
    return x1[4:-4], x2[4:-4], up, us


@dataclass(frozen=True)
class CGOProbe:
    """The CGO solution ``(1, i) exp(rho . x)`` attached to a sector.

    Use :meth:`for_sector` to pick ``theta_d`` on the reversed bisector,
    which maximises the decay constant.
    """

    s: float
    theta_d: float
    sector: SectorGeometry

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"decay rate s must be positive, got {self.s}")

    @classmethod
    def for_sector(cls, sector: SectorGeometry, s: float) -> "CGOProbe":
        return cls(float(s), sector.reversed_bisector, sector)

    @property
    def d(self) -> np.ndarray:
        return np.array([math.cos(self.theta_d), math.sin(self.theta_d)])

    @property
    def d_perp(self) -> np.ndarray:
        return np.array([-math.sin(self.theta_d), math.cos(self.theta_d)])

    @property
    def rho(self) -> np.ndarray:
        return self.s * (self.d + 1j * self.d_perp)

    @property
    def delta(self) -> float:
        """``min(-d . x_hat)`` over the closed sector (equals ``delta_W`` on the bisector)."""
        t = self.sector
        return float(min(-math.cos(t.theta_m - self.theta_d), -math.cos(t.theta_M - self.theta_d)))

    @property
    def admissible(self) -> bool:
        """Convex sector with ``d . x_hat <= -delta < 0`` on it."""
        # for openings below pi, positive decay at both edges implies it inside
        return self.sector.is_convex and self.delta > 0

    def exponent(self, r, theta):
        """``rho . x`` in polar coordinates."""
        return self.s * r * np.exp(1j * (theta - self.theta_d))

    @property
    def asymptotic(self) -> bool:
        return self.s * self.sector.h * self.delta >= ASYMPTOTIC_THRESHOLD


def _require_probe(p: CGOProbe) -> None:
    if not p.sector.is_convex:
        raise InvalidSector(f"sector opening {p.sector.opening} is not in (0, pi)")
    if not p.admissible:
        raise InvalidSector("probe direction does not decay on the sector")


def cgo_eval(p: CGOProbe, x) -> FieldSample:
    """Value and gradient of ``u0 = (1, i) exp(rho . x)``; the divergence vanishes."""
    x = _points(x)
    e = np.exp(x @ p.rho)
    value = e[..., None] * CGO_POLARIZATION
    grad = e[..., None, None] * np.outer(CGO_POLARIZATION, p.rho)
    return FieldSample(value, grad, np.trace(grad, axis1=-2, axis2=-1))


def cgo_sector_integral_exact(p: CGOProbe) -> complex:
    """``int_W u0_1 dx = 0.5 i exp(2 i theta_d) (exp(-2 i theta_M) - exp(-2 i theta_m)) / s**2``."""
    _require_probe(p)
    t = p.sector
    return complex(
        0.5j
        * np.exp(2j * p.theta_d)
        * (np.exp(-2j * t.theta_M) - np.exp(-2j * t.theta_m))
        / p.s**2
    )


@dataclass(frozen=True)
class BoundaryIntegral:
    """``int_0^h exp(s r eps) dr`` split as ``leading - remainder``.

    ``leading = -exp(i (theta_d - theta_edge)) / s`` is the ``h -> infinity``
    limit and ``remainder`` the integral over ``(h, infinity)``.
    """

    exact: complex
    leading: complex
    remainder: complex
    remainder_bound: float


def cgo_boundary_integral_exact(p: CGOProbe, edge: Literal["plus", "minus"]) -> BoundaryIntegral:
    """Closed form of the integral of ``u0_1`` along the edge ``theta_M`` (plus) or ``theta_m`` (minus)."""
    _require_probe(p)
    if edge not in ("plus", "minus"):
        raise ValueError(f"edge must be 'plus' or 'minus', got {edge!r}")
    t = p.sector
    theta = t.theta_M if edge == "plus" else t.theta_m
    eps = np.exp(1j * (theta - p.theta_d))
    sh = p.s * t.h
    exact = np.expm1(sh * eps) / (p.s * eps)
    leading = -1.0 / (p.s * eps)
    remainder = -np.exp(sh * eps) / (p.s * eps)
    bound = 2.0 / p.delta * math.exp(-0.5 * t.h * p.delta * p.s)
    return BoundaryIntegral(complex(exact), complex(leading), complex(remainder), bound)


def laplace_moment(alpha: float, gamma: complex) -> complex:
    """``int_0^inf r**alpha exp(-gamma r) dr = Gamma(alpha + 1) / gamma**(alpha + 1)``.

    Raises
    ------
    DomainError
        If ``Re gamma <= 0`` or ``alpha < 0``.
    """
    gamma = complex(gamma)
    if not gamma.real > 0:
        raise DomainError(f"Re gamma must be positive, got {gamma}")
    if alpha < 0:
        raise DomainError(f"alpha must be nonnegative, got {alpha}")
    return complex(special.gamma(alpha + 1.0) / gamma ** (alpha + 1.0))


def cgo_moment_bound(p: CGOProbe, alpha: float) -> float:
    """Upper bound on ``int_W |u0_j| |x|**alpha dx``."""
    _require_probe(p)
    t = p.sector
    return float(t.opening * special.gamma(alpha + 2.0) / p.delta ** (alpha + 2.0) * p.s ** (-alpha - 2.0))


def cgo_tail_bound(p: CGOProbe) -> float:
    """Asymptotic bound on ``int_{W minus S_h} |u0_j| |x|**alpha dx``."""
    _require_probe(p)
    t = p.sector
    return float(2.0 * t.opening / p.delta / p.s * math.exp(-0.5 * p.delta * p.s * t.h))


@dataclass(frozen=True)
class BoundReport:
    h1_bound: float
    traction_bound: float
    asymptotic: bool


def cgo_norm_bounds(p: CGOProbe, lame: LameParameters) -> BoundReport:
    """Bounds on ``||u0||_{H1(Lambda_h)}`` and ``||T u0||_{L2(Lambda_h)}``.

    ``asymptotic`` is False when ``s h delta < 5``; the bounds are then only
    reported, not guaranteed.
    """
    _require_probe(p)
    t = p.sector
    decay = math.exp(-p.s * t.h * p.delta)
    h1 = math.sqrt(2 * t.h * (1 + 2 * p.s**2)) * math.sqrt(t.opening) * decay
    tr = 2 * lame.mu * p.s * math.sqrt(3 * t.opening) * decay
    return BoundReport(h1, tr, p.asymptotic)


# Quadrature oracles -------------------------------------------------------


def _truncation(p: CGOProbe, power: float, tol: float) -> float:
    return tail_radius(p.s * p.delta, power, tol)


def cgo_sector_integral_quadrature(p: CGOProbe, rtol: float = 1e-12) -> complex:
    """``int_W u0_1 dx`` by polar quadrature truncated where the tail is below ``rtol / 10`` of the scale."""
    t = p.sector
    scale = t.opening / (p.s * p.delta) ** 2
    r_max = _truncation(p, 1.0, 0.1 * rtol * scale)
    res = adaptive_polar(
        lambda r, th: np.exp(p.exponent(r, th)), (t.theta_m, t.theta_M), (0.0, r_max), rtol=rtol
    )
    return res.value


def cgo_boundary_integral_quadrature(p: CGOProbe, edge: str, rtol: float = 1e-13) -> complex:
    theta = p.sector.theta_M if edge == "plus" else p.sector.theta_m
    res = adaptive_gauss(lambda r: np.exp(p.exponent(r, theta)), 0.0, p.sector.h, rtol=rtol)
    return res.value


def cgo_moment_quadrature(p: CGOProbe, alpha: float, r_min: float = 0.0, rtol: float = 1e-10) -> float:
    """``int |u0_1| |x|**alpha dx`` over the sector beyond radius ``r_min``."""
    t = p.sector
    c = p.s * p.delta
    scale = t.opening * special.gamma(alpha + 2.0) / c ** (alpha + 2.0)
    r_max = max(r_min, _truncation(p, alpha + 1.0, 0.1 * rtol * scale * math.exp(-c * r_min)))
    if r_max <= r_min:
        return 0.0
    res = adaptive_polar(
        lambda r, th: np.exp(p.s * r * np.cos(th - p.theta_d)) * r**alpha,
        (t.theta_m, t.theta_M),
        (r_min, r_max),
        rtol=rtol,
    )
    return res.value.real


def cgo_tail_quadrature(p: CGOProbe, alpha: float, rtol: float = 1e-10) -> float:
    return cgo_moment_quadrature(p, alpha, r_min=p.sector.h, rtol=rtol)


def cgo_arc_norms_quadrature(p: CGOProbe, lame: LameParameters, order: int = 64) -> tuple[float, float]:
    """``(||u0||_{H1(Lambda_h)}, ||T u0||_{L2(Lambda_h)})`` by Gauss quadrature on the arc.

    The arc ``H1`` norm is ``(int |u0|**2 + |grad u0|**2 dsigma)**0.5``.
    """
    t = p.sector
    x, w = gauss_nodes(order)
    panels = 8
    edges = np.linspace(t.theta_m, t.theta_M, panels + 1)
    th = (edges[:-1, None] + np.diff(edges)[:, None] * x).ravel()
    wt = (np.diff(edges)[:, None] * w).ravel() * t.h
    pts = t.h * np.stack([np.cos(th), np.sin(th)], axis=-1)
    f = cgo_eval(p, pts)
    nu = pts / t.h
    dens_h1 = (np.abs(f.value) ** 2).sum(-1) + (np.abs(f.gradient) ** 2).sum((-1, -2))
    tr = traction(f, nu, lame)
    dens_t = (np.abs(tr) ** 2).sum(-1)
    return math.sqrt(float(wt @ dens_h1)), math.sqrt(float(wt @ dens_t))


def laplace_moment_quadrature(alpha: float, gamma: complex, rtol: float = 1e-12) -> complex:
    """Oracle for :func:`laplace_moment` with a certified truncation radius."""
    gamma = complex(gamma)
    c = gamma.real
    scale = abs(special.gamma(alpha + 1.0) / gamma ** (alpha + 1.0))
    r_max = tail_radius(c, alpha, 0.1 * rtol * scale)
    # r = r_max t**4 smooths the r**alpha endpoint singularity
    def integrand(t):
        r = r_max * t**4
        return r**alpha * np.exp(-gamma * r) * 4 * r_max * t**3

    res = adaptive_gauss(integrand, 0.0, 1.0, rtol=rtol, order=24)
    return res.value
