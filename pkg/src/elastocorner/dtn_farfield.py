"""Circular Dirichlet-to-Neumann map, Hankel-series radiating fields and far fields.

Outside the disk ``B_R`` a radiating solution of ``L u + omega**2 u = 0`` is
written through two potentials,

    phi = sum_n a_n H_n(k_p r) exp(i n theta),
    psi = sum_n b_n H_n(k_s r) exp(i n theta),
    u = grad phi + curl psi,  curl psi = (d2 psi, -d1 psi),

with ``H_n`` the Hankel function of the first kind. Each Fourier mode of the
trace in the polar frame ``(u_r, u_theta)`` is a 2x2 matrix ``D_n`` times
``(a_n, b_n)``, and likewise for the traction with a matrix ``T_n``. The DtN
map is ``T_n D_n**-1`` mode by mode.

Far-field convention: ``u ~ exp(i k_p r) / sqrt(r) u_p(x_hat) x_hat
+ exp(i k_s r) / sqrt(r) U_s(x_hat) x_hat_perp``, the normalisation that
matches the decay of two-dimensional Hankel functions. It is written into
every far-field file header.

Performance
-----------
Mode matrices are built once per ``(R, omega)``. Field evaluation is
vectorised over points and modes with cost ``O(points * modes)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .elastic_core import FieldSample, traction
from .materials import LameParameters, wavenumbers

__all__ = [
    "ModeSingular",
    "BesselFailure",
    "GridMismatch",
    "FARFIELD_CONVENTION",
    "DtnOperator",
    "RadiatingSolution",
    "FarFieldPattern",
    "default_truncation",
    "build_dtn",
    "mode_matrices",
    "radiating_eval",
    "far_field_from_solution",
    "farfield_project",
    "farfield_distance",
    "rellich_flux",
    "write_farfield",
    "read_farfield",
    "trace_modes_from_samples",
]

FARFIELD_CONVENTION = "2d: exp(ikr)/sqrt(r)"

COND_LIMIT = 1e13


class ModeSingular(ArithmeticError):
    pass


class BesselFailure(ArithmeticError):
    pass


class GridMismatch(ValueError):
    pass


def default_truncation(k_s: float, R: float) -> int:
    """Default mode cutoff ``ceil(k_s R) + max(15, ceil(0.4 (k_s R)**(1/3) * 6))``."""
    x = k_s * R
    return int(math.ceil(x) + max(15, math.ceil(0.4 * x ** (1.0 / 3.0) * 6)))


def _hankels(orders: np.ndarray, z):
    z = np.asarray(z, dtype=float)
    n = orders.reshape(orders.shape + (1,) * z.ndim)
    h0 = special.hankel1(n, z)
    h1 = special.h1vp(n, z, 1)
    h2 = special.h1vp(n, z, 2)
    if not (np.all(np.isfinite(h0)) and np.all(np.isfinite(h1)) and np.all(np.isfinite(h2))):
        raise BesselFailure(f"Hankel evaluation overflowed for orders up to {int(np.max(np.abs(orders)))}")
    return h0, h1, h2


def mode_matrices(lame: LameParameters, omega: float, R: float, orders: np.ndarray):
    """Per-mode ``D_n`` (potentials to trace) and ``T_n`` (potentials to traction) at radius ``R``.

    Both have shape ``(len(orders), 2, 2)`` in the ``(radial, tangential)`` frame.
    """
    k = wavenumbers(lame, omega)
    kp, ks = k.k_p, k.k_s
    n = np.asarray(orders, dtype=float)
    hp, dhp, ddhp = _hankels(n, kp * R)
    hs, dhs, ddhs = _hankels(n, ks * R)
    i_n = 1j * n
    D = np.empty((len(n), 2, 2), dtype=complex)
    D[:, 0, 0] = kp * dhp
    D[:, 0, 1] = i_n / R * hs
    D[:, 1, 0] = i_n / R * hp
    D[:, 1, 1] = -ks * dhs
    lam, mu = lame.lam, lame.mu
    T = np.empty_like(D)
    T[:, 0, 0] = -lam * kp**2 * hp + 2 * mu * kp**2 * ddhp
    T[:, 0, 1] = 2 * mu * i_n * (ks * dhs / R - hs / R**2)
    T[:, 1, 0] = mu * i_n * (2 * kp * dhp / R - 2 * hp / R**2)
    T[:, 1, 1] = mu * (-(ks**2) * ddhs + ks * dhs / R - n**2 * hs / R**2)
    return D, T


@dataclass(frozen=True)
class DtnOperator:
    """Per-mode trace-to-traction maps on the circle of radius ``R``.

    Attributes
    ----------
    orders : ndarray
        ``-N..N``.
    maps : ndarray, shape (2N+1, 2, 2)
        ``T_n D_n**-1``.
    dirichlet, neumann : ndarray
        ``D_n`` and ``T_n``.
    condition : ndarray
        Condition number of each column-scaled ``D_n``.
    """

    R: float
    N: int
    lame: LameParameters
    omega: float
    orders: np.ndarray = field(repr=False)
    maps: np.ndarray = field(repr=False)
    dirichlet: np.ndarray = field(repr=False)
    neumann: np.ndarray = field(repr=False)
    condition: np.ndarray = field(repr=False)

    def apply(self, modes: np.ndarray) -> np.ndarray:
        """Traction modes from trace modes, both shaped ``(2N+1, 2)``."""
        return np.einsum("nij,nj->ni", self.maps, modes)

    def potentials(self, modes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        coef = np.linalg.solve(self.dirichlet, modes[..., None])[..., 0]
        return coef[:, 0], coef[:, 1]

    def mode_index(self, n: int) -> int:
        return int(n + self.N)


def build_dtn(lame: LameParameters, omega: float, R: float, N: int | None = None) -> DtnOperator:
    """Build the DtN operator with modes ``-N..N``.

    Raises
    ------
    ModeSingular
        If a scaled mode matrix has condition number above ``1e13``.
    BesselFailure
        If a Hankel value is not finite.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    if N is None:
        N = default_truncation(wavenumbers(lame, omega).k_s, R)
    if N < 0:
        raise ValueError("N must be nonnegative")
    orders = np.arange(-N, N + 1)
    D, T = mode_matrices(lame, omega, R, orders)
    scaled = D / np.linalg.norm(D, axis=1, keepdims=True)
    cond = np.linalg.cond(scaled)
    bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
    if np.any(bad):
        raise ModeSingular(f"mode matrix singular for n = {orders[bad].tolist()}")
    maps = T @ np.linalg.inv(D)
    return DtnOperator(float(R), int(N), lame, float(omega), orders, maps, D, T, cond)


@dataclass(frozen=True)
class RadiatingSolution:
    """Outgoing field given by potential coefficients on modes ``-N..N``."""

    lame: LameParameters
    omega: float
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=complex)
        b = np.asarray(self.b, dtype=complex)
        if a.shape != b.shape or a.ndim != 1 or len(a) % 2 != 1:
            raise ValueError("coefficient arrays must share an odd length 2N+1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def N(self) -> int:
        return (len(self.a) - 1) // 2

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    @classmethod
    def zeros(cls, lame, omega, N: int) -> "RadiatingSolution":
        return cls(lame, omega, np.zeros(2 * N + 1), np.zeros(2 * N + 1))

    @classmethod
    def single_mode(cls, lame, omega, N: int, n: int, a: complex = 0.0, b: complex = 0.0):
        ca = np.zeros(2 * N + 1, dtype=complex)
        cb = np.zeros(2 * N + 1, dtype=complex)
        ca[n + N] = a
        cb[n + N] = b
        return cls(lame, omega, ca, cb)

    def __add__(self, other: "RadiatingSolution") -> "RadiatingSolution":
        return RadiatingSolution(self.lame, self.omega, self.a + other.a, self.b + other.b)

    def trace_modes(self, R: float) -> np.ndarray:
        """Trace modes ``(u_r, u_theta)_n`` on the circle of radius ``R``."""
        D, _ = mode_matrices(self.lame, self.omega, R, self.orders)
        return np.einsum("nij,nj->ni", D, np.stack([self.a, self.b], axis=-1))

    def traction_modes(self, R: float) -> np.ndarray:
        _, T = mode_matrices(self.lame, self.omega, R, self.orders)
        return np.einsum("nij,nj->ni", T, np.stack([self.a, self.b], axis=-1))


def radiating_eval(sol: RadiatingSolution, x, part: str = "total") -> FieldSample:
    """Value, gradient and divergence of a radiating solution at points outside the source disk.

    ``part`` selects ``"total"``, the compressional part ``"p"`` (``grad phi``)
    or the shear part ``"s"`` (``curl psi``).
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, 2)
    r = np.hypot(pts[:, 0], pts[:, 1])
    th = np.arctan2(pts[:, 1], pts[:, 0])
    k = wavenumbers(sol.lame, sol.omega)
    n = sol.orders.astype(float)
    a = sol.a if part in ("total", "p") else np.zeros_like(sol.a)
    b = sol.b if part in ("total", "s") else np.zeros_like(sol.b)
    hp, dhp, ddhp = _hankels(n, k.k_p * r)
    hs, dhs, ddhs = _hankels(n, k.k_s * r)
    kp, ks = k.k_p, k.k_s
    i_n = (1j * n)[:, None]
    A = a[:, None]
    B = b[:, None]
    ur_n = A * kp * dhp + i_n / r * B * hs
    ut_n = i_n / r * A * hp - B * ks * dhs
    dr_ur_n = A * kp**2 * ddhp + i_n * B * (ks * dhs / r - hs / r**2)
    dr_ut_n = i_n * A * (kp * dhp / r - hp / r**2) - B * ks**2 * ddhs
    phase = np.exp(1j * np.outer(n, th))
    ur = (ur_n * phase).sum(0)
    ut = (ut_n * phase).sum(0)
    dr_ur = (dr_ur_n * phase).sum(0)
    dr_ut = (dr_ut_n * phase).sum(0)
    dth_ur = (i_n * ur_n * phase).sum(0)
    dth_ut = (i_n * ut_n * phase).sum(0)
    c, s = np.cos(th), np.sin(th)
    er = np.stack([c, s], axis=-1)
    et = np.stack([-s, c], axis=-1)
    value = ur[:, None] * er + ut[:, None] * et
    d_r = dr_ur[:, None] * er + dr_ut[:, None] * et
    d_th = (dth_ur - ut)[:, None] * er + (dth_ut + ur)[:, None] * et
    d1 = c[:, None] * d_r - (s / r)[:, None] * d_th
    d2 = s[:, None] * d_r + (c / r)[:, None] * d_th
    grad = np.stack([d1, d2], axis=-1)
    div = np.trace(grad, axis1=-2, axis2=-1)
    return FieldSample(
        value.reshape(shape + (2,)), grad.reshape(shape + (2, 2)), div.reshape(shape)
    )


@dataclass(frozen=True)
class FarFieldPattern:
    """Compressional and tangential shear far-field amplitudes on a uniform angle grid."""

    angles: np.ndarray
    up: np.ndarray
    us: np.ndarray
    convention: str = FARFIELD_CONVENTION
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def M(self) -> int:
        return len(self.angles)

    def vector(self) -> np.ndarray:
        """``u_t = u_p x_hat + U_s x_hat_perp`` with shape ``(M, 2)``."""
        c, s = np.cos(self.angles), np.sin(self.angles)
        return self.up[:, None] * np.stack([c, s], -1) + self.us[:, None] * np.stack([-s, c], -1)

    def l2_norm(self) -> float:
        w = 2 * math.pi / self.M
        return math.sqrt(w * float(np.sum(np.abs(self.up) ** 2 + np.abs(self.us) ** 2)))


def uniform_angles(M: int) -> np.ndarray:
    return 2 * math.pi * np.arange(M) / M


def far_field_from_solution(sol: RadiatingSolution, M: int = 360) -> FarFieldPattern:
    """Closed-form pattern from the large-argument Hankel asymptotics."""
    k = wavenumbers(sol.lame, sol.omega)
    th = uniform_angles(M)
    n = sol.orders
    phase = np.exp(-1j * (n * math.pi / 2 + math.pi / 4))
    basis = np.exp(1j * np.outer(th, n))
    cp = 1j * k.k_p * math.sqrt(2 / (math.pi * k.k_p))
    cs = -1j * k.k_s * math.sqrt(2 / (math.pi * k.k_s))
    up = basis @ (cp * phase * sol.a)
    us = basis @ (cs * phase * sol.b)
    meta = {"omega": sol.omega, "lambda": sol.lame.lam, "mu": sol.lame.mu}
    return FarFieldPattern(th, up, us, FARFIELD_CONVENTION, meta)


def farfield_project(u_t: np.ndarray, angles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(u_t . x_hat, u_t . x_hat_perp)`` on the angle grid."""
    u_t = np.asarray(u_t)
    c, s = np.cos(angles), np.sin(angles)
    return u_t[:, 0] * c + u_t[:, 1] * s, -u_t[:, 0] * s + u_t[:, 1] * c


def farfield_distance(A: FarFieldPattern, B: FarFieldPattern) -> float:
    """Discrete ``L2(S1)`` distance of the stacked ``(u_p, U_s)`` samples.

    Raises
    ------
    GridMismatch
        If angle grids or conventions differ.
    """
    if A.convention != B.convention:
        raise GridMismatch(f"conventions differ: {A.convention!r} vs {B.convention!r}")
    if A.M != B.M or not np.allclose(A.angles, B.angles, rtol=0, atol=1e-12):
        raise GridMismatch("angle grids differ")
    w = 2 * math.pi / A.M
    diff = np.abs(A.up - B.up) ** 2 + np.abs(A.us - B.us) ** 2
    return math.sqrt(w * float(diff.sum()))


def trace_modes_from_samples(values: np.ndarray, angles: np.ndarray, N: int) -> np.ndarray:
    """Polar-frame Fourier modes ``-N..N`` of a trace sampled on a uniform angle grid."""
    c, s = np.cos(angles), np.sin(angles)
    ur = values[:, 0] * c + values[:, 1] * s
    ut = -values[:, 0] * s + values[:, 1] * c
    n = np.arange(-N, N + 1)
    basis = np.exp(-1j * np.outer(n, angles)) / len(angles)
    return np.stack([basis @ ur, basis @ ut], axis=-1)


def rellich_flux(sol: RadiatingSolution, R: float, M: int | None = None) -> float:
    """``Im int_{|x|=R} conj(T u) . u dsigma`` by the trapezoid rule."""
    if M is None:
        M = max(64, 4 * sol.N + 16)
    th = uniform_angles(M)
    nu = np.stack([np.cos(th), np.sin(th)], axis=-1)
    f = radiating_eval(sol, R * nu)
    t = traction(f, nu, sol.lame)
    integrand = np.sum(np.conj(t) * f.value, axis=-1)
    return float(np.imag(integrand.sum() * 2 * math.pi * R / M))


def write_farfield(path, pattern: FarFieldPattern, R: float | None = None) -> None:
    """Write the far-field table; every number carries 17 significant digits."""
    meta = dict(pattern.meta)
    if R is not None:
        meta["R"] = R
    lines = [f"# convention = {pattern.convention}"]
    for key in ("omega", "lambda", "mu", "R"):
        val = meta.get(key, float("nan"))
        lines.append(f"# {key} = {float(val):.16e}")
    lines.append(f"# M = {pattern.M}")
    lines.append("theta, Re u_p, Im u_p, Re U_s, Im U_s")
    for t, p, s in zip(pattern.angles, pattern.up, pattern.us):
        lines.append(
            f"{t:.16e}, {p.real:.16e}, {p.imag:.16e}, {s.real:.16e}, {s.imag:.16e}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_farfield(path) -> FarFieldPattern:
    meta: dict = {}
    convention = FARFIELD_CONVENTION
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            key, val = key.strip(), val.strip()
            if key == "convention":
                convention = val
            elif key == "M":
                meta["M"] = int(val)
            else:
                meta[key] = float(val)
        elif line.strip() and not line.startswith("theta"):
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows, dtype=float).reshape(-1, 5)
    if "M" in meta and meta.pop("M") != len(data):
        raise GridMismatch(f"{path}: header M does not match the row count")
    up = data[:, 1] + 1j * data[:, 2]
    us = data[:, 3] + 1j * data[:, 4]
    return FarFieldPattern(data[:, 0], up, us, convention, meta)
