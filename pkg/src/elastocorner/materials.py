"""Lame parameters, wavenumbers and piecewise-constant media.

A :class:`MediumConfig` attaches a density contrast ``q`` to every region
of a partition and an impedance ``eta`` to every interface. For nests
``eta_values[k]`` lives on the boundary of layer ``k``; a cell partition
carries a single ``eta`` shared by every cell boundary. The exterior has
``q = 1`` and no impedance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import InterfaceId, Point2, locate

__all__ = [
    "MaterialError",
    "ConvexityViolation",
    "OnInterface",
    "UnknownInterface",
    "PositiveImpedanceWarning",
    "LameParameters",
    "Wavenumbers",
    "MediumConfig",
    "wavenumbers",
    "sample_q",
    "sample_eta",
    "elastic_tensor",
]


class MaterialError(ValueError):
    pass


class ConvexityViolation(MaterialError):
    pass


class OnInterface(MaterialError):
    pass


class UnknownInterface(MaterialError):
    pass


class PositiveImpedanceWarning(UserWarning):
    """Existence of the forward solution is only known for ``eta <= 0``."""


@dataclass(frozen=True)
class LameParameters:
    """Lame constants; strong convexity needs ``mu > 0`` and ``lambda + mu > 0``."""

    lam: float
    mu: float

    def __post_init__(self):
        if not (self.mu > 0 and self.lam + self.mu > 0):
            raise ConvexityViolation(
                f"strong convexity needs mu > 0 and lambda + mu > 0, got "
                f"lambda={self.lam}, mu={self.mu}"
            )


@dataclass(frozen=True)
class Wavenumbers:
    k_p: float
    k_s: float
    omega: float


def wavenumbers(lame: LameParameters, omega: float) -> Wavenumbers:
    """Compressional and shear wavenumbers ``omega / sqrt(2 mu + lambda)`` and ``omega / sqrt(mu)``."""
    if not (omega > 0):
        raise MaterialError(f"omega must be positive, got {omega}")
    if not (lame.mu > 0 and lame.lam + lame.mu > 0):
        raise ConvexityViolation("strong convexity violated")
    return Wavenumbers(omega / math.sqrt(2 * lame.mu + lame.lam), omega / math.sqrt(lame.mu), omega)


def elastic_tensor(lame: LameParameters) -> np.ndarray:
    """``C_ijkl = lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk)`` as a ``(2, 2, 2, 2)`` array."""
    d = np.eye(2)
    return lame.lam * np.einsum("ij,kl->ijkl", d, d) + lame.mu * (
        np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)
    )


@dataclass(frozen=True)
class MediumConfig:
    """Region densities and interface impedances on a validated partition.

    Parameters
    ----------
    partition : NestPartition or CellPartition
    q_values : sequence of float
        One nonzero value per layer or cell.
    eta_values : sequence of float
        One value per nest layer boundary, or a single value for cells.
    """

    partition: object
    q_values: tuple[float, ...]
    eta_values: tuple[float, ...]

    def __post_init__(self):
        q = tuple(float(v) for v in self.q_values)
        eta = tuple(float(v) for v in np.atleast_1d(self.eta_values))
        n = len(self.partition.polygons)
        if len(q) != n:
            raise MaterialError(f"expected {n} q values, got {len(q)}")
        if any(v == 0 or not math.isfinite(v) for v in q):
            raise MaterialError("q values must be finite and nonzero")
        expected = n if self.partition.kind == "nest" else 1
        if len(eta) != expected:
            raise MaterialError(f"expected {expected} eta values, got {len(eta)}")
        if any(not math.isfinite(v) for v in eta):
            raise MaterialError("eta values must be finite")
        object.__setattr__(self, "q_values", q)
        object.__setattr__(self, "eta_values", eta)
        if any(v > 0 for v in eta):
            warnings.warn(
                "positive impedance: forward well-posedness is not guaranteed",
                PositiveImpedanceWarning,
                stacklevel=3,
            )

    @classmethod
    def build(cls, partition, q_values: Sequence[float], eta_values) -> "MediumConfig":
        return cls(partition, tuple(q_values), tuple(np.atleast_1d(eta_values)))

    def q_of_region(self, index: int) -> float:
        """Density of region ``index`` (``-1`` is the exterior)."""
        return 1.0 if index < 0 else self.q_values[index]

    @property
    def q_contrast_sup(self) -> float:
        return max(abs(1.0 - v) for v in self.q_values)

    @property
    def eta_sup(self) -> float:
        return max(abs(v) for v in self.eta_values)


def sample_q(config: MediumConfig, x) -> float:
    """Density at ``x``; 1 outside the scatterer.

    Raises
    ------
    OnInterface
        When ``x`` lies within the snap tolerance of an interface.
    """
    label = locate(config.partition, x if not isinstance(x, Point2) else x.as_array())
    if label.kind == "interface":
        raise OnInterface(f"point lies on {label.name}")
    if label.kind == "exterior":
        return 1.0
    return config.q_values[label.index]


def sample_eta(config: MediumConfig, interface_id) -> float:
    """Impedance of an interface.

    ``interface_id`` is an :class:`InterfaceId` or, for nests, the layer
    index whose boundary is meant.
    """
    part = config.partition
    if isinstance(interface_id, InterfaceId):
        if not part.has_interface(interface_id):
            raise UnknownInterface(f"no interface {interface_id}")
        layer = interface_id.polygon
    else:
        layer = int(interface_id)
        if not 0 <= layer < len(part.polygons):
            raise UnknownInterface(f"no layer boundary {interface_id}")
    if part.kind == "cell":
        return config.eta_values[0]
    return config.eta_values[layer]
