"""Spatial circular restricted three-body problem in the synodic frame.

Nondimensional units throughout: primary separation 1, mean motion 1, total
mass 1.  The large primary sits at x = -mu, the small one at x = 1 - mu.
All functions accept plain floats or :class:`~halostab.jets.Jet` values and
return the same flavour, so the identical formulas drive both numerical
states and jet-transport states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EnergySurfaceError, SingularPrimaryError
from .jets import Jet

EM_MASS_RATIO = 0.01215058560962404  # Earth-Moon, JPL value

DIST_FLOOR = 1e-6  # nondimensional; NRHO perilune stays ~4.5e-3 above the Moon


@dataclass(frozen=True)
class MassRatio:
    value: float

    def __post_init__(self):
        if not 0.0 < self.value < 0.5:
            raise ValueError(f"mass ratio must lie in (0, 1/2), got {self.value}")


@dataclass
class State6:
    x: object
    y: object
    z: object
    vx: object
    vy: object
    vz: object

    def as_tuple(self):
        return (self.x, self.y, self.z, self.vx, self.vy, self.vz)

    @classmethod
    def from_sequence(cls, seq):
        return cls(*seq)


def _mu(mu) -> float:
    return mu.value if isinstance(mu, MassRatio) else float(mu)


def _const(v) -> float:
    return float(v.constant_term) if isinstance(v, Jet) else float(v)


def _sqrt(v):
    return v.sqrt() if isinstance(v, Jet) else math.sqrt(v)


def _inv_sqrt_cubed(v):
    """v^(-3/2) for a scalar or jet with positive (constant) part."""
    if isinstance(v, Jet):
        return v.power(-1.5)
    return v ** -1.5


def _inv_sqrt(v):
    if isinstance(v, Jet):
        return v.power(-0.5)
    return v ** -0.5


def _check_distances(r1sq, r2sq, floor: float):
    if _const(r1sq) < floor * floor or _const(r2sq) < floor * floor:
        raise SingularPrimaryError(
            f"distance to a primary fell below the floor {floor}"
        )


def vector_field(state: State6, mu, dist_floor: float = DIST_FLOOR) -> State6:
    """Synodic-frame equations of motion.

    Returns (vx, vy, vz, 2 vy + dU/dx, -2 vx + dU/dy, dU/dz) with the
    effective potential U = (x^2 + y^2)/2 + (1-mu)/r1 + mu/r2.
    """
    m = _mu(mu)
    x, y, z, vx, vy, vz = state.as_tuple()
    d1 = x + m
    d2 = x - 1.0 + m
    r1sq = d1 * d1 + y * y + z * z
    r2sq = d2 * d2 + y * y + z * z
    _check_distances(r1sq, r2sq, dist_floor)
    u1 = _inv_sqrt_cubed(r1sq)
    u2 = _inv_sqrt_cubed(r2sq)
    ux = x - (1.0 - m) * d1 * u1 - m * d2 * u2
    uy = y - ((1.0 - m) * u1 + m * u2) * y
    uz = -((1.0 - m) * u1 + m * u2) * z
    return State6(vx, vy, vz, 2.0 * vy + ux, -2.0 * vx + uy, uz)


def effective_potential(x, y, z, mu, dist_floor: float = DIST_FLOOR):
    m = _mu(mu)
    d1 = x + m
    d2 = x - 1.0 + m
    r1sq = d1 * d1 + y * y + z * z
    r2sq = d2 * d2 + y * y + z * z
    _check_distances(r1sq, r2sq, dist_floor)
    return 0.5 * (x * x + y * y) + (1.0 - m) * _inv_sqrt(r1sq) + m * _inv_sqrt(r2sq)


def jacobi_constant(state: State6, mu, dist_floor: float = DIST_FLOOR):
    """Energy integral C = 2 U - v^2."""
    x, y, z, vx, vy, vz = state.as_tuple()
    u = effective_potential(x, y, z, mu, dist_floor)
    return 2.0 * u - (vx * vx + vy * vy + vz * vz)


def vy_from_jacobi(x, z, vx, vz, c, mu, sign: int = -1,
                   dist_floor: float = DIST_FLOOR):
    """Recover vy on the y = 0 slice of the energy surface C.

    sign selects the branch; the section convention is sign = -1 (vy < 0).
    Raises EnergySurfaceError when the radicand is not positive.
    """
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    m = _mu(mu)
    zero = x * 0.0
    u = effective_potential(x, zero, z, m, dist_floor)
    rad = 2.0 * u - vx * vx - vz * vz - c
    if _const(rad) <= 0.0:
        raise EnergySurfaceError(
            f"energy-surface radicand is not positive ({_const(rad)})"
        )
    return sign * _sqrt(rad)
