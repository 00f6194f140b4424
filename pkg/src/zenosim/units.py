"""Simulation units and physical parameters.

Lengths are in micrometres, times in microseconds and energies are divided by
the reduced Planck constant, so they carry rad/us.  With these choices the
only mass-dependent constant left in the Schroedinger equation is
``kappa = hbar / m`` in um^2/us.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from scipy import constants

from .errors import ConfigError

RB87_MASS_AMU = 86.909180527


def kappa_from_mass(mass_amu: float) -> float:
    """Return ``hbar / m`` in um^2/us for a mass given in atomic mass units."""
    mass = mass_amu * constants.atomic_mass
    return constants.hbar / mass * 1e6


def depth_from_temperature(depth_kelvin: float) -> float:
    """Convert a trap depth quoted as a temperature (``U0 / k_B``) to rad/us."""
    return constants.k * depth_kelvin / constants.hbar * 1e-6


def thermal_velocity(temperature_kelvin: float, mass_amu: float = RB87_MASS_AMU) -> float:
    """One-axis thermal velocity spread ``sqrt(k_B T / m)`` in um/us."""
    mass = mass_amu * constants.atomic_mass
    return math.sqrt(constants.k * temperature_kelvin / mass)


KAPPA_RB87 = kappa_from_mass(RB87_MASS_AMU)
DEFAULT_WAIST = 1.1
DEFAULT_DEPTH = depth_from_temperature(2.3e-3)
DEFAULT_V_TH = 0.049


@dataclass(frozen=True)
class PhysicalParams:
    """Atom and tweezer constants in simulation units.

    Parameters
    ----------
    kappa : float
        ``hbar / m`` in um^2/us.
    trap_depth : float
        Full-intensity trap depth ``U0 / hbar`` in rad/us.
    waist : float
        Gaussian beam waist in um.
    temperature : float
        Thermal velocity spread of the released atom in um/us.  Zero selects
        a single pure trajectory.
    recapture_radius : float, optional
        Radius of the final imaging window in um.  Defaults to the waist.
    """

    kappa: float = KAPPA_RB87
    trap_depth: float = DEFAULT_DEPTH
    waist: float = DEFAULT_WAIST
    temperature: float = DEFAULT_V_TH
    recapture_radius: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.recapture_radius is None:
            object.__setattr__(self, "recapture_radius", self.waist)
        if not self.kappa > 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        if not self.waist > 0:
            raise ConfigError(f"waist must be positive, got {self.waist}")
        if not self.trap_depth >= 0:
            raise ConfigError(f"trap_depth must be non-negative, got {self.trap_depth}")
        if not self.recapture_radius > 0:
            raise ConfigError(
                f"recapture_radius must be positive, got {self.recapture_radius}")
        if not self.temperature >= 0:
            raise ConfigError(f"temperature must be non-negative, got {self.temperature}")

    def with_depth(self, depth: float) -> "PhysicalParams":
        return PhysicalParams(self.kappa, depth, self.waist, self.temperature,
                              self.recapture_radius)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def omega(self) -> float:
        return trap_angular_frequency(self)


def harmonic_frequency(depth: float, waist: float, kappa: float) -> float:
    """Angular frequency of the harmonic expansion of a Gaussian well."""
    if not waist > 0:
        raise ValueError(f"waist must be positive, got {waist}")
    if depth < 0:
        raise ValueError(f"depth must be non-negative, got {depth}")
    return math.sqrt(4.0 * depth * kappa / waist**2)


def trap_angular_frequency(p: PhysicalParams) -> float:
    """Trap frequency ``sqrt(4 U0 kappa / w^2)`` in rad/us."""
    return harmonic_frequency(p.trap_depth, p.waist, p.kappa)


def ground_state_width(p: PhysicalParams) -> float:
    """Position spread of the harmonic ground state, ``sqrt(kappa / 2 Omega)``."""
    if p.trap_depth <= 0:
        raise ValueError("ground state width is undefined for a zero-depth trap")
    return math.sqrt(p.kappa / (2.0 * trap_angular_frequency(p)))


def depth_from_intensity(p: PhysicalParams, intensity: float) -> float:
    """Trap depth for a pulse at normalized intensity ``intensity`` in [0, 1]."""
    if not 0.0 <= intensity <= 1.0:
        raise ValueError(f"intensity must lie in [0, 1], got {intensity}")
    return intensity * p.trap_depth
