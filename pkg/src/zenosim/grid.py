"""Uniform periodic 1D grid and wavefunction values."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import ConfigError, GridOverflowError
from .units import KAPPA_RB87

NORM_TOL = 1e-8


@dataclass(frozen=True)
class Grid:
    """Periodic grid ``x_j = x_min + j dx`` with ``dx = (x_max - x_min) / n``.

    The default spacing is exactly 6.25 nm so that 0.1 um transport steps land
    on grid points, and ``x = 0`` is the grid point with index ``n // 2``.
    """

    x_min: float = -12.8
    x_max: float = 12.8
    n_points: int = 4096

    def __post_init__(self):
        n = self.n_points
        if not self.x_max > self.x_min:
            raise ConfigError(f"x_max ({self.x_max}) must exceed x_min ({self.x_min})")
        if int(n) != n or n < 16 or n & (n - 1):
            raise ConfigError(f"n_points must be a power of two >= 16, got {n}")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_min + self.dx * np.arange(self.n_points)
        x.flags.writeable = False
        return x

    @cached_property
    def k(self) -> np.ndarray:
        """Wavevectors in FFT order, rad/um."""
        k = 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)
        k.flags.writeable = False
        return k

    @property
    def k_nyquist(self) -> float:
        return np.pi / self.dx

    def index_of(self, x0: float) -> Optional[int]:
        """Index of the grid point at ``x0``, or None when ``x0`` is off-grid."""
        j = (x0 - self.x_min) / self.dx
        jr = round(j)
        if abs(j - jr) > 1e-9 or not 0 <= jr < self.n_points:
            return None
        return int(jr)

    def displacement(self, center: float) -> np.ndarray:
        """Minimum-image displacement ``x - center`` on the periodic domain."""
        d = self.x - center
        return d - self.length * np.round(d / self.length)

    def contains(self, x0: float) -> bool:
        return self.x_min < x0 < self.x_max

    def check_nyquist(self, k_scale: float, what: str = "run"):
        if k_scale >= self.k_nyquist:
            raise GridOverflowError(
                f"{what} needs wavevectors up to {k_scale:.1f} rad/um but the grid "
                f"Nyquist limit is {self.k_nyquist:.1f} rad/um; refine dx")

    def absorbing_mask(self, fraction: float = 0.1) -> np.ndarray:
        """Smooth cosine ramp from 1 to 0 over the outer ``fraction`` of each side."""
        width = fraction * self.length
        dist = np.minimum(self.x - self.x_min, self.x_max - self.dx - self.x)
        ramp = np.clip(dist / width, 0.0, 1.0)
        return np.sin(0.5 * np.pi * ramp) ** 2


@dataclass
class Wavefunction:
    """Complex amplitudes on a grid plus the survival weight collected so far."""

    grid: Grid
    amplitudes: np.ndarray
    survival_weight: float = 1.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.grid.n_points,):
            raise ValueError(
                f"amplitudes have shape {self.amplitudes.shape}, "
                f"grid needs ({self.grid.n_points},)")
        if not 0.0 <= self.survival_weight <= 1.0 + 1e-12:
            raise ValueError(f"survival_weight {self.survival_weight} outside [0, 1]")

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        """``sum |psi|^2 dx``."""
        return float(np.sum(self.density) * self.grid.dx)

    def spectral_norm(self) -> float:
        """Norm evaluated in wavevector space (equals :meth:`norm` by Parseval)."""
        phik = np.fft.fft(self.amplitudes)
        return float(np.sum(np.abs(phik) ** 2) * self.grid.dx / self.grid.n_points)

    def replace(self, amplitudes=None, survival_weight=None) -> "Wavefunction":
        return Wavefunction(
            self.grid,
            self.amplitudes.copy() if amplitudes is None else amplitudes,
            self.survival_weight if survival_weight is None else survival_weight,
        )

    def normalized(self) -> "Wavefunction":
        n = self.norm()
        if n <= 0:
            raise ValueError("cannot normalize a zero wavefunction")
        return self.replace(self.amplitudes / np.sqrt(n))

    def fidelity(self, other: "Wavefunction") -> float:
        """``|<self|other>|^2`` for normalized states."""
        ov = np.vdot(self.amplitudes, other.amplitudes) * self.grid.dx
        return float(abs(ov) ** 2)

    def to_csv(self, path=None) -> str:
        """Write ``x, re, im, prob`` rows; returns the CSV text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "re", "im", "prob"])
        for xi, a in zip(self.grid.x, self.amplitudes):
            w.writerow([repr(float(xi)), repr(float(a.real)), repr(float(a.imag)),
                        repr(float(abs(a) ** 2))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def gaussian_state(g: Grid, center: float = 0.0, sigma: float = 0.0207,
                   k0: float = 0.0) -> Wavefunction:
    """Normalized Gaussian packet with position spread ``sigma`` and mean wavevector ``k0``.

    ``|psi|^2`` is a normal density of standard deviation ``sigma``.
    """
    if not sigma > 3 * g.dx:
        raise ValueError(f"sigma={sigma} is under-resolved (needs > 3 dx = {3 * g.dx})")
    if not g.contains(center):
        raise ValueError(f"center {center} lies outside the grid")
    d = g.x - center
    amp = np.exp(-d**2 / (4 * sigma**2) + 1j * k0 * g.x)
    psi = Wavefunction(g, amp).normalized()
    edge = max(psi.density[0], psi.density[-1])
    if edge > 1e-12:
        raise ValueError("Gaussian support touches the grid boundary")
    return psi


def observables(psi: Wavefunction, kappa: float = KAPPA_RB87,
                potential: Optional[np.ndarray] = None) -> dict:
    """Position, wavevector and energy expectation values of a normalized state.

    The energy is kinetic only unless ``potential`` (rad/us on the grid) is given.
    """
    g = psi.grid
    norm = psi.norm()
    if abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"observables need a normalized state (norm = {norm})")
    rho = psi.density * g.dx
    mean_x = float(np.sum(g.x * rho))
    var_x = float(np.sum((g.x - mean_x) ** 2 * rho))
    phik = np.fft.fft(psi.amplitudes)
    wk = np.abs(phik) ** 2
    wk /= wk.sum()
    mean_k = float(np.sum(g.k * wk))
    energy = 0.5 * kappa * float(np.sum(g.k**2 * wk))
    if potential is not None:
        energy += float(np.sum(np.asarray(potential) * rho))
    return {"mean_x": mean_x, "std_x": float(np.sqrt(max(var_x, 0.0))),
            "mean_k": mean_k, "energy": energy}


def edge_probability(density: np.ndarray, dx: float, band: int = 10) -> float:
    """Probability within ``band`` points of either end of the grid."""
    return float((np.sum(density[..., :band]) + np.sum(density[..., -band:])) * dx)
