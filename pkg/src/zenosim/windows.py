"""Spatial measurement windows (the projector applied by a trap pulse)."""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import ConfigError
from .grid import Grid, Wavefunction
from .units import KAPPA_RB87

WINDOW_PROFILES = ("hard", "gaussian", "bound_subspace")


@dataclass(frozen=True)
class MeasurementWindow:
    """Window defining the collapse operator of a measurement pulse.

    ``hard`` keeps amplitudes with ``|x - center| <= radius``; ``gaussian``
    multiplies them by ``exp(-(x - center)^2 / (2 radius^2))``;
    ``bound_subspace`` projects onto the lowest ``n_modes`` eigenstates of the
    trap (``depth``, ``waist``) centred on the window (all bound modes when
    ``n_modes`` is None).
    """

    center: float = 0.0
    radius: float = 1.1
    profile: str = "hard"
    n_modes: Optional[int] = None
    depth: Optional[float] = None
    waist: Optional[float] = None
    kappa: float = KAPPA_RB87
    trap_profile: str = "gaussian"

    def __post_init__(self):
        if self.profile not in WINDOW_PROFILES:
            raise ConfigError(f"unknown window profile {self.profile!r}")
        if not self.radius >= 0:
            raise ConfigError(f"window radius must be non-negative, got {self.radius}")
        if self.profile == "bound_subspace":
            if self.depth is None or self.waist is None:
                raise ConfigError("bound_subspace windows need the trap depth and waist")
            if self.n_modes is not None and self.n_modes < 1:
                raise ConfigError("bound_subspace windows need n_modes >= 1")

    def at(self, center: float, depth: Optional[float] = None) -> "MeasurementWindow":
        """Same window moved to ``center`` (and, for bound subspaces, a new depth)."""
        if depth is None or self.profile != "bound_subspace":
            return replace(self, center=center)
        return replace(self, center=center, depth=depth)

    def operator(self, grid: Grid) -> "WindowOperator":
        return _operator(self, grid)


class WindowOperator:
    """A window bound to a grid; acts on single states or batches (last axis)."""

    def __init__(self, window: MeasurementWindow, grid: Grid):
        self.window = window
        self.grid = grid
        self.modes = None
        self.weights = None
        self.support = None
        if window.profile == "bound_subspace":
            from .propagator import trap_eigenpairs
            e, vecs = trap_eigenpairs(grid, window.kappa, window.trap_profile, window.depth,
                                      window.waist, window.center, window.n_modes)
            bound = e < 0 if window.trap_profile == "gaussian" else np.ones_like(e, bool)
            if window.n_modes is None:
                vecs = vecs[bound]
            elif not bound[: window.n_modes].all() or len(e) < window.n_modes:
                raise ConfigError(
                    f"only {int(bound.sum())} bound modes at depth {window.depth}")
            if len(vecs) == 0:
                raise ConfigError("the trap has no bound modes")
            self.modes = np.ascontiguousarray(vecs)
        else:
            d = grid.displacement(window.center)
            if window.profile == "hard":
                self.weights = (np.abs(d) <= window.radius + 1e-9 * grid.dx).astype(float)
                self.support = np.flatnonzero(self.weights)
            else:
                self.weights = np.exp(-d**2 / (2 * window.radius**2))

    @property
    def is_hard(self) -> bool:
        return self.support is not None

    def apply(self, amps: np.ndarray) -> np.ndarray:
        amps = np.asarray(amps, dtype=complex)
        if self.modes is None:
            return amps * self.weights
        coeff = (amps @ self.modes.T) * self.grid.dx
        return coeff @ self.modes

    def probability(self, amps: np.ndarray) -> np.ndarray:
        """``||M psi||^2`` per state (not divided by the state's own norm)."""
        amps = np.asarray(amps)
        if self.modes is None:
            return np.sum(np.abs(amps) ** 2 * self.weights**2, axis=-1) * self.grid.dx
        coeff = (amps @ self.modes.T) * self.grid.dx
        return np.sum(np.abs(coeff) ** 2, axis=-1)


@lru_cache(maxsize=64)
def _operator(window: MeasurementWindow, grid: Grid) -> WindowOperator:
    return WindowOperator(window, grid)


def window_probability(psi: Wavefunction, win: MeasurementWindow) -> float:
    """Probability weight of ``psi`` inside the window, in [0, 1] for normalized input.

    A zero-radius window (allowed here but rejected by collapse operators)
    returns 0.
    """
    if win.radius <= 0:
        return 0.0
    g = psi.grid
    if win.profile != "bound_subspace" and not g.contains(win.center):
        raise ValueError(f"window centre {win.center} lies outside the grid")
    return float(win.operator(g).probability(psi.amplitudes))
