"""Slow but independent references for the propagators.

* :class:`DenseHamiltonian` builds the full grid Hamiltonian on small grids
  (three-point finite-difference kinetic term by default, or the spectral
  kinetic matrix assembled from the explicit DFT matrix) and exponentiates it
  through an eigendecomposition.
* Closed forms for the free Gaussian and the harmonic coherent state.
* :func:`run_validation` runs the cross-checks and returns a JSON-ready report.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError
from .grid import Grid, Wavefunction, gaussian_state, observables
from .potentials import PotentialTimeline, Segment, potential_on_grid
from .propagator import StepControl, evolve_free, evolve_timeline
from .units import KAPPA_RB87, PhysicalParams, harmonic_frequency

MAX_DENSE_POINTS = 256


@dataclass
class DenseHamiltonian:
    """Hermitian ``n x n`` grid Hamiltonian (``n <= 256``).

    ``kinetic="fd"`` uses the periodic three-point stencil
    ``-kappa/2 (psi[j+1] - 2 psi[j] + psi[j-1]) / dx^2``; ``"spectral"``
    builds ``F^-1 diag(kappa k^2 / 2) F`` from the explicit DFT matrix.
    """

    grid: Grid
    potential: Optional[np.ndarray] = None
    kappa: float = KAPPA_RB87
    kinetic: str = "fd"

    def __post_init__(self):
        n = self.grid.n_points
        if n > MAX_DENSE_POINTS:
            raise ConfigError(f"dense oracle grids are capped at {MAX_DENSE_POINTS} points")
        if self.kinetic == "fd":
            t = 0.5 * self.kappa / self.grid.dx**2
            h = np.diag(np.full(n, 2 * t)).astype(complex)
            idx = np.arange(n)
            h[idx, (idx + 1) % n] = -t
            h[idx, (idx - 1) % n] = -t
        elif self.kinetic == "spectral":
            f = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n)
            h = f.conj().T @ np.diag(0.5 * self.kappa * self.grid.k**2) @ f / n
        else:
            raise ConfigError(f"unknown kinetic operator {self.kinetic!r}")
        if self.potential is not None:
            v = np.asarray(self.potential, dtype=float)
            if v.shape != (n,):
                raise ConfigError("potential does not match the grid")
            h = h + np.diag(v)
        self.matrix = h
        self.energies, self.vectors = sla.eigh(h)

    @classmethod
    def for_well(cls, grid: Grid, profile: str, depth: float, waist: float,
                 center: float = 0.0, kappa: float = KAPPA_RB87,
                 kinetic: str = "fd") -> "DenseHamiltonian":
        return cls(grid, potential_on_grid(grid, profile, depth, waist, center), kappa,
                   kinetic)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def propagator(self, t: float) -> np.ndarray:
        q = self.vectors
        return (q * np.exp(-1j * self.energies * t)) @ q.conj().T


def dense_evolve(psi: Wavefunction, H: DenseHamiltonian, t: float) -> Wavefunction:
    """Exact ``exp(-i H t) psi`` for the discretized Hamiltonian."""
    if psi.grid != H.grid:
        raise ValueError("the state and the Hamiltonian live on different grids")
    return psi.replace(H.propagator(t) @ psi.amplitudes)


def analytic_free_gaussian(sigma0: float, k0: float, t: float,
                           kappa: float = KAPPA_RB87, x0: float = 0.0) -> dict:
    """Mean position and width of a free Gaussian packet at time ``t``."""
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    s = kappa * t / (2 * sigma0**2)
    return {"mean_x": x0 + kappa * k0 * t, "sigma_t": sigma0 * math.sqrt(1 + s * s)}


def analytic_coherent_state(d: float, k0: float, Omega: float, t: float,
                            kappa: float = KAPPA_RB87) -> dict:
    """Centroid of a coherent state in a harmonic well: a phase-space rotation."""
    if not Omega > 0:
        raise ValueError("Omega must be positive")
    c, s = math.cos(Omega * t), math.sin(Omega * t)
    return {"mean_x": d * c + kappa * k0 / Omega * s,
            "mean_k": k0 * c - d * Omega / kappa * s}


# ---------------------------------------------------------------------------
# validation suite


def _check(name, value, threshold, passed, **extra):
    return {"name": name, "value": float(value), "threshold": float(threshold),
            "passed": bool(passed), **extra}


def check_free_dispersion(params: PhysicalParams = PhysicalParams(), sigma0: float = 0.1,
                          t: float = 45.0, grid: Grid = Grid()) -> dict:
    psi = gaussian_state(grid, 0.0, sigma0, 0.0)
    start = time.perf_counter()
    out = evolve_free(psi, t, params.kappa)
    elapsed = time.perf_counter() - start
    ref = analytic_free_gaussian(sigma0, 0.0, t, params.kappa)["sigma_t"]
    err = abs(observables(out, params.kappa)["std_x"] / ref - 1)
    return _check("free dispersion vs closed form", err, 1e-6, err < 1e-6,
                  seconds=elapsed)


def small_trap_grid() -> Grid:
    """128-point grid around the trap, fine enough for the ground-state width."""
    return Grid(-0.8, 0.8, 128)


def check_split_step_vs_dense(params: PhysicalParams = PhysicalParams(), t: float = 2.0,
                              grid: Optional[Grid] = None,
                              sc: StepControl = StepControl()) -> dict:
    grid = grid or small_trap_grid()
    psi = gaussian_state(grid, 0.05, 0.04, 5.0)
    tl = PotentialTimeline([Segment(0.0, t, params.trap_depth, 0.0, "gaussian")])
    split, _ = evolve_timeline(psi, tl, sc, params)
    h = DenseHamiltonian.for_well(grid, "gaussian", params.trap_depth, params.waist,
                                  kappa=params.kappa, kinetic="spectral")
    dense = dense_evolve(psi, h, t)
    infidelity = max(0.0, 1 - split.fidelity(dense))
    return _check("split-step vs dense (Gaussian well)", infidelity, 1e-6,
                  infidelity < 1e-6)


def check_coherent_period(params: PhysicalParams = PhysicalParams(), d: float = 0.05,
                          grid: Grid = Grid(-3.2, 3.2, 1024),
                          sc: StepControl = StepControl()) -> dict:
    from .units import ground_state_width
    omega = params.omega
    period = 2 * math.pi / omega
    psi = gaussian_state(grid, d, ground_state_width(params), 0.0)
    tl = PotentialTimeline([Segment(0.0, period, params.trap_depth, 0.0, "harmonic")])
    out, _ = evolve_timeline(psi, tl, sc, params)
    fid = psi.fidelity(out)
    return _check("coherent state returns after one period", fid, 0.999, fid > 0.999)


def check_harmonic_spectrum(params: PhysicalParams = PhysicalParams(), n_max: int = 5,
                            grid: Grid = Grid(-0.4, 0.4, 256)) -> dict:
    omega = harmonic_frequency(params.trap_depth, params.waist, params.kappa)
    h = DenseHamiltonian.for_well(grid, "harmonic", params.trap_depth, params.waist,
                                  kappa=params.kappa, kinetic="spectral")
    levels = h.energies[: n_max + 1]
    ref = -params.trap_depth + omega * (np.arange(n_max + 1) + 0.5)
    err = float(np.max(np.abs(levels - ref)) / omega)
    return _check("dense harmonic levels vs Omega (n + 1/2) - depth", err, 1e-3, err < 1e-3)


def check_fd_convergence(params: PhysicalParams = PhysicalParams(), sigma0: float = 0.25,
                         t: float = 50.0) -> dict:
    """Finite-difference dense evolution approaches the closed form at O(dx^2)."""
    errs = []
    for n in (64, 128, 256):
        g = Grid(-2.0, 2.0, n)
        psi = gaussian_state(g, 0.0, sigma0, 0.0)
        out = dense_evolve(psi, DenseHamiltonian(g, kappa=params.kappa), t)
        ref = analytic_free_gaussian(sigma0, 0.0, t, params.kappa)["sigma_t"]
        errs.append(abs(observables(out, params.kappa)["std_x"] - ref))
    order = math.log2(errs[1] / errs[2])
    return _check("finite-difference oracle convergence order", order, 1.8,
                  1.8 <= order <= 2.2, errors=[float(e) for e in errs])


def check_dense_unitarity(params: PhysicalParams = PhysicalParams()) -> dict:
    g = small_trap_grid()
    h = DenseHamiltonian.for_well(g, "gaussian", params.trap_depth, params.waist,
                                  kappa=params.kappa)
    u = h.propagator(2.0)
    err = max(float(np.max(np.abs(u @ u.conj().T - np.eye(g.n_points)))),
              h.hermiticity_error())
    return _check("dense propagator unitarity and Hermiticity", err, 1e-10, err < 1e-10)


CHECKS = {
    "free_dispersion": check_free_dispersion,
    "split_step_vs_dense": check_split_step_vs_dense,
    "coherent_period": check_coherent_period,
    "harmonic_spectrum": check_harmonic_spectrum,
    "fd_convergence": check_fd_convergence,
    "dense_unitarity": check_dense_unitarity,
}


def run_validation(params: PhysicalParams = PhysicalParams(), only=None) -> dict:
    """Run the oracle suite; returns ``{"passed": bool, "checks": [...]}``."""
    names = list(CHECKS) if only is None else list(only)
    checks = []
    for name in names:
        if name not in CHECKS:
            raise ConfigError(f"unknown validation check {name!r}")
        checks.append({"id": name, **CHECKS[name](params)})
    return {"passed": all(c["passed"] for c in checks), "checks": checks}
