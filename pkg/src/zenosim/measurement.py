"""Collapse operators and finite-duration trap measurements.

A trap pulse of duration ``tau`` acts as ``M(tau) = U_trap(tau) M_b``: the
state is first restricted to the window (and renormalized, the lost weight
going into the survival weight) and then evolves inside the switched-on trap.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, LostTrajectoryError
from .grid import Wavefunction, observables
from .potentials import PotentialTimeline, Segment
from .propagator import StepControl, evolve_free, evolve_timeline
from .units import PhysicalParams
from .windows import MeasurementWindow

LOST_SURVIVAL = 1e-12


@dataclass(frozen=True)
class MeasurementRecord:
    index: int
    survival: float
    pre_mean_x: float
    post_mean_x: float


def records_to_csv(records, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "survival", "pre_mean_x", "post_mean_x"])
    for r in records:
        w.writerow([r.index, repr(r.survival), repr(r.pre_mean_x), repr(r.post_mean_x)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _mean_x(psi):
    return float(np.sum(psi.grid.x * psi.density) * psi.grid.dx / psi.norm())


def project(psi: Wavefunction, win: MeasurementWindow):
    """Collapse ``psi`` onto the window.

    Returns the renormalized post-measurement state (its survival weight
    multiplied by the survival probability) and the survival probability
    ``||M psi||^2``.

    Raises
    ------
    LostTrajectoryError
        When the survival probability drops below 1e-12.
    """
    if win.radius <= 0:
        raise ConfigError("collapse windows need a positive radius")
    norm = psi.norm()
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"project needs a normalized state (norm = {norm})")
    op = win.operator(psi.grid)
    post = op.apply(psi.amplitudes)
    survival = min(float(np.sum(np.abs(post) ** 2) * psi.grid.dx) / norm, 1.0)
    if survival < LOST_SURVIVAL:
        raise LostTrajectoryError(psi.survival_weight * survival)
    post = post / np.sqrt(survival * norm)
    return Wavefunction(psi.grid, post, psi.survival_weight * survival), survival


def _default_window(params, center):
    return MeasurementWindow(center=center, radius=params.waist)


def measure_finite(psi: Wavefunction, tau: float, depth: float, center: float = 0.0,
                   sc: StepControl = StepControl(),
                   params: PhysicalParams = PhysicalParams(),
                   window: Optional[MeasurementWindow] = None,
                   profile: str = "gaussian"):
    """Finite-duration measurement: collapse onto the window, then ``tau`` us in the trap.

    ``window`` defaults to a hard window of radius ``params.waist``; it is
    always moved to ``center``.  Returns ``(state, survival)``.
    """
    if tau < 0:
        raise ValueError(f"pulse duration must be non-negative, got {tau}")
    win = (window or _default_window(params, center)).at(center, depth)
    post, survival = project(psi, win)
    if tau > 0 and depth > 0:
        tl = PotentialTimeline([Segment(0.0, tau, depth, center, profile)])
        post, _ = evolve_timeline(post, tl, sc, params)
    elif tau > 0:
        post = evolve_free(post, tau, params.kappa)
    return post, survival


def measure_unitary(psi: Wavefunction, tau: float, depth: float, center: float = 0.0,
                    sc: StepControl = StepControl(),
                    params: PhysicalParams = PhysicalParams(),
                    profile: str = "gaussian") -> Wavefunction:
    """A trap pulse treated as a pure potential pulse: no collapse, no renormalization."""
    if not tau > 0:
        raise ValueError(f"pulse duration must be positive, got {tau}")
    if depth == 0:
        return evolve_free(psi, tau, params.kappa)
    tl = PotentialTimeline([Segment(0.0, tau, depth, center, profile)])
    out, _ = evolve_timeline(psi, tl, sc, params)
    return out


@dataclass
class TransportOutcome:
    state: Wavefunction
    survival: float
    final_mean_x: float
    records: list

    def __iter__(self):
        return iter((self.state, self.survival, self.final_mean_x))


def composite_transport_operator(psi: Wavefunction, steps: int, delta_r: float,
                                 tau: float, gap: float, depth: float,
                                 sc: StepControl = StepControl(),
                                 params: PhysicalParams = PhysicalParams(),
                                 window: Optional[MeasurementWindow] = None
                                 ) -> TransportOutcome:
    """Measurements stepped by ``delta_r``: ``M = (prod_{j=0}^{steps} M_j)^dagger``.

    Pulse ``j`` (``j = 0 .. steps``) is centred at ``j * delta_r`` and is
    followed by ``gap`` us of free flight, so the last pulse sits at
    ``steps * delta_r``.  Unpacks as ``(state, survival, final_mean_x)``.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    reach = abs(steps * delta_r) + params.waist
    if not (psi.grid.contains(reach) and psi.grid.contains(-reach)):
        raise ValueError(f"transport over {steps * delta_r} um leaves the grid")
    records = []
    survival = 1.0
    for j in range(steps + 1):
        pre = _mean_x(psi)
        psi, s = measure_finite(psi, tau, depth, j * delta_r, sc, params, window)
        survival *= s
        records.append(MeasurementRecord(j, s, pre, _mean_x(psi)))
        psi = evolve_free(psi, gap, params.kappa)
    final_x = observables(psi.normalized(), params.kappa)["mean_x"]
    return TransportOutcome(psi, survival, final_x, records)
