"""Time evolution on the periodic grid.

Two routes are provided for segments with the trap on:

* :func:`evolve_timeline` uses second-order Strang splitting (half kinetic
  step, potential phase, half kinetic step) and exact spectral free flight
  across gaps.
* :class:`StaticPropagator` diagonalizes the grid Hamiltonian of one static
  segment (spectral kinetic matrix plus diagonal potential) and applies
  ``exp(-i H t)`` exactly.  It is the same discrete operator that the
  splitting converges to, so it serves both as the fast path of the protocol
  engine and as the reference in convergence tests.
"""
from __future__ import annotations

import csv
import io
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, PhaseCapError
from .grid import Grid, Wavefunction, observables
from .potentials import PotentialTimeline, potential_on_grid
from .units import PhysicalParams


@dataclass(frozen=True)
class StepControl:
    """Time steps for split-step propagation.

    ``dt_pulse`` is the Strang step inside trap segments.  Free flight is
    exact, so ``dt_free`` only sets the sub-step used when an absorbing mask
    has to be applied during long gaps.
    """

    dt_free: float = 0.5
    dt_pulse: float = 1e-3
    phase_cap: float = 0.5

    def __post_init__(self):
        if not (self.dt_pulse > 0 and self.dt_free > 0):
            raise ConfigError("time steps must be positive")
        if self.dt_pulse > self.dt_free:
            raise ConfigError("dt_pulse must not exceed dt_free")
        if not 0 < self.phase_cap <= 0.5:
            raise ConfigError(f"phase_cap must lie in (0, 0.5] rad, got {self.phase_cap}")

    def check(self, depth: float, dt: Optional[float] = None):
        dt = self.dt_pulse if dt is None else dt
        if depth * dt > self.phase_cap * (1 + 1e-12):
            raise PhaseCapError(
                f"|V| dt = {depth * dt:.3f} rad exceeds phase cap {self.phase_cap} rad; "
                f"use dt_pulse <= {self.phase_cap / depth:.2e} us")


def kinetic_phase(grid: Grid, kappa: float, t: float) -> np.ndarray:
    return np.exp(-0.5j * kappa * grid.k**2 * t)


def free_evolve_array(amps: np.ndarray, grid: Grid, kappa: float, t: float) -> np.ndarray:
    """Exact free flight of one state or a batch of states (last axis = grid)."""
    if t == 0:
        return np.array(amps, dtype=complex, copy=True)
    return np.fft.ifft(np.fft.fft(amps, axis=-1) * kinetic_phase(grid, kappa, t), axis=-1)


def evolve_free(psi: Wavefunction, t: float, kappa: Optional[float] = None) -> Wavefunction:
    """Free-particle evolution ``exp(-i kappa k^2 t / 2)`` applied in wavevector space."""
    if t < 0:
        raise ValueError(f"evolution time must be non-negative, got {t}")
    kappa = PhysicalParams().kappa if kappa is None else kappa
    return psi.replace(free_evolve_array(psi.amplitudes, psi.grid, kappa, t))


@dataclass
class ObservableTrace:
    """Snapshots of a single trajectory at probe times."""

    t: list = field(default_factory=list)
    mean_x: list = field(default_factory=list)
    std_x: list = field(default_factory=list)
    mean_k: list = field(default_factory=list)
    window_prob: list = field(default_factory=list)

    def record(self, t: float, psi: Wavefunction, kappa: float, window=None):
        n = psi.norm()
        if n <= 0:
            obs = {"mean_x": math.nan, "std_x": math.nan, "mean_k": math.nan}
        else:
            obs = observables(psi.normalized(), kappa)
        self.t.append(float(t))
        self.mean_x.append(obs["mean_x"])
        self.std_x.append(obs["std_x"])
        self.mean_k.append(obs["mean_k"])
        if window is None:
            self.window_prob.append(math.nan)
        else:
            from .windows import window_probability
            self.window_prob.append(window_probability(psi, window) if n > 0 else 0.0)

    def __len__(self):
        return len(self.t)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mean_x", "std_x", "mean_k", "window_prob"])
        for row in zip(self.t, self.mean_x, self.std_x, self.mean_k, self.window_prob):
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _strang(amps, grid, kappa, vphase, kin_full, kin_half, n_steps):
    phik = np.fft.fft(amps, axis=-1) * kin_half
    for i in range(n_steps):
        amps = np.fft.ifft(phik, axis=-1) * vphase
        phik = np.fft.fft(amps, axis=-1)
        phik *= kin_full if i < n_steps - 1 else kin_half
    return np.fft.ifft(phik, axis=-1)


def strang_evolve_array(amps: np.ndarray, grid: Grid, kappa: float, potential: np.ndarray,
                        duration: float, dt: float) -> np.ndarray:
    """Strang-split propagation of ``amps`` under a static potential."""
    if duration <= 0:
        return np.array(amps, dtype=complex, copy=True)
    n_steps = max(1, math.ceil(duration / dt - 1e-9))
    h = duration / n_steps
    vphase = np.exp(-1j * potential * h)
    kin_full = kinetic_phase(grid, kappa, h)
    kin_half = kinetic_phase(grid, kappa, 0.5 * h)
    return _strang(np.asarray(amps, dtype=complex), grid, kappa, vphase, kin_full,
                   kin_half, n_steps)


def evolve_timeline(psi: Wavefunction, tl: PotentialTimeline,
                    sc: StepControl = StepControl(),
                    params: PhysicalParams = PhysicalParams(),
                    probes: Optional[Sequence[float]] = None,
                    window=None, absorbing: Optional[float] = None):
    """Propagate ``psi`` through a potential timeline.

    Trap segments use Strang splitting with the largest step not exceeding
    ``sc.dt_pulse``; off segments use exact free flight.  Segment edges and
    probe times split the integration so snapshots are taken exactly at the
    requested times.

    Parameters
    ----------
    probes : sequence of float, optional
        Times (us) at which to record observables.  ``window`` supplies the
        window probability column of the trace.
    absorbing : float, optional
        Width fraction of a cosine absorbing mask applied after every step.
        Disabled by default so the evolution stays exactly unitary.

    Returns
    -------
    (Wavefunction, ObservableTrace)
    """
    for seg in tl:
        if seg.is_pulse:
            sc.check(seg.depth, min(sc.dt_pulse, seg.duration) if seg.duration > 0 else 0)
    g, kappa = psi.grid, params.kappa
    mask = g.absorbing_mask(absorbing) if absorbing else None
    probes = sorted(float(p) for p in (probes or ()))
    trace = ObservableTrace()
    amps = psi.amplitudes.copy()
    pi = 0

    def record(t, a):
        trace.record(t, psi.replace(a), kappa, window)

    while pi < len(probes) and probes[pi] <= 0:
        record(probes[pi], amps)
        pi += 1
    for seg in tl:
        cuts = [seg.t_start]
        while pi < len(probes) and probes[pi] <= seg.t_end:
            cuts.append(probes[pi])
            pi += 1
        n_probe_cuts = len(cuts) - 1
        cuts.append(seg.t_end)
        if seg.is_pulse:
            v = potential_on_grid(g, seg.profile, seg.depth, params.waist, seg.center)
        for ci in range(len(cuts) - 1):
            span = cuts[ci + 1] - cuts[ci]
            if span > 0:
                if seg.is_pulse:
                    if mask is None:
                        amps = strang_evolve_array(amps, g, kappa, v, span, sc.dt_pulse)
                    else:
                        n = max(1, math.ceil(span / sc.dt_pulse - 1e-9))
                        for _ in range(n):
                            amps = strang_evolve_array(amps, g, kappa, v, span / n, span) * mask
                else:
                    if mask is None:
                        amps = free_evolve_array(amps, g, kappa, span)
                    else:
                        n = max(1, math.ceil(span / sc.dt_free - 1e-9))
                        for _ in range(n):
                            amps = free_evolve_array(amps, g, kappa, span / n) * mask
            if ci < n_probe_cuts:
                record(cuts[ci + 1], amps)
    return psi.replace(amps), trace


class StaticPropagator:
    """Exact ``exp(-i H t)`` for a static potential on the periodic grid.

    ``H`` is the spectral kinetic matrix (circulant, real symmetric) plus the
    sampled potential.  When the grid and potential are mirror symmetric
    about the grid point ``x = 0`` the problem splits into even and odd
    blocks, which cuts the diagonalization cost by about four.
    """

    def __init__(self, grid: Grid, kappa: float, potential: np.ndarray,
                 use_parity: Optional[bool] = None):
        self.grid = grid
        self.kappa = kappa
        v = np.asarray(potential, dtype=float)
        n = grid.n_points
        o = grid.index_of(0.0)
        symmetric = (o == n // 2 and np.allclose(v[1:o], v[:o:-1], rtol=1e-12, atol=0))
        if use_parity is None:
            use_parity = symmetric
        elif use_parity and not symmetric:
            raise ValueError("parity reduction needs a potential symmetric about x = 0")
        self.parity = bool(use_parity)
        col = np.fft.ifft(0.5 * kappa * grid.k**2).real
        if self.parity:
            self._o = o
            self._pi = np.arange(1, o)
            self._pm = n - self._pi
            h = sla.circulant(col)
            h[np.diag_indices(n)] += v
            a = np.array([0, o])
            pi, pm = self._pi, self._pm
            he = np.empty((o + 1, o + 1))
            he[:2, :2] = h[np.ix_(a, a)]
            he[:2, 2:] = np.sqrt(2) * h[np.ix_(a, pi)]
            he[2:, :2] = he[:2, 2:].T
            hpp = h[np.ix_(pi, pi)]
            hpm = h[np.ix_(pi, pm)]
            he[2:, 2:] = hpp + hpm
            ho = hpp - hpm
            del h, hpp, hpm
            self._blocks = [sla.eigh(he, overwrite_a=True, check_finite=False),
                            sla.eigh(ho, overwrite_a=True, check_finite=False)]
        else:
            h = sla.circulant(col)
            h[np.diag_indices(n)] += v
            self._blocks = [sla.eigh(h, overwrite_a=True, check_finite=False)]

    @classmethod
    def for_well(cls, grid: Grid, kappa: float, profile: str, depth: float,
                 waist: float, center: float = 0.0) -> "StaticPropagator":
        return cls(grid, kappa, potential_on_grid(grid, profile, depth, waist, center))

    # block transforms ---------------------------------------------------
    def _split(self, amps):
        if not self.parity:
            return [amps]
        o, pi, pm = self._o, self._pi, self._pm
        s = 1 / np.sqrt(2)
        even = np.concatenate(
            [amps[..., [0, o]], (amps[..., pi] + amps[..., pm]) * s], axis=-1)
        odd = (amps[..., pi] - amps[..., pm]) * s
        return [even, odd]

    def _merge(self, parts):
        if not self.parity:
            return parts[0]
        even, odd = parts
        o, pi, pm = self._o, self._pi, self._pm
        s = 1 / np.sqrt(2)
        out = np.empty(even.shape[:-1] + (self.grid.n_points,), dtype=even.dtype)
        out[..., 0] = even[..., 0]
        out[..., o] = even[..., 1]
        out[..., pi] = (even[..., 2:] + odd) * s
        out[..., pm] = (even[..., 2:] - odd) * s
        return out

    @staticmethod
    def _rmat(a, q, transpose=False):
        m = q.T if transpose else q
        if np.iscomplexobj(a):
            out = np.empty(a.shape[:-1] + (m.shape[1],), dtype=complex)
            out.real = np.ascontiguousarray(a.real) @ m
            out.imag = np.ascontiguousarray(a.imag) @ m
            return out
        return np.ascontiguousarray(a) @ m

    def evolve(self, amps: np.ndarray, t: float) -> np.ndarray:
        """Apply ``exp(-i H t)`` to one state or to each row of a batch."""
        amps = np.asarray(amps, dtype=complex)
        parts = []
        for (e, q), a in zip(self._blocks, self._split(amps)):
            c = self._rmat(a, q) * np.exp(-1j * e * t)
            parts.append(self._rmat(c, q, transpose=True))
        return self._merge(parts)

    def evolve_many(self, amps: np.ndarray, times) -> np.ndarray:
        """``exp(-i H t_k) psi`` for one state and many times (one row per time)."""
        amps = np.asarray(amps, dtype=complex)[None, :]
        times = np.asarray(times, dtype=float)
        parts = []
        for (e, q), a in zip(self._blocks, self._split(amps)):
            c = self._rmat(a, q) * np.exp(-1j * np.outer(times, e))
            parts.append(self._rmat(c, q, transpose=True))
        return self._merge(parts)

    def columns(self, t: float, idx: np.ndarray) -> np.ndarray:
        """Rows ``U(t) e_j`` for the grid indices ``idx`` (shape ``(len(idx), n)``).

        The eigenbasis projection of the unit vectors is kept for the last
        index set, so scanning ``t`` costs one back-transform per call.
        """
        idx = np.asarray(idx)
        key = idx.tobytes()
        cached = getattr(self, "_col_cache", None)
        if cached is None or cached[0] != key:
            basis = np.zeros((len(idx), self.grid.n_points))
            basis[np.arange(len(idx)), idx] = 1.0
            proj = [self._rmat(a, q) for (_, q), a in zip(self._blocks, self._split(basis))]
            # one attribute so concurrent callers never pair a key with another projection
            cached = self._col_cache = (key, proj)
        parts = [self._rmat(c * np.exp(-1j * e * t), q, transpose=True)
                 for (e, q), c in zip(self._blocks, cached[1])]
        return self._merge(parts)

    def eigenpairs(self):
        """All eigenvalues (ascending) with grid-normalized eigenvectors as rows."""
        energies, vecs = [], []
        for bi, (e, q) in enumerate(self._blocks):
            parts = []
            for bj, (_, qj) in enumerate(self._blocks):
                parts.append(q.T if bi == bj else np.zeros((q.shape[1], qj.shape[0])))
            energies.append(e)
            vecs.append(self._merge(parts) if self.parity else q.T)
        energies = np.concatenate(energies)
        vecs = np.concatenate(vecs, axis=0)
        order = np.argsort(energies, kind="stable")
        vecs = vecs[order] / np.sqrt(self.grid.dx)
        return energies[order], _fix_signs(vecs)


def _fix_signs(vecs):
    j = np.argmax(np.abs(vecs), axis=-1)
    s = np.sign(vecs[np.arange(len(vecs)), j])
    s[s == 0] = 1
    return vecs * s[:, None]


_CACHE: "OrderedDict[tuple, StaticPropagator]" = OrderedDict()
_CACHE_SIZE = 3
_CACHE_LOCK = threading.Lock()


def segment_propagator(grid: Grid, kappa: float, profile: str, depth: float,
                       waist: float) -> StaticPropagator:
    """Cached origin-centred propagator for a trap segment."""
    key = (grid, kappa, profile, float(depth), float(waist))
    with _CACHE_LOCK:
        prop = _CACHE.get(key)
        if prop is None:
            prop = StaticPropagator.for_well(grid, kappa, profile, depth, waist, 0.0)
            _CACHE[key] = prop
            while len(_CACHE) > _CACHE_SIZE:
                _CACHE.popitem(last=False)
        else:
            _CACHE.move_to_end(key)
    return prop


def clear_cache():
    _CACHE.clear()


class TrapEvolution:
    """``exp(-i H_trap t)`` for a well centred anywhere.

    Centres that are grid points reuse the cached origin-centred propagator
    through an exact index shift; other centres get their own (unreduced)
    diagonalization.
    """

    def __init__(self, grid: Grid, kappa: float, profile: str, depth: float,
                 waist: float, center: float = 0.0):
        self.grid = grid
        o = grid.index_of(0.0)
        c = grid.index_of(center) if o is not None else None
        if c is not None:
            self.shift = c - o
            self.prop = segment_propagator(grid, kappa, profile, depth, waist)
        else:
            self.shift = 0
            self.prop = StaticPropagator.for_well(grid, kappa, profile, depth, waist, center)

    def evolve(self, amps: np.ndarray, t: float) -> np.ndarray:
        if self.shift == 0:
            return self.prop.evolve(amps, t)
        a = np.roll(amps, -self.shift, axis=-1)
        return np.roll(self.prop.evolve(a, t), self.shift, axis=-1)

    def evolve_many(self, amps: np.ndarray, times) -> np.ndarray:
        out = self.prop.evolve_many(np.roll(amps, -self.shift), times)
        return np.roll(out, self.shift, axis=-1) if self.shift else out

    def columns(self, t: float, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx)
        n = self.grid.n_points
        cols = self.prop.columns(t, (idx - self.shift) % n)
        return np.roll(cols, self.shift, axis=-1) if self.shift else cols


def trap_eigenpairs(grid: Grid, kappa: float, profile: str, depth: float, waist: float,
                    center: float = 0.0, n_modes: Optional[int] = None,
                    kinetic: str = "spectral"):
    """Lowest eigenpairs of a single trap segment.

    ``kinetic="spectral"`` uses the same grid Hamiltonian as the propagators.
    ``kinetic="fd"`` solves the three-point finite-difference Hamiltonian on a
    subgrid of radius ``5 waist`` with a tridiagonal eigensolver.
    Returns ``(energies, vectors)`` with vectors as grid-normalized rows.
    """
    if kinetic == "spectral":
        tr = TrapEvolution(grid, kappa, profile, depth, waist, center)
        e, vecs = tr.prop.eigenpairs()
        if tr.shift:
            vecs = np.roll(vecs, tr.shift, axis=-1)
        if n_modes is not None:
            e, vecs = e[:n_modes], vecs[:n_modes]
        return e, vecs
    if kinetic != "fd":
        raise ValueError(f"unknown kinetic operator {kinetic!r}")
    d = grid.displacement(center)
    sel = np.flatnonzero(np.abs(d) <= 5 * waist)
    v = potential_on_grid(grid, profile, depth, waist, center)[sel]
    t = 0.5 * kappa / grid.dx**2
    diag = v + 2 * t
    off = -t * np.ones(len(sel) - 1)
    hi = len(sel) - 1 if n_modes is None else min(n_modes, len(sel)) - 1
    e, q = sla.eigh_tridiagonal(diag, off, select="i", select_range=(0, hi))
    vecs = np.zeros((len(e), grid.n_points))
    vecs[:, sel] = q.T / np.sqrt(grid.dx)
    return e, _fix_signs(vecs)


def stationary_state(profile: str, depth: float, waist: float, n: int = 0,
                     grid: Grid = Grid(), kappa: Optional[float] = None,
                     center: float = 0.0, kinetic: str = "spectral",
                     return_energy: bool = False):
    """``n``-th eigenstate of a static trap segment as a normalized wavefunction.

    Raises ``ValueError`` when the requested mode is not bound (non-negative
    energy for the Gaussian well, or above the potential at the edge of the
    solved region for the harmonic well).
    """
    kappa = PhysicalParams().kappa if kappa is None else kappa
    if not depth > 0:
        raise ValueError("stationary states need a positive depth")
    if n < 0:
        raise ValueError("mode index must be non-negative")
    e, vecs = trap_eigenpairs(grid, kappa, profile, depth, waist, center, n + 1, kinetic)
    if len(e) <= n:
        raise ValueError(f"mode {n} is not available on this grid")
    if profile == "gaussian":
        limit = 0.0
    else:
        d = np.abs(grid.displacement(center))
        reach = min(d.max(), 5 * waist) if kinetic == "fd" else d.max()
        limit = -depth + 2 * depth * reach**2 / waist**2
    if not e[n] < limit:
        raise ValueError(f"mode {n} is not bound (energy {e[n]:.4g} rad/us)")
    psi = Wavefunction(grid, vecs[n].astype(complex)).normalized()
    return (psi, float(e[n])) if return_energy else psi
