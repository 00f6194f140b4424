"""Protocol runners for the five pulse-train experiments.

Every runner propagates a thermal ensemble of Gaussian wavepackets through a
:class:`~zenosim.potentials.PotentialTimeline` and reports

``P_loss = 1 - E[survival_weight * final window probability]``.

Trajectories are tracked unnormalized: a collapse multiplies the amplitudes by
the window and is never renormalized, so the squared norm of each state is its
accumulated survival weight.  All scan points reuse the same wavevector
samples (common random numbers), which keeps the trends smooth at modest
sample counts.
"""
from __future__ import annotations

import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, GridOverflowError
from .grid import Grid, Wavefunction, edge_probability, gaussian_state
from .potentials import (PotentialTimeline, periodic_train, potential_on_grid, pulse_train,
                         stepped_train)
from .propagator import (ObservableTrace, StepControl, TrapEvolution, free_evolve_array,
                         stationary_state, strang_evolve_array)
from .units import PhysicalParams, ground_state_width
from .windows import MeasurementWindow

MODES = ("projective", "unitary")
METHODS = ("exact", "split-step")
GUARD_LIMIT = 1e-6
GUARD_BAND = 10


@dataclass(frozen=True)
class EnsembleSpec:
    """Thermal ensemble of initial wavepackets.

    Wavevectors are drawn from ``N(0, v_th / kappa)``.  ``v_th = 0`` gives the
    single zero-temperature trajectory regardless of ``n_samples``.
    ``initial="ground"`` starts from the trap ground state instead of a
    Gaussian of width ``sigma0`` (default: the harmonic ground width).
    """

    n_samples: int = 256
    v_th: Optional[float] = None
    sigma0: Optional[float] = None
    rng_seed: int = 0
    initial: str = "gaussian"

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ConfigError(f"n_samples must be a positive integer, got {self.n_samples}")
        if self.v_th is not None and self.v_th < 0:
            raise ConfigError("v_th must be non-negative")
        if self.sigma0 is not None and not self.sigma0 > 0:
            raise ConfigError("sigma0 must be positive")
        if self.initial not in ("gaussian", "ground"):
            raise ConfigError(f"unknown initial state {self.initial!r}")

    def wavevectors(self, params: PhysicalParams) -> np.ndarray:
        v_th = params.temperature if self.v_th is None else self.v_th
        if v_th == 0:
            return np.zeros(1)
        rng = np.random.default_rng(self.rng_seed)
        return rng.normal(0.0, v_th / params.kappa, size=int(self.n_samples))

    def initial_states(self, grid: Grid, params: PhysicalParams) -> np.ndarray:
        """Initial amplitudes, one row per trajectory."""
        k0 = self.wavevectors(params)
        if self.initial == "ground":
            base = stationary_state("gaussian", params.trap_depth, params.waist, 0,
                                    grid, params.kappa).amplitudes
        else:
            sigma = self.sigma0 or ground_state_width(params)
            base = gaussian_state(grid, 0.0, sigma, 0.0).amplitudes
        return base[None, :] * np.exp(1j * np.outer(k0, grid.x))


@dataclass(frozen=True)
class ScanPoint:
    param: float
    loss_prob: float
    stderr: float
    mean_final_x: float


@dataclass
class ScanResult:
    """Loss probability versus one scan parameter.

    ``meta`` carries protocol settings and derived quantities (fits,
    thresholds, drift speed); ``trace`` is an optional representative
    single-trajectory :class:`ObservableTrace`.
    """

    protocol: str
    axis: str
    points: list
    meta: dict = field(default_factory=dict)
    trace: Optional[ObservableTrace] = None

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.param)

    @property
    def params(self) -> np.ndarray:
        return np.array([p.param for p in self.points])

    @property
    def loss(self) -> np.ndarray:
        return np.array([p.loss_prob for p in self.points])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([p.stderr for p in self.points])

    @property
    def mean_final_x(self) -> np.ndarray:
        return np.array([p.mean_final_x for p in self.points])

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "axis": self.axis,
                "points": [asdict(p) for p in self.points], "meta": self.meta}


# ---------------------------------------------------------------------------
# batch engine


@dataclass
class Engine:
    """Propagates a batch of trajectories through timelines.

    ``method="exact"`` applies trap segments through the eigenbasis of the
    grid Hamiltonian; ``"split-step"`` uses Strang splitting with
    ``sc.dt_pulse``.  Hard collapse windows take a shortcut in the exact
    route: after the collapse the state lives on the window support, so
    ``U(tau)`` is needed only on those columns, which are cached.
    """

    grid: Grid
    params: PhysicalParams
    window: MeasurementWindow
    mode: str = "projective"
    method: str = "exact"
    sc: StepControl = StepControl()
    recapture: Optional[MeasurementWindow] = None
    absorbing: Optional[float] = None
    fast: bool = True
    _columns: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.window.radius <= 0:
            raise ConfigError("the measurement window needs a positive radius")
        if self.recapture is None:
            self.recapture = MeasurementWindow(radius=self.params.recapture_radius)
        self._mask = self.grid.absorbing_mask(self.absorbing) if self.absorbing else None
        if self._mask is not None:
            # the fastest grid component crosses at most half the ramp per sub-step
            v_max = self.params.kappa * self.grid.k_nyquist
            self._mask_step = min(self.sc.dt_free,
                                  0.5 * self.absorbing * self.grid.length / v_max)

    # pieces --------------------------------------------------------------
    def _fast_ok(self, tl) -> bool:
        """Hard-window projective runs with on-grid centres use the reduced path."""
        if not self.fast or self.mode != "projective" or self.method != "exact":
            return False
        g = self.grid
        if g.index_of(0.0) is None or not self.window.at(0.0).operator(g).is_hard:
            return False
        return all(g.index_of(seg.center) is not None for seg in tl.pulses)

    def _origin_columns(self, seg, support):
        """``U_trap(tau)`` applied to the unit vectors of ``support`` (origin-centred)."""
        n = self.grid.n_points
        if seg.duration == 0:
            cols = np.zeros((len(support), n), dtype=complex)
            cols[np.arange(len(support)), support] = 1.0
            return cols
        key = ("cols", seg.profile, seg.depth, seg.duration)
        with self._lock:
            cols = self._columns.get(key)
            if cols is None:
                tr = TrapEvolution(self.grid, self.params.kappa, seg.profile, seg.depth,
                                   self.params.waist, 0.0)
                cols = tr.columns(seg.duration, support)
                self._remember(key, cols)
            else:
                self._columns.move_to_end(key)
        return cols

    def _cycle(self, seg, gap, shift, support):
        """Full-grid images of the window basis after the pulse and the following gap."""
        absolute = shift if self._mask is not None else 0
        key = ("cycle", seg.profile, seg.depth, seg.duration, gap, absolute)
        with self._lock:
            m = self._columns.get(key)
            if m is None:
                m = self._origin_columns(seg, support)
                if absolute:
                    m = np.roll(m, absolute, axis=-1)
                if self._mask is not None:
                    m = m * self._mask
                if gap > 0:
                    m = self._free(m, gap)
                self._remember(key, m)
            else:
                self._columns.move_to_end(key)
        return m, shift - absolute

    def _remember(self, key, value):
        self._columns[key] = value
        while len(self._columns) > 6:
            self._columns.popitem(last=False)

    def _trap(self, amps, seg):
        if seg.duration == 0:
            return amps
        if self.method == "exact":
            tr = TrapEvolution(self.grid, self.params.kappa, seg.profile, seg.depth,
                               self.params.waist, seg.center)
            return tr.evolve(amps, seg.duration)
        self.sc.check(seg.depth, min(self.sc.dt_pulse, seg.duration))
        v = potential_on_grid(self.grid, seg.profile, seg.depth, self.params.waist,
                              seg.center)
        return strang_evolve_array(amps, self.grid, self.params.kappa, v, seg.duration,
                                   self.sc.dt_pulse)

    def _pulse(self, amps, seg):
        if self.mode == "unitary":
            return self._trap(amps, seg)
        win = self.window.at(seg.center, seg.depth)
        amps = win.operator(self.grid).apply(amps)
        return self._trap(amps, seg)

    def _guard(self, amps, where):
        edge = edge_probability(np.abs(amps) ** 2, self.grid.dx, GUARD_BAND) / len(amps)
        self._check_edge(edge, where)

    def _guard_values(self, edge_amps, where):
        edge = float(np.sum(np.abs(edge_amps) ** 2) * self.grid.dx / len(edge_amps))
        self._check_edge(edge, where)

    def _check_edge(self, edge, where):
        if edge > GUARD_LIMIT:
            raise GridOverflowError(
                f"probability {edge:.2e} within {GUARD_BAND} dx of the grid edge at {where}; "
                "enlarge the grid")

    def _free(self, amps, t):
        g, kappa = self.grid, self.params.kappa
        if self._mask is None:
            return free_evolve_array(amps, g, kappa, t)
        n = max(1, math.ceil(t / self._mask_step - 1e-9))
        for _ in range(n):
            amps = free_evolve_array(amps, g, kappa, t / n) * self._mask
        return amps

    # driver ----------------------------------------------------------------
    def run(self, amps: np.ndarray, tl: PotentialTimeline,
            final_center: float = 0.0) -> dict:
        """Propagate the batch and return per-trajectory diagnostics.

        With an absorbing mask, free flights are cut into sub-steps short
        enough that nothing crosses the ramp unattenuated, and the mask is
        applied after each sub-step and each pulse; absorbed weight counts as
        lost.
        """
        amps = np.array(amps, dtype=complex, copy=True)
        if self._fast_ok(tl):
            amps = self._run_reduced(amps, tl)
        else:
            amps = self._run_direct(amps, tl)
        g = self.grid
        self._guard(amps, "the end of the run")
        dens = np.abs(amps) ** 2
        norm2 = dens.sum(axis=-1) * g.dx
        kept = self.recapture.at(final_center, self.params.trap_depth).operator(g)
        return {"survival": norm2, "kept": kept.probability(amps),
                "x_moment": dens @ g.x * g.dx}

    def _run_direct(self, amps, tl):
        g = self.grid
        pending = 0.0
        for seg in tl:
            if not seg.is_pulse:
                pending += seg.duration
                continue
            if pending > 0:
                amps = self._free(amps, pending)
                pending = 0.0
            self._guard(amps, f"t = {seg.t_start:g} us")
            amps = self._pulse(amps, seg)
            if self._mask is not None:
                amps *= self._mask
            if self.mode == "projective":
                amps[np.sum(np.abs(amps) ** 2, axis=-1) * g.dx < 1e-12] = 0.0
        if pending > 0:
            amps = self._free(amps, pending)
        return amps

    def _run_reduced(self, amps, tl):
        """Same evolution as :meth:`_run_direct`, carried on the window support.

        Right after a hard collapse the state vanishes outside the window, so
        one pulse plus the following gap is a linear map from the window
        values at one pulse to the full grid just before the next.  Only its
        columns on the next window and on the edge bands (for the guard) are
        ever needed.
        """
        g = self.grid
        n, o = g.n_points, g.index_of(0.0)
        support = self.window.at(0.0).operator(g).support
        edges = np.r_[0:GUARD_BAND, n - GUARD_BAND:n]
        lead, pulses = 0.0, []
        for seg in tl:
            if seg.is_pulse:
                pulses.append([seg, 0.0])
            elif pulses:
                pulses[-1][1] += seg.duration
            else:
                lead += seg.duration
        if not pulses:
            return self._free(amps, lead) if lead > 0 else amps
        if lead > 0:
            amps = self._free(amps, lead)
        self._guard(amps, f"t = {pulses[0][0].t_start:g} us")
        shift = g.index_of(pulses[0][0].center) - o
        x = amps[:, (support + shift) % n]
        for j, (seg, gap) in enumerate(pulses):
            x[np.sum(np.abs(x) ** 2, axis=-1) * g.dx < 1e-12] = 0.0
            m, roll = self._cycle(seg, gap, shift, support)
            if j + 1 == len(pulses):
                out = x @ m
                return np.roll(out, roll, axis=-1) if roll else out
            nxt = g.index_of(pulses[j + 1][0].center) - o
            edge = x @ m[:, (edges - roll) % n]
            self._guard_values(edge, f"t = {pulses[j + 1][0].t_start:g} us")
            x = x @ m[:, (support + nxt - roll) % n]
            shift = nxt

def _summarize(param, out) -> ScanPoint:
    kept = out["kept"]
    n = len(kept)
    loss = float(min(max(1.0 - kept.mean(), 0.0), 1.0))
    stderr = float(kept.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    total = out["survival"].sum()
    mean_x = float(out["x_moment"].sum() / total) if total > 0 else math.nan
    return ScanPoint(float(param), loss, stderr, mean_x)


def _nyquist_check(grid, params, ens):
    v_th = params.temperature if ens.v_th is None else ens.v_th
    sigma = ens.sigma0 or ground_state_width(params)
    k_scale = 6 * math.hypot(1 / (2 * sigma), v_th / params.kappa)
    grid.check_nyquist(k_scale, "the thermal ensemble")


def _map(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


@dataclass(frozen=True)
class RunSetup:
    """Shared simulation settings for the protocol runners."""

    params: PhysicalParams = PhysicalParams()
    grid: Grid = Grid()
    ensemble: EnsembleSpec = EnsembleSpec()
    window: Optional[MeasurementWindow] = None
    mode: str = "projective"
    method: str = "exact"
    profile: str = "gaussian"
    sc: StepControl = StepControl()
    workers: int = 1
    absorbing: Optional[float] = None
    recapture: Optional[MeasurementWindow] = None

    def engine(self, mode: Optional[str] = None) -> Engine:
        win = self.window or MeasurementWindow(radius=self.params.waist,
                                               waist=self.params.waist,
                                               kappa=self.params.kappa)
        return Engine(self.grid, self.params, win, mode or self.mode, self.method, self.sc,
                      recapture=self.recapture, absorbing=self.absorbing)

    def initial(self) -> np.ndarray:
        _nyquist_check(self.grid, self.params, self.ensemble)
        return self.ensemble.initial_states(self.grid, self.params)

    def describe(self) -> dict:
        v_th = self.params.temperature if self.ensemble.v_th is None else self.ensemble.v_th
        return {"mode": self.mode, "method": self.method, "profile": self.profile,
                "absorbing": self.absorbing,
                "n_samples": len(self.ensemble.wavevectors(self.params)),
                "v_th": v_th, "rng_seed": self.ensemble.rng_seed}


def _scan(setup: RunSetup, items, build, workers=None, mode=None, final_center=None):
    """Run ``build(item) -> (param, timeline)`` for each item on a shared ensemble."""
    amps0 = setup.initial()
    engine = setup.engine(mode)

    def one(item):
        param, tl = build(item)
        fc = final_center(item) if final_center else 0.0
        return _summarize(param, engine.run(amps0, tl, fc))

    return _map(one, list(items), setup.workers if workers is None else workers)


# ---------------------------------------------------------------------------
# runners


def run_zeno_scan(N_list: Sequence[int], T: float = 45.0, tau: float = 0.4,
                  setup: RunSetup = RunSetup(), depth: Optional[float] = None,
                  placement: str = "inserted") -> ScanResult:
    """Loss after ``T`` us of free flight interrupted by ``N`` equally spaced pulses.

    With ``placement="inserted"`` (default) the pulses are added to the
    ``T`` us of free flight; ``"within"`` squeezes them into ``T``.
    """
    depth = setup.params.trap_depth if depth is None else depth

    def build(n):
        return n, pulse_train(T, int(n), tau, depth, placement=placement,
                              profile=setup.profile)

    pts = _scan(setup, sorted(set(int(n) for n in N_list)), build)
    meta = {"T": T, "tau": tau, "depth": depth, "placement": placement, **setup.describe()}
    return ScanResult("zeno", "N (number of measurements)", pts, meta)


def run_pulse_width_scan(tau_list: Sequence[float], T: float = 30.0, N: int = 15,
                         intensity: float = 1.0, setup: RunSetup = RunSetup(),
                         trace_tau: Optional[float] = None,
                         placement: str = "inserted") -> ScanResult:
    """Loss versus pulse width at fixed ``N`` and intensity.

    Also records the observable trace of one representative trajectory (the
    one-sigma thermal wavevector) at pulse width ``trace_tau`` (default: the
    largest width in the scan).
    """
    from .units import depth_from_intensity
    depth = depth_from_intensity(setup.params, intensity)

    def build(tau):
        return tau, pulse_train(T, N, float(tau), depth, placement=placement,
                                profile=setup.profile)

    taus = sorted(set(float(t) for t in tau_list))
    pts = _scan(setup, taus, build)
    trace_tau = max(taus) if trace_tau is None else trace_tau
    trace = representative_trace(build(trace_tau)[1], setup)
    meta = {"T": T, "N": N, "intensity": intensity, "depth": depth,
            "placement": placement, "trace_tau": trace_tau, **setup.describe()}
    sr = ScanResult("pulse-width", "pulse width tau (us)", pts, meta, trace)
    sr.meta["inert_dwell_time"] = inert_dwell_time(sr)
    return sr


def run_strength_scan(I_list: Sequence[float], N_list: Sequence[int] = (5, 10, 15),
                      tau: float = 0.4, T: float = 30.0, setup: RunSetup = RunSetup(),
                      placement: str = "inserted", plateau_tol: float = 0.02
                      ) -> dict:
    """Loss versus measurement strength, one :class:`ScanResult` per ``N``.

    Each result's ``meta`` holds the detected plateau onset and level and a
    vertex-form quadratic fit of the sub-threshold segment.
    """
    from .fitting import fit_quadratic_vertex
    from .units import depth_from_intensity
    levels = sorted(set(float(i) for i in I_list))
    out = {}
    for n in sorted(set(int(v) for v in N_list)):
        def build(i, n=n):
            return i, pulse_train(T, n, tau, depth_from_intensity(setup.params, i),
                                  placement=placement, profile=setup.profile)

        pts = _scan(setup, levels, build)
        sr = ScanResult("strength", "measurement strength I", pts,
                        {"T": T, "N": n, "tau": tau, "placement": placement,
                         **setup.describe()})
        onset, level = detect_plateau(sr.params, sr.loss, plateau_tol)
        sr.meta.update(plateau_onset=onset, plateau_loss=level)
        seg = sr.params <= onset if onset is not None else np.ones(len(pts), bool)
        if seg.sum() < 4:
            seg[: min(4, len(pts))] = True
        try:
            fit = fit_quadratic_vertex(sr.params[seg], sr.loss[seg])
            sr.meta["quadratic_fit"] = fit.to_dict()
        except ValueError as exc:
            sr.meta["quadratic_fit"] = {"error": str(exc)}
        out[n] = sr
    return out


def run_duration_scan(T_list: Sequence[float], spacing: float = 2.0,
                      taus: Sequence[float] = (1.0, 3.5, 5.0),
                      setup: RunSetup = RunSetup()) -> dict:
    """Loss versus total free-evolution time, one :class:`ScanResult` per width.

    The schedule repeats (``spacing`` us free flight, ``tau`` us pulse)
    ``round(T / spacing)`` times, so ``T`` counts free-flight time only.
    """
    out = {}
    for tau in taus:
        def build(t, tau=tau):
            return t, periodic_train(t, spacing, tau, setup.params.trap_depth,
                                     profile=setup.profile)

        pts = _scan(setup, sorted(set(float(t) for t in T_list)), build)
        out[float(tau)] = ScanResult("duration", "total free evolution time T (us)", pts,
                                     {"spacing": spacing, "tau": tau, **setup.describe()})
    return out


def run_transport(N_list: Sequence[int] = (20, 40), tau: float = 0.4, gap: float = 1.4,
                  delta_r: float = 0.1, setup: RunSetup = RunSetup()) -> ScanResult:
    """Measurements stepped by ``delta_r``: pulse ``j = 0..N`` is centred at ``j delta_r``.

    Loss is judged by a recapture window at the last pulse centre.  The
    drift speed is ``delta_r / (tau + gap)`` in um/us (numerically equal to m/s).
    """
    def build(n):
        return n, stepped_train(int(n) + 1, tau, gap, setup.params.trap_depth, delta_r,
                                profile=setup.profile)

    ns = sorted(set(int(n) for n in N_list))
    pts = _scan(setup, ns, build, final_center=lambda n: n * delta_r)
    speeds = {str(p.param): (p.mean_final_x / (p.param * (tau + gap)) if p.param else 0.0)
              for p in pts}
    meta = {"tau": tau, "gap": gap, "delta_r": delta_r,
            "schedule_speed": delta_r / (tau + gap), "drift_speed": speeds,
            **setup.describe()}
    return ScanResult("transport", "N (number of steps)", pts, meta)


def representative_trace(tl: PotentialTimeline, setup: RunSetup,
                         dt: float = 0.1, k0: Optional[float] = None,
                         return_state: bool = False):
    """Observable trace of one trajectory, sampled every ``dt`` us and at segment edges.

    The trajectory starts with wavevector ``k0`` (default: one thermal
    standard deviation).  The recorded state is renormalized after
    collapses, and ``window_prob`` refers to the measurement window at the
    trap centre.  With ``return_state`` the final (unnormalized) wavefunction
    is returned as well, as ``(trace, state)``.
    """
    p = setup.params
    g = setup.grid
    if k0 is None:
        v_th = p.temperature if setup.ensemble.v_th is None else setup.ensemble.v_th
        k0 = v_th / p.kappa
    sigma = setup.ensemble.sigma0 or ground_state_width(p)
    amps = gaussian_state(g, 0.0, sigma, k0).amplitudes[None, :]
    engine = setup.engine()
    win = engine.window
    trace = ObservableTrace()

    def rec(t, a):
        psi = Wavefunction(g, a[0])
        if psi.norm() > 0:
            psi = psi.normalized()
        trace.record(t, psi, p.kappa, win)

    rec(0.0, amps)
    for seg in tl:
        if seg.is_pulse and engine.mode == "projective":
            amps = win.at(seg.center, seg.depth).operator(g).apply(amps)
            rec(seg.t_start, amps)
        n = max(1, math.ceil(seg.duration / dt - 1e-9)) if seg.duration > 0 else 0
        if n == 0:
            continue
        times = seg.duration * np.arange(1, n + 1) / n
        if seg.is_pulse:
            tr = TrapEvolution(g, p.kappa, seg.profile, seg.depth, p.waist, seg.center)
            states = tr.evolve_many(amps[0], times)
        else:
            states = np.fft.ifft(np.fft.fft(amps[0]) * np.exp(
                -0.5j * p.kappa * np.outer(times, g.k**2)), axis=-1)
        for t, a in zip(times, states):
            rec(seg.t_start + t, a[None, :])
        amps = states[-1:]
    if return_state:
        return trace, Wavefunction(g, amps[0])
    return trace


# ---------------------------------------------------------------------------
# analysis helpers


def inert_dwell_time(sr: ScanResult, threshold: float = 0.1) -> Optional[float]:
    """Smallest pulse width with loss above ``threshold`` after the loss first dips below it.

    Scans usually start at short widths where a few pulses cannot hold the
    atom yet; the dwell threshold is the end of the first low-loss stretch.
    Returns None when the loss never dips to ``threshold`` or never rises again.
    """
    taus, loss = sr.params, sr.loss
    low = np.flatnonzero(loss <= threshold)
    if len(low) == 0:
        return None
    above = np.flatnonzero((loss > threshold) & (np.arange(len(loss)) > low[0]))
    return float(taus[above[0]]) if len(above) else None


def detect_plateau(x, y, tol: float = 0.02):
    """Plateau onset and level of a decreasing curve.

    The onset is the smallest ``x`` from which every later value stays within
    ``tol`` of the final value; the level is the mean over the plateau.
    Returns ``(None, None)`` for fewer than two points.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2:
        return None, None
    order = np.argsort(x)
    x, y = x[order], y[order]
    inside = np.abs(y - y[-1]) <= tol
    k = len(y) - 1
    while k > 0 and inside[k - 1]:
        k -= 1
    return float(x[k]), float(y[k:].mean())


@dataclass(frozen=True)
class ZenoPrediction:
    """First-order Zeno loss estimates for ``N`` ideal measurements.

    ``closed_form`` is ``|<r|H|phi0>|^2 T^2 / N`` (the textbook shortcut
    that keeps only the mean energy); ``variance_form`` uses the energy
    variance instead, which is the proper short-time expansion of
    ``1 - |<r|U|phi0>|^2``; ``product`` is ``1 - (1 - p1)^N`` with ``p1`` the
    exact single-interval loss.
    """

    N: int
    T: float
    closed_form: float
    variance_form: float
    p1: float
    product: float


def first_order_zeno(N: int, T: float, phi0: Wavefunction,
                     win: Optional[MeasurementWindow] = None,
                     kappa: Optional[float] = None) -> ZenoPrediction:
    """Perturbative Zeno loss for ``N`` instantaneous projections onto ``|r>``.

    ``|r>`` is the normalized window-restricted copy of ``phi0`` (``phi0``
    itself when ``win`` is None).  Matrix elements are evaluated spectrally.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    kappa = PhysicalParams().kappa if kappa is None else kappa
    g = phi0.grid
    phi = phi0.normalized().amplitudes
    r = phi if win is None else win.operator(g).apply(phi)
    r = r / math.sqrt(np.sum(np.abs(r) ** 2) * g.dx)
    ek = 0.5 * kappa * g.k**2
    hphi = np.fft.ifft(ek * np.fft.fft(phi))
    h_el = np.vdot(r, hphi) * g.dx
    h2 = float(np.sum(ek**2 * np.abs(np.fft.fft(phi)) ** 2) * g.dx / g.n_points)
    var = max(h2 - abs(np.vdot(phi, hphi) * g.dx) ** 2, 0.0)
    step = T / N
    amp = np.vdot(r, free_evolve_array(phi, g, kappa, step)) * g.dx
    p1 = float(1 - abs(amp) ** 2)
    return ZenoPrediction(int(N), float(T), float(abs(h_el) ** 2 * T**2 / N),
                          var * T**2 / N, p1, float(1 - (1 - p1) ** N))


__all__ = [
    "EnsembleSpec", "ScanPoint", "ScanResult", "Engine", "RunSetup",
    "run_zeno_scan", "run_pulse_width_scan", "run_strength_scan", "run_duration_scan",
    "run_transport", "representative_trace", "inert_dwell_time", "detect_plateau",
    "ZenoPrediction", "first_order_zeno",
]
