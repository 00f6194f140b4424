"""Dipole-trap potentials and piecewise-constant pulse schedules."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .grid import Grid

PROFILES = ("gaussian", "harmonic", "off")


def gaussian_well(depth: float, waist: float, center: float = 0.0):
    """Attractive Gaussian well ``-depth exp(-2 (x - center)^2 / waist^2)``."""
    if not waist > 0:
        raise ValueError(f"waist must be positive, got {waist}")

    def potential(x):
        d = np.asarray(x) - center
        return -depth * np.exp(-2.0 * d**2 / waist**2)

    return potential


def harmonic_well(depth: float, waist: float, center: float = 0.0):
    """Quadratic expansion of :func:`gaussian_well` about its minimum.

    ``-depth + (Omega^2 / 2 kappa) (x - c)^2`` with ``Omega^2 = 4 depth kappa / w^2``;
    kappa cancels, leaving ``-depth + 2 depth (x - c)^2 / w^2``.
    """
    if not waist > 0:
        raise ValueError(f"waist must be positive, got {waist}")

    def potential(x):
        d = np.asarray(x) - center
        return -depth + 2.0 * depth * d**2 / waist**2

    return potential


def well(profile: str, depth: float, waist: float, center: float = 0.0):
    if profile == "gaussian":
        return gaussian_well(depth, waist, center)
    if profile == "harmonic":
        return harmonic_well(depth, waist, center)
    if profile == "off":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    raise ValueError(f"unknown potential profile {profile!r}")


def potential_on_grid(grid: Grid, profile: str, depth: float, waist: float,
                      center: float = 0.0) -> np.ndarray:
    """Sample a well on the grid using minimum-image distances to ``center``."""
    return well(profile, depth, waist, 0.0)(grid.displacement(center))


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    depth: float = 0.0
    center: float = 0.0
    profile: str = "off"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.t_end < self.t_start:
            raise ValueError(f"segment ends before it starts: {self}")
        if self.depth < 0:
            raise ValueError(f"negative depth in {self}")
        if (self.profile == "off") != (self.depth == 0):
            raise ValueError("profile 'off' must coincide with zero depth")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def is_pulse(self) -> bool:
        return self.profile != "off"


class PotentialTimeline:
    """Contiguous, ordered list of :class:`Segment` starting at t = 0."""

    def __init__(self, segments: Sequence[Segment]):
        segments = tuple(segments)
        if not segments:
            raise ValueError("a timeline needs at least one segment")
        if segments[0].t_start != 0:
            raise ValueError("the first segment must start at t = 0")
        for a, b in zip(segments, segments[1:]):
            if b.t_start != a.t_end:
                raise ValueError(f"segments are not contiguous at t = {a.t_end}")
        self.segments = segments

    @classmethod
    def from_sequence(cls, items: Iterable[tuple]) -> "PotentialTimeline":
        """Build from ``(duration, depth, center, profile)`` tuples.

        Zero-duration gaps are dropped; zero-duration pulses are kept because
        they still mark an (instantaneous) measurement.
        """
        segs = []
        t = 0.0
        for duration, depth, center, profile in items:
            if duration < 0:
                raise ValueError(f"negative duration {duration}")
            if profile == "off" and duration == 0:
                continue
            segs.append(Segment(t, t + duration, depth, center, profile))
            t = t + duration
        if not segs:
            segs.append(Segment(0.0, 0.0))
        return cls(segs)

    @property
    def duration(self) -> float:
        return self.segments[-1].t_end

    @property
    def pulses(self) -> list[Segment]:
        return [s for s in self.segments if s.is_pulse]

    def max_depth(self) -> float:
        return max(s.depth for s in self.segments)

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __eq__(self, other):
        return isinstance(other, PotentialTimeline) and self.segments == other.segments

    def __repr__(self):
        return f"PotentialTimeline({len(self.segments)} segments, T={self.duration:g} us)"

    def to_dicts(self) -> list[dict]:
        return [asdict(s) for s in self.segments]

    @classmethod
    def from_dicts(cls, rows: Iterable[dict]) -> "PotentialTimeline":
        return cls([Segment(**r) for r in rows])

    def to_csv(self, path=None) -> str:
        """Step-plot rows ``t, depth, center`` (two rows per segment)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "depth", "center"])
        for s in self.segments:
            w.writerow([repr(s.t_start), repr(s.depth), repr(s.center)])
            w.writerow([repr(s.t_end), repr(s.depth), repr(s.center)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _centers(centers, n_pulses):
    centers = [0.0] if centers is None else list(np.atleast_1d(centers).astype(float))
    if len(centers) == 1:
        return centers * n_pulses
    if len(centers) != n_pulses:
        raise ValueError(f"need 1 or {n_pulses} centers, got {len(centers)}")
    return centers


def pulse_train(total_T: float, n_pulses: int, tau: float, depth: float,
                centers=None, placement: str = "within",
                profile: str = "gaussian") -> PotentialTimeline:
    """Equally spaced square pulses with equal off-gaps before, between and after.

    ``placement="within"`` puts the pulses inside ``total_T`` (gap
    ``(T - n tau) / (n + 1)``); ``placement="inserted"`` treats ``total_T`` as
    the free-evolution time only, so the gap is ``T / (n + 1)`` and the
    timeline lasts ``T + n tau``.  ``placement="after"`` also counts free
    time only but puts a pulse after each of ``n`` intervals ``T / n`` (no
    trailing gap), as in the textbook Zeno argument.
    """
    if n_pulses < 0 or int(n_pulses) != n_pulses:
        raise ValueError(f"n_pulses must be a non-negative integer, got {n_pulses}")
    if tau < 0 or total_T < 0:
        raise ValueError("durations must be non-negative")
    n = int(n_pulses)
    if n == 0:
        return PotentialTimeline([Segment(0.0, float(total_T))])
    pulse_profile = profile if depth > 0 else "off"
    cs = _centers(centers, n)
    if placement == "after":
        items = []
        for j in range(n):
            items.append((total_T / n, 0.0, 0.0, "off"))
            items.append((tau, depth if pulse_profile != "off" else 0.0, cs[j],
                          pulse_profile))
        return PotentialTimeline.from_sequence(items)
    if placement == "within":
        free = total_T - n * tau
        if free < -1e-12 * max(1.0, total_T):
            raise ValueError(f"{n} pulses of {tau} us do not fit into {total_T} us")
        free = max(free, 0.0)
    elif placement == "inserted":
        free = float(total_T)
    else:
        raise ValueError(f"unknown placement {placement!r}")
    gap = free / (n + 1)
    segs = []
    t = 0.0
    for j in range(n):
        t_on = t + gap
        if t_on > t:
            segs.append(Segment(t, t_on))
        t_off = t_on + tau
        segs.append(Segment(t_on, t_off, depth if pulse_profile != "off" else 0.0,
                            cs[j], pulse_profile))
        t = t_off
    end = float(total_T) if placement == "within" else float(total_T) + n * tau
    if end - t > 1e-12 * max(1.0, end):
        segs.append(Segment(t, end))
    elif segs[-1].t_end != end:
        last = segs[-1]
        segs[-1] = Segment(last.t_start, end, last.depth, last.center, last.profile)
    return PotentialTimeline(segs)


def stepped_train(n_pulses: int, tau: float, gap: float, depth: float, delta_r: float,
                  start: float = 0.0, profile: str = "gaussian",
                  lead_gap: float = 0.0) -> PotentialTimeline:
    """Pulse, gap, pulse, gap, ... with pulse ``j`` centred at ``start + j delta_r``."""
    items = [(lead_gap, 0.0, 0.0, "off")]
    for j in range(int(n_pulses)):
        items.append((tau, depth, start + j * delta_r, profile))
        items.append((gap, 0.0, 0.0, "off"))
    return PotentialTimeline.from_sequence(items)


def periodic_train(total_free: float, spacing: float, tau: float, depth: float,
                   center: float = 0.0, profile: str = "gaussian") -> PotentialTimeline:
    """``round(T / spacing)`` cycles of (free ``spacing``, pulse ``tau``)."""
    n = int(round(total_free / spacing))
    items = []
    for _ in range(n):
        items.append((spacing, 0.0, 0.0, "off"))
        items.append((tau, depth, center, profile))
    rest = total_free - n * spacing
    if rest > 1e-12:
        items.append((rest, 0.0, 0.0, "off"))
    return PotentialTimeline.from_sequence(items)
