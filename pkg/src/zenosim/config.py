"""Structured run configuration (JSON) and its translation into runner calls.

A minimal document only needs the protocol::

    {"protocol": "zeno"}

Everything else falls back to the documented defaults.  Unknown keys are
rejected and schema violations are reported with their field path.
"""
from __future__ import annotations

import hashlib
import json
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, \
    model_validator

from .errors import ConfigError, ZenoError
from .grid import Grid
from .propagator import StepControl
from .protocols import EnsembleSpec, RunSetup, _nyquist_check
from .units import DEFAULT_DEPTH, DEFAULT_V_TH, DEFAULT_WAIST, KAPPA_RB87, PhysicalParams, \
    ground_state_width
from .windows import MeasurementWindow

FORMATS = ("csv", "json", "svg")


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PhysicalSection(_Model):
    kappa: float = KAPPA_RB87
    trap_depth: float = DEFAULT_DEPTH
    waist: float = DEFAULT_WAIST
    temperature: float = DEFAULT_V_TH
    recapture_radius: Optional[float] = None

    def build(self) -> PhysicalParams:
        return PhysicalParams(**self.model_dump())


class GridSection(_Model):
    x_min: float = -12.8
    x_max: float = 12.8
    n_points: int = 4096

    def build(self) -> Grid:
        return Grid(self.x_min, self.x_max, self.n_points)


class EnsembleSection(_Model):
    n_samples: int = 256
    v_th: Optional[float] = None
    sigma0: Optional[float] = None
    rng_seed: int = 0
    initial: Literal["gaussian", "ground"] = "gaussian"

    def build(self) -> EnsembleSpec:
        return EnsembleSpec(**self.model_dump())


class WindowSection(_Model):
    profile: Literal["hard", "gaussian", "bound_subspace"] = "hard"
    radius: Optional[float] = None
    n_modes: Optional[int] = None


class NumericsSection(_Model):
    method: Literal["exact", "split-step"] = "exact"
    dt_pulse: float = 1e-3
    dt_free: float = 0.5
    phase_cap: float = 0.5
    absorbing: Optional[float] = None
    workers: int = Field(default=1, ge=1)
    profile: Literal["gaussian", "harmonic"] = "gaussian"

    def build(self) -> StepControl:
        return StepControl(self.dt_free, self.dt_pulse, self.phase_cap)


Placement = Literal["inserted", "within", "after"]


class ZenoProtocol(_Model):
    name: Literal["zeno"] = "zeno"
    N_list: tuple[int, ...] = (1, 2, 3, 5, 10, 15, 20, 30)
    T: float = 45.0
    tau: float = 0.4
    placement: Placement = "inserted"


class PulseWidthProtocol(_Model):
    name: Literal["pulse-width"] = "pulse-width"
    tau_list: tuple[float, ...] = tuple(np.round(np.arange(0.25, 14.01, 0.25), 2).tolist())
    T: float = 30.0
    N: int = 15
    intensity: float = Field(default=1.0, ge=0.0, le=1.0)
    placement: Placement = "inserted"


class StrengthProtocol(_Model):
    name: Literal["strength"] = "strength"
    I_list: tuple[float, ...] = tuple(np.round(np.arange(0.0, 1.01, 0.1), 2).tolist())
    N_list: tuple[int, ...] = (5, 10, 15)
    tau: float = 0.4
    T: float = 30.0
    plateau_tol: float = 0.02
    placement: Placement = "inserted"


class DurationProtocol(_Model):
    name: Literal["duration"] = "duration"
    T_list: tuple[float, ...] = (2.0, 4.0, 6.0, 8.0, 10.0, 14.0, 20.0, 30.0)
    spacing: float = 2.0
    taus: tuple[float, ...] = (1.0, 3.5, 5.0)


class TransportProtocol(_Model):
    name: Literal["transport"] = "transport"
    N_list: tuple[int, ...] = (20, 40)
    tau: float = 0.4
    gap: float = 1.4
    delta_r: float = 0.1


class SnapshotProtocol(_Model):
    """One trajectory through a pulse train, dumped as traces and wavefunctions."""

    name: Literal["snapshot"] = "snapshot"
    N: int = 15
    T: float = 30.0
    tau: float = 0.4
    intensity: float = Field(default=1.0, ge=0.0, le=1.0)
    dt: float = 0.1
    k0: Optional[float] = None
    placement: Placement = "inserted"


Protocol = Annotated[
    Union[ZenoProtocol, PulseWidthProtocol, StrengthProtocol, DurationProtocol,
          TransportProtocol, SnapshotProtocol],
    Field(discriminator="name"),
]
PROTOCOLS = ("zeno", "pulse-width", "strength", "duration", "transport", "snapshot")


class OutputSection(_Model):
    directory: str = "results"
    formats: tuple[Literal["csv", "json", "svg"], ...] = ("csv", "json", "svg")


class RunConfig(_Model):
    """Validated run configuration; see ``docs/config.schema.json``."""

    physical: PhysicalSection = PhysicalSection()
    grid: GridSection = GridSection()
    ensemble: EnsembleSection = EnsembleSection()
    window: WindowSection = WindowSection()
    numerics: NumericsSection = NumericsSection()
    protocol: Protocol
    mode: Literal["projective", "unitary"] = "projective"
    output: OutputSection = OutputSection()

    @model_validator(mode="before")
    @classmethod
    def _resolve(cls, data):
        # spell out the defaults that depend on other sections
        if not isinstance(data, dict):
            return data
        data = dict(data)
        phys = data.get("physical", {})
        if not isinstance(phys, dict):
            return data
        try:
            p = PhysicalSection.model_validate(phys).build()
            sigma = ground_state_width(p) if p.trap_depth > 0 else None
        except (ValidationError, ZenoError, ValueError):
            return data
        phys = {**phys, "recapture_radius": p.recapture_radius}
        data["physical"] = phys
        ens = data.get("ensemble", {})
        if isinstance(ens, dict):
            ens = dict(ens)
            if ens.get("v_th") is None:
                ens["v_th"] = p.temperature
            if ens.get("sigma0") is None and sigma is not None:
                ens["sigma0"] = sigma
            data["ensemble"] = ens
        win = data.get("window", {})
        if isinstance(win, dict) and win.get("radius") is None:
            data["window"] = {**win, "radius": p.waist}
        return data

    @field_validator("protocol", mode="before")
    @classmethod
    def _tagged(cls, v):
        if isinstance(v, str):
            return {"name": v}
        if isinstance(v, dict) and "name" not in v:
            raise ValueError("missing field 'name' (one of " + ", ".join(PROTOCOLS) + ")")
        return v

    @model_validator(mode="after")
    def _components(self):
        # every component checks its own invariants
        def checked(section, fn):
            try:
                return fn()
            except (ZenoError, ValueError) as exc:
                raise ValueError(f"{section}: {exc}") from None

        params = checked("physical", self.physical.build)
        grid = checked("grid", self.grid.build)
        ens = checked("ensemble", self.ensemble.build)
        checked("numerics", self.numerics.build)
        checked("window", lambda: self.window_for(params))
        checked("grid", lambda: _nyquist_check(grid, params, ens))
        return self

    def window_for(self, params: PhysicalParams) -> MeasurementWindow:
        w = self.window
        return MeasurementWindow(radius=params.waist if w.radius is None else w.radius,
                                 profile=w.profile, n_modes=w.n_modes,
                                 depth=params.trap_depth, waist=params.waist,
                                 kappa=params.kappa, trap_profile=self.numerics.profile)

    def setup(self, workers: Optional[int] = None) -> RunSetup:
        params = self.physical.build()
        num = self.numerics
        return RunSetup(params=params, grid=self.grid.build(),
                        ensemble=self.ensemble.build(), window=self.window_for(params),
                        mode=self.mode, method=num.method, profile=num.profile,
                        sc=num.build(), workers=workers or num.workers,
                        absorbing=num.absorbing)

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        """Stable hash of the resolved configuration (output section excluded)."""
        d = self.to_dict()
        d.pop("output")
        d["numerics"].pop("workers")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @property
    def seed(self) -> int:
        return self.ensemble.rng_seed


def _describe(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"] if not str(p).startswith("function-"))
        msg = e["msg"].removeprefix("Value error, ")
        lines.append(f"{loc}: {msg}" if loc else msg)
    return "; ".join(lines)


def parse_config(text: Union[str, bytes, dict]) -> RunConfig:
    """Parse and validate a JSON configuration.

    Raises
    ------
    ConfigError
        On malformed JSON or any schema violation; the message names the
        offending field path.
    """
    if isinstance(text, dict):
        data = text
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None


def serialize(cfg: RunConfig) -> str:
    """Canonical JSON with every default spelled out."""
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def json_schema() -> dict:
    return RunConfig.model_json_schema()
