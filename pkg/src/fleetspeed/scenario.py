"""Scenario configuration: the JSON surface that makes every experiment a
reproducible artifact.

A scenario file fully determines a run: road layout, fleet composition,
algorithm parameters, communication model, activation time, compliance and
seed. Defaults are applied at load time and echoed back by `to_dict`, so a
loaded scenario re-serialises to an equivalent file (round-trip tested).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .consensus import ConsensusParams
from .cost_models import (
    DEFAULT_SPEED_RANGE,
    CostFunction,
    EvPowerCurve,
    IceEmissionCurve,
    PRESET_NAMES,
    QuadraticCost,
    ice_preset,
)
from .errors import ConfigError
from .mobility import VEHICLE_TYPE_PRESETS, RoadLayout, RoadSection

DEFAULT_VEHICLE_TYPES = ["type1", "type2", "type3", "type4"]


@dataclass(frozen=True)
class CommModel:
    model: str                      # "radius" | "complete" | "random"
    radius_m: float | None = None
    p_edge: float | None = None

    def __post_init__(self):
        if self.model not in ("radius", "complete", "random"):
            raise ConfigError("communication.model", f"unknown model {self.model!r}")
        if self.model == "radius":
            if self.radius_m is None or self.radius_m < 0:
                raise ConfigError("communication.radius_m", "radius model needs radius_m >= 0")
        if self.model == "random":
            if self.p_edge is None or not (0.0 <= self.p_edge <= 1.0):
                raise ConfigError("communication.p_edge", "random model needs p_edge in [0, 1]")


@dataclass(frozen=True)
class FleetConfig:
    mode: str                                    # "fixed" | "spawn" | "ev"
    count: int | None = None
    curve_counts: dict | None = None             # fixed: {"R007": 32, ...}
    curve_mix: list | None = None                # spawn: uniform over these
    vehicle_types: list = field(default_factory=lambda: list(DEFAULT_VEHICLE_TYPES))
    initial_speed_kmh: object = None             # number | [lo, hi] | "own_optimum"
    free_speed_kmh: object = None                # number | [lo, hi]
    placement: str = "even"                      # "even" | "random"
    spawn_period_s: float | None = None
    spawn_cutoff_s: float | None = None

    def __post_init__(self):
        if self.mode not in ("fixed", "spawn", "ev"):
            raise ConfigError("fleet.mode", f"unknown mode {self.mode!r}")
        if self.placement not in ("even", "random"):
            raise ConfigError("fleet.placement", f"unknown placement {self.placement!r}")


@dataclass(frozen=True)
class EvConfig:
    base_alpha: tuple = (0.56, 0.06, 2.0e-4, 1.2e-5)
    ancillary_range_kw: tuple = (0.2, 2.2)
    passenger_range: tuple = (1, 5)
    passenger_mass_kg: float = 80.0
    base_mass_kg: float = 1300.0
    phase_rounds: tuple = (1200, 1200, 1200)
    phase2_offset_kmh: float = -15.0
    phase3_offset_kmh: float = 15.0
    phase1_forced: bool = False   # force phase 1 to the oracle optimum (no algorithm)

    def __post_init__(self):
        lo, hi = self.ancillary_range_kw
        if not (0.0 < lo <= hi):
            raise ConfigError("ev.ancillary_range_kw", f"need 0 < lo <= hi, got {self.ancillary_range_kw}")
        p_lo, p_hi = self.passenger_range
        if not (1 <= p_lo <= p_hi):
            raise ConfigError("ev.passenger_range", f"need 1 <= lo <= hi, got {self.passenger_range}")
        if len(self.phase_rounds) != 3 or any(int(p) <= 0 for p in self.phase_rounds):
            raise ConfigError("ev.phase_rounds", "need three positive phase lengths")


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    duration_s: float
    activation_time_s: float
    road: RoadLayout
    consensus: ConsensusParams
    communication: CommModel
    fleet: FleetConfig
    compliance: float = 1.0
    dt_s: float = 1.0
    ma_window: int = 500
    ev: EvConfig | None = None
    curve_definitions: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.compliance < 0.0 or self.compliance > 1.0:
            raise ConfigError("compliance", f"must lie in [0, 1], got {self.compliance}")
        if not self.activation_time_s < self.duration_s:
            raise ConfigError(
                "activation_time_s",
                f"activation {self.activation_time_s} must precede the end of the run {self.duration_s}",
            )
        if self.dt_s <= 0.0:
            raise ConfigError("dt_s", f"must be positive, got {self.dt_s}")
        if self.fleet.mode == "ev":
            if self.ev is None:
                raise ConfigError("ev", "fleet mode 'ev' needs an ev section")
            total = sum(int(p) for p in self.ev.phase_rounds) * self.dt_s
            if total != self.duration_s:
                raise ConfigError(
                    "ev.phase_rounds",
                    f"phases cover {total}s but duration is {self.duration_s}s",
                )
        self._check_fleet()
        self._check_curves()

    def _check_fleet(self) -> None:
        f = self.fleet
        if f.mode == "fixed":
            if not f.curve_counts:
                raise ConfigError("fleet.curve_counts", "fixed fleets need curve counts")
            if any(int(c) <= 0 for c in f.curve_counts.values()):
                raise ConfigError("fleet.curve_counts", "counts must be positive")
            if f.initial_speed_kmh is None:
                raise ConfigError("fleet.initial_speed_kmh", "fixed fleets need initial speeds")
        elif f.mode == "spawn":
            if not f.curve_mix:
                raise ConfigError("fleet.curve_mix", "spawned fleets need a curve mix")
            if f.spawn_period_s is None or f.spawn_period_s <= 0.0:
                raise ConfigError("fleet.spawn_period_s", "need a positive spawn period")
            if f.spawn_cutoff_s is None or f.spawn_cutoff_s < 0.0:
                raise ConfigError("fleet.spawn_cutoff_s", "need a non-negative spawn cutoff")
            if f.free_speed_kmh is None:
                raise ConfigError("fleet.free_speed_kmh", "spawned fleets need free speeds")
        else:  # ev
            if f.count is None or int(f.count) <= 0:
                raise ConfigError("fleet.count", "ev fleets need a positive count")
        for t in f.vehicle_types:
            if t not in VEHICLE_TYPE_PRESETS and t != "ev":
                raise ConfigError("fleet.vehicle_types", f"unknown vehicle type {t!r}")
        for bound_field in ("initial_speed_kmh", "free_speed_kmh"):
            val = getattr(f, bound_field)
            if isinstance(val, (list, tuple)):
                if len(val) != 2 or not float(val[0]) < float(val[1]):
                    raise ConfigError(f"fleet.{bound_field}", f"range must be [lo, hi], got {val}")

    def _check_curves(self) -> None:
        referenced: list[str] = []
        if self.fleet.curve_counts:
            referenced += list(self.fleet.curve_counts)
        if self.fleet.curve_mix:
            referenced += list(self.fleet.curve_mix)
        known = set(PRESET_NAMES) | set(self.curve_definitions)
        for name in referenced:
            if name not in known:
                raise ConfigError("fleet.curves", f"unknown curve {name!r}; known: {sorted(known)}")
        for name in self.curve_definitions:
            self.resolve_curve(name)  # malformed definitions fail at load, not mid-run

    # -- curve resolution ----------------------------------------------------

    def resolve_curve(self, name: str) -> CostFunction:
        v_lo, v_hi = self.consensus.v_lo, self.consensus.v_hi
        if name in self.curve_definitions:
            return _curve_from_definition(name, self.curve_definitions[name], v_lo, v_hi)
        return ice_preset(name, v_lo=v_lo, v_hi=v_hi)

    @property
    def n_rounds(self) -> int:
        return int(round(self.duration_s / self.dt_s))

    @property
    def activation_round(self) -> int:
        return int(round(self.activation_time_s / self.dt_s))

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "activation_time_s": self.activation_time_s,
            "dt_s": self.dt_s,
            "road": {
                "wrap": self.road.wrap,
                "sections": [
                    {"name": s.name, "length_m": s.length_m, "controlled": s.controlled, "lanes": s.lanes}
                    for s in self.road.sections
                ],
            },
            "consensus": {
                "eta": self.consensus.eta,
                "eta_mode": self.consensus.eta_mode,
                "mu": self.consensus.mu,
                "v_lo_kmh": self.consensus.v_lo,
                "v_hi_kmh": self.consensus.v_hi,
                "epsilon_consensus_kmh": self.consensus.epsilon_consensus,
                "hold_rounds": self.consensus.hold_rounds,
            },
            "communication": {
                "model": self.communication.model,
                "radius_m": self.communication.radius_m,
                "p_edge": self.communication.p_edge,
            },
            "fleet": {
                "mode": self.fleet.mode,
                "count": self.fleet.count,
                "curve_counts": self.fleet.curve_counts,
                "curve_mix": self.fleet.curve_mix,
                "vehicle_types": list(self.fleet.vehicle_types),
                "initial_speed_kmh": _jsonable(self.fleet.initial_speed_kmh),
                "free_speed_kmh": _jsonable(self.fleet.free_speed_kmh),
                "placement": self.fleet.placement,
                "spawn_period_s": self.fleet.spawn_period_s,
                "spawn_cutoff_s": self.fleet.spawn_cutoff_s,
            },
            "compliance": self.compliance,
            "ma_window": self.ma_window,
            "curve_definitions": dict(self.curve_definitions),
        }
        if self.ev is not None:
            d["ev"] = {
                "base_alpha": list(self.ev.base_alpha),
                "ancillary_range_kw": list(self.ev.ancillary_range_kw),
                "passenger_range": list(self.ev.passenger_range),
                "passenger_mass_kg": self.ev.passenger_mass_kg,
                "base_mass_kg": self.ev.base_mass_kg,
                "phase_rounds": list(self.ev.phase_rounds),
                "phase2_offset_kmh": self.ev.phase2_offset_kmh,
                "phase3_offset_kmh": self.ev.phase3_offset_kmh,
                "phase1_forced": self.ev.phase1_forced,
            }
        else:
            d["ev"] = None
        return d

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def with_overrides(self, **kwargs) -> "Scenario":
        """Functional update used by sweeps (seed, compliance, radius, ...)."""
        if "radius_m" in kwargs:
            radius = kwargs.pop("radius_m")
            kwargs["communication"] = replace(self.communication, radius_m=radius)
        return replace(self, **kwargs)


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def _curve_from_definition(name: str, spec: dict, v_lo: float, v_hi: float) -> CostFunction:
    kind = spec.get("kind", "ice")
    try:
        if kind == "ice":
            return IceEmissionCurve(
                a=float(spec["a"]), b=float(spec["b"]), c=float(spec["c"]), d=float(spec["d"]),
                e=float(spec.get("e", 0.0)), f=float(spec.get("f", 0.0)), g=float(spec.get("g", 0.0)),
                k=float(spec.get("k", 1.0)), v_lo=v_lo, v_hi=v_hi, name=name,
            )
        if kind == "ev":
            return EvPowerCurve(
                alpha0=float(spec["alpha0"]), alpha1=float(spec["alpha1"]),
                alpha2=float(spec["alpha2"]), alpha3=float(spec["alpha3"]),
                v_lo=v_lo, v_hi=v_hi, name=name,
            )
        if kind == "quadratic":
            return QuadraticCost(
                center=float(spec["center"]), scale=float(spec.get("scale", 1.0)),
                offset=float(spec.get("offset", 0.0)), name=name,
            )
    except KeyError as missing:
        raise ConfigError(f"curve_definitions.{name}", f"missing field {missing}") from None
    raise ConfigError(f"curve_definitions.{name}", f"unknown curve kind {kind!r}")


# -- loading -------------------------------------------------------------------


def scenario_from_dict(data: dict, default_name: str = "scenario") -> Scenario:
    try:
        road_d = data.get("road") or {}
        sections = tuple(
            RoadSection(
                name=str(s.get("name", f"S{i}")),
                length_m=float(s["length_m"]),
                controlled=bool(s.get("controlled", False)),
                lanes=int(s.get("lanes", 4)),
            )
            for i, s in enumerate(road_d.get("sections", []))
        )
        road = RoadLayout(sections=sections, wrap=bool(road_d.get("wrap", False)))

        cons_d = data.get("consensus") or {}
        consensus = ConsensusParams(
            eta=float(cons_d.get("eta", 0.001)),
            mu=None if cons_d.get("mu") is None else float(cons_d["mu"]),
            v_lo=float(cons_d.get("v_lo_kmh", DEFAULT_SPEED_RANGE[0])),
            v_hi=float(cons_d.get("v_hi_kmh", DEFAULT_SPEED_RANGE[1])),
            epsilon_consensus=float(cons_d.get("epsilon_consensus_kmh", 0.1)),
            hold_rounds=int(cons_d.get("hold_rounds", 10)),
            eta_mode=str(cons_d.get("eta_mode", "fixed")),
        )

        comm_d = data.get("communication") or {"model": "complete"}
        communication = CommModel(
            model=str(comm_d.get("model", "complete")),
            radius_m=None if comm_d.get("radius_m") is None else float(comm_d["radius_m"]),
            p_edge=None if comm_d.get("p_edge") is None else float(comm_d["p_edge"]),
        )

        fleet_d = data.get("fleet") or {}
        fleet = FleetConfig(
            mode=str(fleet_d.get("mode", "fixed")),
            count=None if fleet_d.get("count") is None else int(fleet_d["count"]),
            curve_counts=fleet_d.get("curve_counts"),
            curve_mix=fleet_d.get("curve_mix"),
            vehicle_types=list(fleet_d.get("vehicle_types", DEFAULT_VEHICLE_TYPES)),
            initial_speed_kmh=fleet_d.get("initial_speed_kmh"),
            free_speed_kmh=fleet_d.get("free_speed_kmh"),
            placement=str(fleet_d.get("placement", "even")),
            spawn_period_s=None if fleet_d.get("spawn_period_s") is None else float(fleet_d["spawn_period_s"]),
            spawn_cutoff_s=None if fleet_d.get("spawn_cutoff_s") is None else float(fleet_d["spawn_cutoff_s"]),
        )

        ev_d = data.get("ev")
        ev = None
        if ev_d is not None:
            ev = EvConfig(
                base_alpha=tuple(float(x) for x in ev_d.get("base_alpha", (0.56, 0.06, 2.0e-4, 1.2e-5))),
                ancillary_range_kw=tuple(float(x) for x in ev_d.get("ancillary_range_kw", (0.2, 2.2))),
                passenger_range=tuple(int(x) for x in ev_d.get("passenger_range", (1, 5))),
                passenger_mass_kg=float(ev_d.get("passenger_mass_kg", 80.0)),
                base_mass_kg=float(ev_d.get("base_mass_kg", 1300.0)),
                phase_rounds=tuple(int(x) for x in ev_d.get("phase_rounds", (1200, 1200, 1200))),
                phase2_offset_kmh=float(ev_d.get("phase2_offset_kmh", -15.0)),
                phase3_offset_kmh=float(ev_d.get("phase3_offset_kmh", 15.0)),
                phase1_forced=bool(ev_d.get("phase1_forced", False)),
            )

        return Scenario(
            name=str(data.get("name", default_name)),
            seed=int(data.get("seed", 0)),
            duration_s=float(data["duration_s"]),
            activation_time_s=float(data.get("activation_time_s", 0.0)),
            road=road,
            consensus=consensus,
            communication=communication,
            fleet=fleet,
            compliance=float(data.get("compliance", 1.0)),
            dt_s=float(data.get("dt_s", 1.0)),
            ma_window=int(data.get("ma_window", 500)),
            ev=ev,
            curve_definitions=dict(data.get("curve_definitions") or {}),
        )
    except ConfigError:
        raise
    except KeyError as missing:
        raise ConfigError(str(missing), "required field missing") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError("<scenario>", f"malformed value: {exc}") from None


def load_scenario(path_or_name: str | Path) -> Scenario:
    """Load a scenario from a JSON file path or a shipped scenario name."""
    p = Path(path_or_name)
    if p.suffix == ".json" or p.exists():
        data = json.loads(p.read_text(encoding="utf-8"))
        return scenario_from_dict(data, default_name=p.stem)
    return load_shipped(str(path_or_name))


def load_shipped(name: str) -> Scenario:
    ref = resources.files("fleetspeed") / "scenarios" / f"{name}.json"
    if not ref.is_file():
        raise ConfigError("scenario", f"no shipped scenario named {name!r}; have {shipped_names()}")
    return scenario_from_dict(json.loads(ref.read_text(encoding="utf-8")), default_name=name)


def shipped_names() -> list[str]:
    base = resources.files("fleetspeed") / "scenarios"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))
