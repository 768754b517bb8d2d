"""Desk-scale mobility: road sections, vehicle spawning, bounded-acceleration
speed tracking and emission/energy accounting.

Vehicles are non-interacting points with per-type acceleration limits. There
is deliberately no car-following or lane-change model: cost rates depend only
on a vehicle's own speed, so interaction effects are second order at the
densities simulated here. This is the largest simplification relative to a
full microsimulator and the reason aggregate percentages are only matched
loosely.

Scalar operations in this module define the semantics; the simulation loop
runs their batch equivalents from `kernels` (equivalence is covered by
tests).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost_models import CostFunction
from .errors import ConfigError

KMH_PER_MS = 3.6


@dataclass(frozen=True)
class VehicleType:
    name: str
    accel_ms2: float
    decel_ms2: float
    length_m: float

    def __post_init__(self):
        if self.accel_ms2 <= 0.0 or self.decel_ms2 <= 0.0:
            raise ConfigError("vehicle_type", f"accel/decel must be positive ({self.name})")

    @property
    def accel_kmh_s(self) -> float:
        return self.accel_ms2 * KMH_PER_MS

    @property
    def decel_kmh_s(self) -> float:
        return self.decel_ms2 * KMH_PER_MS


# The four passenger-car dynamics presets used throughout the highway runs.
VEHICLE_TYPE_PRESETS: dict[str, VehicleType] = {
    "type1": VehicleType("type1", 2.15, 5.5, 4.54),
    "type2": VehicleType("type2", 1.22, 5.0, 4.51),
    "type3": VehicleType("type3", 1.75, 6.1, 4.45),
    "type4": VehicleType("type4", 2.45, 6.1, 4.48),
}

# Default dynamics for the EV fleet (config-overridable).
EV_VEHICLE_TYPE = VehicleType("ev", 2.0, 5.0, 4.5)


@dataclass(frozen=True)
class VehicleSpec:
    vehicle_id: int
    vehicle_type: VehicleType
    curve: CostFunction
    compliant: bool
    free_speed_kmh: float


@dataclass(frozen=True)
class RoadSection:
    name: str
    length_m: float
    controlled: bool
    lanes: int = 4

    def __post_init__(self):
        if self.length_m <= 0.0:
            raise ConfigError("road.sections", f"section {self.name!r} must have positive length")
        if self.lanes < 1:
            raise ConfigError("road.sections", f"section {self.name!r} needs at least one lane")


@dataclass(frozen=True)
class RoadLayout:
    sections: tuple[RoadSection, ...]
    wrap: bool = False  # circular road: vehicles loop instead of exiting

    def __post_init__(self):
        if not self.sections:
            raise ConfigError("road.sections", "need at least one section")

    @property
    def total_length_m(self) -> float:
        return float(sum(s.length_m for s in self.sections))

    def boundaries(self) -> np.ndarray:
        """Cumulative section end positions, metres."""
        return np.cumsum([s.length_m for s in self.sections])

    def section_index(self, position_m: float) -> int:
        idx = int(np.searchsorted(self.boundaries(), position_m, side="right"))
        return min(idx, len(self.sections) - 1)

    def controlled_flags(self) -> np.ndarray:
        return np.array([s.controlled for s in self.sections], dtype=bool)

    def section_names(self) -> list[str]:
        return [s.name for s in self.sections]


@dataclass
class VehicleState:
    position_m: float          # road coordinate (ring coordinate when wrapped)
    speed_kmh: float
    section_index: int
    odometer_m: float = 0.0    # monotone distance driven
    cumulative_cost: float = 0.0  # grams or kWh


def spawn_schedule(period_s: float, cutoff_s: float) -> np.ndarray:
    """Deterministic arrival times k*period for k*period < cutoff."""
    if period_s <= 0.0:
        raise ConfigError("fleet.spawn_period_s", f"must be positive, got {period_s}")
    if cutoff_s <= 0.0:
        return np.zeros(0)
    n = int(np.ceil(cutoff_s / period_s))
    times = np.arange(n) * period_s
    return times[times < cutoff_s]


def target_speed(spec: VehicleSpec, in_controlled_section: bool, advisory_active: bool,
                 recommendation_kmh: float | None) -> float:
    """The speed a driver aims for this round.

    Compliant vehicles track the recommendation while the advisory is active
    in their section; everyone else (and every vehicle in an uncontrolled
    section) holds their free speed.
    """
    if in_controlled_section and advisory_active and spec.compliant and recommendation_kmh is not None:
        return recommendation_kmh
    return spec.free_speed_kmh


def kinematic_step(state: VehicleState, target_kmh: float, spec: VehicleSpec, dt_s: float) -> VehicleState:
    """Advance one vehicle by dt: speed moves toward the target by at most
    accel*dt upward or decel*dt downward; position advances by the
    trapezoidal mean of old and new speed."""
    if dt_s <= 0.0:
        raise ValueError(f"dt must be positive, got {dt_s}")
    dv = target_kmh - state.speed_kmh
    dv = min(dv, spec.vehicle_type.accel_kmh_s * dt_s)
    dv = max(dv, -(spec.vehicle_type.decel_kmh_s * dt_s))
    v_new = state.speed_kmh + dv
    dist_m = (state.speed_kmh + v_new) * (0.5 * dt_s / 3.6)
    return VehicleState(
        position_m=state.position_m + dist_m,
        speed_kmh=v_new,
        section_index=state.section_index,
        odometer_m=state.odometer_m + dist_m,
        cumulative_cost=state.cumulative_cost,
    )


def accrue_cost(curve: CostFunction, speed_kmh: float, dist_m: float) -> float:
    """Cost accrued over one step: rate at the driven speed times distance.

    Zero distance accrues exactly zero (the rate is never evaluated for a
    stopped vehicle)."""
    if dist_m == 0.0:
        return 0.0
    return curve.cost(speed_kmh) * (dist_m * 0.001)


@dataclass
class MetricsAccumulator:
    """Per-section and per-vehicle cost accounting with a moving average.

    All accumulation happens in fixed (ascending vehicle id) order so reruns
    are bit-identical and totals recompute exactly from traces.
    """

    section_names: list[str]
    n_vehicles: int
    ma_window: int = 500

    def __post_init__(self):
        k = len(self.section_names)
        self.section_totals = np.zeros(k)            # g or kWh, time-integrated
        self.per_vehicle_totals = np.zeros(self.n_vehicles)
        self.per_round_rate: list[float] = []        # fleet summed cost rate
        self.per_round_ma: list[float] = []
        self.per_round_section_rate: list[np.ndarray] = []
        self._ma_sum = 0.0

    def accrue(
        self,
        vehicle_ids: np.ndarray,
        section_idx: np.ndarray,
        amounts: np.ndarray,
        rates: np.ndarray,
    ) -> None:
        from .kernels import active as K

        total_rate = K.sequential_sum(rates)
        sec_rate = np.zeros(len(self.section_names))
        sec_amount = np.zeros(len(self.section_names))
        K.bincount_add(section_idx.astype(np.int64), rates, sec_rate)
        K.bincount_add(section_idx.astype(np.int64), amounts, sec_amount)
        self.accrue_precomputed(vehicle_ids, amounts, sec_rate, sec_amount, total_rate)

    def accrue_precomputed(
        self,
        vehicle_ids: np.ndarray,
        amounts: np.ndarray,
        sec_rate: np.ndarray,
        sec_amount: np.ndarray,
        total_rate: float,
    ) -> None:
        """Batch path: per-section splits and the fleet rate arrive already
        reduced (in ascending id order) from the round kernel."""
        self.section_totals += sec_amount
        self.per_vehicle_totals[vehicle_ids] += amounts
        self._push_rate(total_rate, sec_rate)

    def _push_rate(self, total_rate: float, sec_rate: np.ndarray) -> None:
        self.per_round_rate.append(total_rate)
        self.per_round_section_rate.append(sec_rate)
        self._ma_sum += total_rate
        if len(self.per_round_rate) > self.ma_window:
            self._ma_sum -= self.per_round_rate[-1 - self.ma_window]
        self.per_round_ma.append(self._ma_sum / min(len(self.per_round_rate), self.ma_window))

    def fleet_total(self) -> float:
        from .kernels import active as K

        return K.sequential_sum(self.per_vehicle_totals)

    def totals_by_section(self) -> dict[str, float]:
        return {name: float(t) for name, t in zip(self.section_names, self.section_totals)}
