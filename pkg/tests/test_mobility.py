"""Vehicle-level mobility semantics and metrics accounting."""

import numpy as np
import pytest

from fleetspeed.cost_models import ice_preset
from fleetspeed.errors import ConfigError
from fleetspeed.mobility import (
    VEHICLE_TYPE_PRESETS,
    MetricsAccumulator,
    RoadLayout,
    RoadSection,
    VehicleSpec,
    VehicleState,
    accrue_cost,
    kinematic_step,
    spawn_schedule,
    target_speed,
)


def spec(compliant=True, free=90.0, vtype="type1"):
    return VehicleSpec(0, VEHICLE_TYPE_PRESETS[vtype], ice_preset("R007"), compliant, free)


class TestVehicleTypes:
    def test_preset_values(self):
        t1 = VEHICLE_TYPE_PRESETS["type1"]
        assert (t1.accel_ms2, t1.decel_ms2, t1.length_m) == (2.15, 5.5, 4.54)
        t2 = VEHICLE_TYPE_PRESETS["type2"]
        assert (t2.accel_ms2, t2.decel_ms2, t2.length_m) == (1.22, 5.0, 4.51)
        t3 = VEHICLE_TYPE_PRESETS["type3"]
        assert (t3.accel_ms2, t3.decel_ms2, t3.length_m) == (1.75, 6.1, 4.45)
        t4 = VEHICLE_TYPE_PRESETS["type4"]
        assert (t4.accel_ms2, t4.decel_ms2, t4.length_m) == (2.45, 6.1, 4.48)


class TestSpawnSchedule:
    def test_650_arrivals(self):
        times = spawn_schedule(2.0, 1300.0)
        assert len(times) == 650
        assert times[0] == 0.0
        assert times[-1] == 1298.0

    def test_zero_cutoff(self):
        assert len(spawn_schedule(2.0, 0.0)) == 0

    def test_bad_period(self):
        with pytest.raises(ConfigError):
            spawn_schedule(0.0, 100.0)


class TestTargetSpeed:
    def test_compliant_in_controlled_section(self):
        assert target_speed(spec(), True, True, 63.5) == 63.5

    def test_non_compliant_keeps_free_speed(self):
        assert target_speed(spec(compliant=False), True, True, 63.5) == 90.0

    def test_uncontrolled_section(self):
        assert target_speed(spec(), False, True, 63.5) == 90.0

    def test_advisory_off(self):
        assert target_speed(spec(), True, False, 63.5) == 90.0


class TestKinematicStep:
    def test_at_target_advances_at_speed(self):
        st = VehicleState(position_m=100.0, speed_kmh=72.0, section_index=0)
        nxt = kinematic_step(st, 72.0, spec(), 1.0)
        assert nxt.speed_kmh == 72.0
        assert nxt.position_m == pytest.approx(100.0 + 20.0)  # 72 km/h = 20 m/s

    def test_acceleration_saturates(self):
        st = VehicleState(position_m=0.0, speed_kmh=80.0, section_index=0)
        nxt = kinematic_step(st, 100.0, spec(vtype="type1"), 1.0)
        assert nxt.speed_kmh == pytest.approx(87.74)  # 80 + 2.15*3.6

    def test_deceleration_saturates(self):
        st = VehicleState(position_m=0.0, speed_kmh=100.0, section_index=0)
        nxt = kinematic_step(st, 10.0, spec(vtype="type1"), 1.0)
        assert nxt.speed_kmh == pytest.approx(100.0 - 5.5 * 3.6)

    def test_trapezoidal_distance(self):
        st = VehicleState(position_m=0.0, speed_kmh=80.0, section_index=0)
        nxt = kinematic_step(st, 100.0, spec(), 1.0)
        assert nxt.position_m == pytest.approx((80.0 + 87.74) * 0.5 / 3.6)

    def test_odometer_monotone(self):
        st = VehicleState(position_m=0.0, speed_kmh=50.0, section_index=0)
        for _ in range(20):
            prev = st.odometer_m
            st = kinematic_step(st, 5.0, spec(), 1.0)
            assert st.odometer_m >= prev


class TestAccrueCost:
    def test_single_step_matches_curve(self):
        curve = ice_preset("R007")
        # 1 km at a constant 59 km/h accrues exactly the per-km rate
        assert accrue_cost(curve, 59.0, 1000.0) == pytest.approx(curve.cost(59.0))

    def test_zero_distance_zero_accrual(self):
        assert accrue_cost(ice_preset("R007"), 59.0, 0.0) == 0.0

    def test_linearity_in_vehicles(self):
        one = accrue_cost(ice_preset("R021"), 70.0, 250.0)
        assert one + one == pytest.approx(2 * one)


class TestRoadLayout:
    def layout(self):
        return RoadLayout(
            sections=(
                RoadSection("L1", 5000.0, False),
                RoadSection("L2", 5000.0, True),
                RoadSection("L3", 5000.0, False),
            )
        )

    def test_section_lookup(self):
        road = self.layout()
        assert road.section_index(0.0) == 0
        assert road.section_index(4999.9) == 0
        assert road.section_index(5000.0) == 1
        assert road.section_index(14999.0) == 2

    def test_total_length(self):
        assert self.layout().total_length_m == 15000.0

    def test_rejects_empty(self):
        with pytest.raises(ConfigError):
            RoadLayout(sections=())

    def test_rejects_nonpositive_length(self):
        with pytest.raises(ConfigError):
            RoadSection("X", 0.0, False)


class TestMetricsAccumulator:
    def test_totals_are_consistent(self):
        acc = MetricsAccumulator(["L1", "L2"], n_vehicles=3, ma_window=10)
        rng = np.random.default_rng(4)
        contributions = []
        for _ in range(50):
            amounts = rng.uniform(0, 5, 3)
            sections = rng.integers(0, 2, 3).astype(np.int64)
            acc.accrue(np.arange(3), sections, amounts, amounts.copy())
            contributions.append((sections.copy(), amounts.copy()))
        # conservation: section split and per-vehicle split agree with replay
        replay_sections = np.zeros(2)
        replay_vehicles = np.zeros(3)
        for sections, amounts in contributions:
            np.add.at(replay_sections, sections, amounts)
            replay_vehicles += amounts
        assert np.array_equal(acc.per_vehicle_totals, replay_vehicles)
        np.testing.assert_allclose(acc.section_totals, replay_sections, rtol=1e-15)

    def test_moving_average_window(self):
        acc = MetricsAccumulator(["S"], n_vehicles=1, ma_window=3)
        for rate in (1.0, 2.0, 3.0, 4.0):
            acc._push_rate(rate, np.array([rate]))
        assert acc.per_round_ma == pytest.approx([1.0, 1.5, 2.0, 3.0])
