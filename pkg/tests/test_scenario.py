"""Scenario loading, validation, defaults and round-tripping."""

import json

import pytest

from fleetspeed.errors import ConfigError
from fleetspeed.scenario import (
    Scenario,
    load_scenario,
    load_shipped,
    scenario_from_dict,
    shipped_names,
)


def test_shipped_inventory():
    names = shipped_names()
    for expected in (
        "static_fig3",
        "static_fig4",
        "static_radius",
        "dynamic_case1",
        "dynamic_case2",
        "dynamic_case3",
        "ev_threephase",
    ):
        assert expected in names


class TestShippedConfigs:
    def test_static_fig3_contents(self):
        sc = load_shipped("static_fig3")
        assert sc.fleet.curve_counts == {"R007": 32, "R021": 8}
        assert sc.activation_time_s == 300.0
        assert sc.duration_s == 600.0
        assert sc.consensus.eta == 0.001
        assert sc.consensus.mu == 0.01

    def test_dynamic_case1_contents(self):
        sc = load_shipped("dynamic_case1")
        assert sc.fleet.free_speed_kmh == [80.0, 100.0]
        assert sc.fleet.spawn_period_s == 2.0
        assert sc.fleet.spawn_cutoff_s == 1300.0
        assert len(sc.road.sections) == 3
        assert [s.controlled for s in sc.road.sections] == [False, True, False]

    def test_ev_defaults(self):
        sc = load_shipped("ev_threephase")
        assert sc.fleet.count == 100
        assert sc.consensus.mu == 0.001
        assert sc.consensus.eta == 0.001
        assert sc.ev.ancillary_range_kw == (0.2, 2.2)
        assert sc.ev.passenger_range == (1, 5)

    @pytest.mark.parametrize("name", [
        "static_fig3", "static_fig4", "static_radius",
        "dynamic_case1", "dynamic_case2", "dynamic_case3", "ev_threephase",
    ])
    def test_round_trip(self, name, tmp_path):
        sc = load_shipped(name)
        path = tmp_path / f"{name}.json"
        sc.dump(path)
        again = load_scenario(path)
        assert again == sc
        # and a second hop stays identical
        path2 = tmp_path / "again.json"
        again.dump(path2)
        assert json.loads(path.read_text()) == json.loads(path2.read_text())


class TestValidation:
    def base(self):
        return load_shipped("static_fig3").to_dict()

    def test_compliance_out_of_range(self):
        d = self.base()
        d["compliance"] = 1.5
        with pytest.raises(ConfigError) as err:
            scenario_from_dict(d)
        assert "compliance" in str(err.value)

    def test_activation_after_end(self):
        d = self.base()
        d["activation_time_s"] = 600.0
        with pytest.raises(ConfigError) as err:
            scenario_from_dict(d)
        assert "activation" in str(err.value)

    def test_unknown_curve(self):
        d = self.base()
        d["fleet"]["curve_counts"] = {"R999": 4}
        with pytest.raises(ConfigError) as err:
            scenario_from_dict(d)
        assert "R999" in str(err.value)

    def test_unknown_comm_model(self):
        d = self.base()
        d["communication"] = {"model": "telepathy"}
        with pytest.raises(ConfigError):
            scenario_from_dict(d)

    def test_radius_model_needs_radius(self):
        d = self.base()
        d["communication"] = {"model": "radius"}
        with pytest.raises(ConfigError):
            scenario_from_dict(d)

    def test_spawn_needs_free_speeds(self):
        d = load_shipped("dynamic_case1").to_dict()
        d["fleet"]["free_speed_kmh"] = None
        with pytest.raises(ConfigError):
            scenario_from_dict(d)

    def test_ev_phases_must_cover_duration(self):
        d = load_shipped("ev_threephase").to_dict()
        d["ev"]["phase_rounds"] = [100, 100, 100]
        with pytest.raises(ConfigError):
            scenario_from_dict(d)

    def test_missing_duration(self):
        d = self.base()
        del d["duration_s"]
        with pytest.raises(ConfigError):
            scenario_from_dict(d)


class TestCustomCurves:
    def test_inline_definition_resolves(self):
        d = load_shipped("static_fig3").to_dict()
        d["curve_definitions"] = {
            "MINE": {"kind": "ice", "a": 2000.0, "b": 30.0, "c": 0.2, "d": 0.003}
        }
        d["fleet"]["curve_counts"] = {"MINE": 40}
        sc = scenario_from_dict(d)
        curve = sc.resolve_curve("MINE")
        assert curve.name == "MINE"
        assert curve.a == 2000.0

    def test_quadratic_definition(self):
        d = load_shipped("static_fig3").to_dict()
        d["curve_definitions"] = {"Q": {"kind": "quadratic", "center": 70.0}}
        d["fleet"]["curve_counts"] = {"Q": 40}
        sc = scenario_from_dict(d)
        assert sc.resolve_curve("Q").center == 70.0

    def test_bad_kind(self):
        d = load_shipped("static_fig3").to_dict()
        d["curve_definitions"] = {"BAD": {"kind": "spline"}}
        d["fleet"]["curve_counts"] = {"BAD": 1}
        with pytest.raises(ConfigError):
            scenario_from_dict(d)


def test_with_overrides():
    sc = load_shipped("dynamic_case1")
    assert sc.with_overrides(compliance=0.5).compliance == 0.5
    assert sc.with_overrides(radius_m=150.0).communication.radius_m == 150.0
    assert sc.with_overrides(seed=9).seed == 9
    # original untouched
    assert sc.compliance == 1.0
