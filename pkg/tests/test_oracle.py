"""Centralized optimum vs brute force, on fixed and random fleets."""

import numpy as np
import pytest

from fleetspeed.cost_models import EvPowerCurve, QuadraticCost, ice_preset, PRESET_NAMES
from fleetspeed.errors import EmptyFleet
from fleetspeed.oracle import centralized_optimum, grid_scan_optimum


def _random_fleet(rng, n):
    curves = []
    for _ in range(n):
        if rng.random() < 0.7:
            curves.append(ice_preset(str(rng.choice(PRESET_NAMES))))
        else:
            curves.append(
                EvPowerCurve(
                    alpha0=rng.uniform(0.2, 2.2),
                    alpha1=rng.uniform(0.0, 0.1),
                    alpha2=rng.uniform(0.0, 5e-4),
                    alpha3=rng.uniform(1e-6, 5e-5),
                )
            )
    return curves


def test_identical_quadratics():
    fleet = [QuadraticCost(center=42.0) for _ in range(7)]
    rep = centralized_optimum(fleet, (0.0, 100.0), tol=1e-6)
    assert rep.y_star == pytest.approx(42.0, abs=1e-5)
    assert not rep.at_boundary


def test_two_quadratics_average():
    fleet = [QuadraticCost(center=10.0), QuadraticCost(center=30.0)]
    rep = centralized_optimum(fleet, (0.0, 100.0), tol=1e-6)
    assert rep.y_star == pytest.approx(20.0, abs=1e-5)


def test_reference_static_fleet():
    # 32 R007 + 8 R021; the value the static experiment must reproduce
    fleet = [ice_preset("R007")] * 32 + [ice_preset("R021")] * 8
    rep = centralized_optimum(fleet, (40.0, 100.0), tol=1e-3)
    assert rep.y_star == pytest.approx(63.5660, abs=2e-3)
    assert rep.y_star == pytest.approx(63.5, abs=0.1)
    assert rep.gradient_residual < 0.1


def test_gradient_residual_reported():
    fleet = [ice_preset("R007")] * 3
    rep = centralized_optimum(fleet, (5.0, 130.0), tol=1e-6)
    assert rep.gradient_residual == pytest.approx(0.0, abs=1e-3)


def test_boundary_minimum():
    increasing = QuadraticCost(center=-10.0)  # monotone increasing on [0, 100]
    rep = centralized_optimum([increasing], (0.0, 100.0))
    assert rep.at_boundary
    assert rep.y_star == 0.0


def test_empty_fleet():
    with pytest.raises(EmptyFleet):
        centralized_optimum([], (5.0, 130.0))
    with pytest.raises(EmptyFleet):
        grid_scan_optimum([], (5.0, 130.0), points=100)


class TestGridScan:
    def test_quadratic(self):
        assert grid_scan_optimum([QuadraticCost(center=20.0)], (0.0, 100.0), points=100_000) == pytest.approx(
            20.0, abs=1e-3
        )

    def test_monotone_cost_picks_low_boundary(self):
        assert grid_scan_optimum([QuadraticCost(center=-5.0)], (0.0, 100.0), points=1000) == 0.0

    def test_fig4_mix_agrees_with_bisection(self):
        fleet = (
            [ice_preset("R014")] * 14 + [ice_preset("R021")] * 13 + [ice_preset("R040")] * 13
        )
        points = 100_000
        step = (130.0 - 5.0) / (points - 1)
        bis = centralized_optimum(fleet, (5.0, 130.0), tol=1e-4).y_star
        scan = grid_scan_optimum(fleet, (5.0, 130.0), points=points)
        assert abs(bis - scan) <= step

    def test_rejects_tiny_grid(self):
        with pytest.raises(ValueError):
            grid_scan_optimum([QuadraticCost(center=1.0)], (0.0, 10.0), points=1)


def test_bisection_matches_grid_on_random_fleets():
    rng = np.random.default_rng(20240105)
    points = 100_000
    step = (130.0 - 5.0) / (points - 1)
    for _ in range(100):
        fleet = _random_fleet(rng, int(rng.integers(1, 25)))
        bis = centralized_optimum(fleet, (5.0, 130.0), tol=1e-4).y_star
        scan = grid_scan_optimum(fleet, (5.0, 130.0), points=points)
        assert abs(bis - scan) <= step
