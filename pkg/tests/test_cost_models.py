"""Cost curve behaviour: evaluation, derivatives, convexity, minima."""

import numpy as np
import pytest

from fleetspeed.cost_models import (
    DerivativeBounds,
    EvPowerCurve,
    IceEmissionCurve,
    QuadraticCost,
    estimate_bounds,
    eval_cost,
    eval_derivative,
    ev_fleet_curve,
    find_min_speed,
    finite_difference_derivative,
    ice_preset,
    PRESET_NAMES,
)
from fleetspeed.errors import ConvexityViolation, DomainError


def grid_argmin(curve, lo, hi, points):
    grid = np.linspace(lo, hi, points)
    vals = np.array([curve.cost(v) for v in grid])
    return float(grid[np.argmin(vals)])


class TestEvalCost:
    def test_r007_at_10(self):
        # direct substitution of the R007 row: 226.06 + 31.583 + 2.9263 + 0.30199
        assert eval_cost(ice_preset("R007"), 10.0) == pytest.approx(260.87129, abs=1e-6)

    def test_ev_two_term(self):
        curve = EvPowerCurve(0.5, 0.0, 0.0, 0.25, v_lo=0.5, v_hi=10.0)
        assert eval_cost(curve, 1.0) == pytest.approx(0.75)

    def test_zero_scale_ice_is_zero_everywhere(self):
        curve = IceEmissionCurve(a=100.0, b=1.0, c=1.0, d=1.0, k=0.0)
        for v in (5.0, 20.0, 77.0, 130.0):
            assert eval_cost(curve, v) == 0.0

    @pytest.mark.parametrize("v", [4.9, 130.1, 0.0, -3.0])
    def test_domain_errors(self, v):
        with pytest.raises(DomainError):
            eval_cost(ice_preset("R007"), v)


class TestEvalDerivative:
    def test_r007_near_minimum(self):
        assert abs(eval_derivative(ice_preset("R007"), 59.0)) < 5e-3

    def test_ev_stationary_point(self):
        curve = EvPowerCurve(0.5, 0.0, 0.0, 0.25, v_lo=0.5, v_hi=10.0)
        # v* = (alpha0 / (2 alpha3))^(1/3) = 1
        assert eval_derivative(curve, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_quadratic_vertex(self):
        assert eval_derivative(QuadraticCost(center=20.0), 20.0) == 0.0

    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_matches_finite_differences_ice(self, name):
        curve = ice_preset(name)
        for v in np.linspace(6.0, 129.0, 100):
            analytic = eval_derivative(curve, v)
            numeric = finite_difference_derivative(curve, v)
            assert analytic == pytest.approx(numeric, rel=1e-6, abs=1e-9)

    def test_matches_finite_differences_ev(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            curve = EvPowerCurve(
                alpha0=rng.uniform(0.2, 2.2),
                alpha1=rng.uniform(0.0, 0.1),
                alpha2=rng.uniform(0.0, 5e-4),
                alpha3=rng.uniform(1e-6, 5e-5),
            )
            for v in np.linspace(6.0, 129.0, 100):
                assert eval_derivative(curve, v) == pytest.approx(
                    finite_difference_derivative(curve, v), rel=1e-6, abs=1e-9
                )


class TestEstimateBounds:
    def test_quadratic_constant_curvature(self):
        b = estimate_bounds(QuadraticCost(center=20.0), (0.1, 100.0))
        assert b.d_min == pytest.approx(2.0)
        assert b.d_max == pytest.approx(2.0)

    def test_r021_is_convex_on_40_100(self):
        b = estimate_bounds(ice_preset("R021"), (40.0, 100.0))
        assert b.d_min > 0.0
        assert b.d_max >= b.d_min

    def test_concave_construction_rejected(self):
        # a = d = 0 leaves zero curvature regardless of the negative linear term
        with pytest.raises(ConvexityViolation):
            IceEmissionCurve(a=0.0, b=1.0, c=-10.0, d=0.0)

    def test_bounds_ordering_enforced(self):
        with pytest.raises(ConvexityViolation):
            DerivativeBounds(d_min=2.0, d_max=1.0)
        with pytest.raises(ConvexityViolation):
            DerivativeBounds(d_min=0.0, d_max=1.0)

    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_all_presets_construct(self, name):
        # negative c rows (R014/R021/R040) must still pass the convexity check
        curve = ice_preset(name)
        assert estimate_bounds(curve, (curve.v_lo, curve.v_hi)).d_min > 0.0

    def test_mean_slope_within_bounds(self):
        # the defining growth-rate property, sampled: (f'(a)-f'(b))/(a-b) in [d_min, d_max]
        rng = np.random.default_rng(7)
        curves = [ice_preset(n) for n in PRESET_NAMES]
        curves.append(EvPowerCurve(1.1, 0.06, 2e-4, 1.2e-5))
        for curve in curves:
            b = estimate_bounds(curve, (5.0, 130.0))
            for _ in range(200):
                v1, v2 = rng.uniform(5.0, 130.0, 2)
                if v1 == v2:
                    continue
                slope = (curve.derivative(v1) - curve.derivative(v2)) / (v1 - v2)
                assert b.d_min - 1e-9 <= slope <= b.d_max + 1e-9


class TestFindMinSpeed:
    def test_quadratic(self):
        res = find_min_speed(QuadraticCost(center=20.0), (0.1, 100.0))
        assert res.interior
        assert res.speed == pytest.approx(20.0, abs=1e-6)

    def test_r007_bisection(self):
        res = find_min_speed(ice_preset("R007"), (40.0, 80.0), tol=1e-3)
        assert res.interior
        assert res.speed == pytest.approx(59.0, abs=0.1)

    def test_ev_cube_root(self):
        curve = EvPowerCurve(0.5, 0.0, 0.0, 0.25, v_lo=0.1, v_hi=10.0)
        res = find_min_speed(curve, (0.1, 10.0))
        assert res.speed == pytest.approx(1.0, abs=1e-6)

    def test_boundary_flag_on_monotone_curve(self):
        res = find_min_speed(QuadraticCost(center=-50.0), (0.0, 100.0))
        assert not res.interior
        assert res.speed == 0.0

    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_agrees_with_grid_scan(self, name):
        curve = ice_preset(name)
        res = find_min_speed(curve, (5.0, 130.0), tol=1e-6)
        points = 10_000
        step = (130.0 - 5.0) / (points - 1)
        assert abs(res.speed - grid_argmin(curve, 5.0, 130.0, points)) <= step


class TestEvFleetCurve:
    def test_passengers_scale_linear_term(self):
        base = (0.56, 0.06, 2e-4, 1.2e-5)
        one = ev_fleet_curve(base, ancillary_kw=1.0, passengers=1)
        five = ev_fleet_curve(base, ancillary_kw=1.0, passengers=5)
        assert five.alpha1 > one.alpha1
        assert five.alpha1 == pytest.approx(0.06 * (1300 + 400) / 1300)
        assert five.alpha0 == one.alpha0 == 1.0

    def test_ancillary_must_be_positive(self):
        with pytest.raises(ConvexityViolation):
            ev_fleet_curve((0.56, 0.06, 2e-4, 1.2e-5), ancillary_kw=0.0, passengers=1)

    def test_ancillary_range_convex(self):
        for kw in (0.2, 1.2, 2.2):
            curve = ev_fleet_curve((0.56, 0.06, 2e-4, 1.2e-5), ancillary_kw=kw, passengers=3)
            assert estimate_bounds(curve, (5.0, 130.0)).d_min > 0.0
