"""Centralized ground truth: solve for the common speed that zeroes the summed
cost gradients, independently of the distributed iteration.

Bisection is used rather than Newton because the combustion gradients carry a
steep 1/v^2 term near the low end of the range; bisection is unconditionally
convergent there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost_models import CostFunction, fleet_coefficients
from .errors import EmptyFleet


@dataclass(frozen=True)
class OptimumReport:
    y_star: float            # km/h
    gradient_residual: float  # |sum of derivatives at y_star|
    total_cost_at_opt: float  # summed cost rate at y_star
    at_boundary: bool = False

    def __str__(self) -> str:
        where = " (boundary)" if self.at_boundary else ""
        return (
            f"y* = {self.y_star:.4f} km/h{where}, "
            f"|sum f'| = {self.gradient_residual:.3e}, "
            f"total cost rate = {self.total_cost_at_opt:.4f}"
        )


def _gradient_sum(costs: list[CostFunction], y: float) -> float:
    return sum(c.derivative(y) for c in costs)


def _cost_sum(costs: list[CostFunction], y: float) -> float:
    return sum(c.cost(y) for c in costs)


def centralized_optimum(
    costs: list[CostFunction],
    speed_range: tuple[float, float],
    tol: float = 1e-3,
) -> OptimumReport:
    """Bisect the summed gradient over `speed_range`.

    If the gradient changes sign the root is bracketed to within `tol` km/h;
    otherwise the boundary minimising the summed cost is reported with
    at_boundary=True.
    """
    if not costs:
        raise EmptyFleet("centralized_optimum needs at least one cost curve")
    lo, hi = speed_range
    g_lo = _gradient_sum(costs, lo)
    g_hi = _gradient_sum(costs, hi)
    if g_lo >= 0.0 and g_hi >= 0.0:
        y = lo if _cost_sum(costs, lo) <= _cost_sum(costs, hi) else hi
        return OptimumReport(y, abs(_gradient_sum(costs, y)), _cost_sum(costs, y), True)
    if g_lo <= 0.0 and g_hi <= 0.0:
        y = lo if _cost_sum(costs, lo) <= _cost_sum(costs, hi) else hi
        return OptimumReport(y, abs(_gradient_sum(costs, y)), _cost_sum(costs, y), True)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _gradient_sum(costs, mid) < 0.0:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    return OptimumReport(y, abs(_gradient_sum(costs, y)), _cost_sum(costs, y), False)


def grid_scan_optimum(
    costs: list[CostFunction],
    speed_range: tuple[float, float],
    points: int = 100_000,
) -> float:
    """Brute-force argmin of the summed cost over a uniform grid.

    This is the independent cross-check for `centralized_optimum`: no root
    finding, no derivatives, just evaluation.
    """
    if points < 2:
        raise ValueError(f"need at least 2 grid points, got {points}")
    if not costs:
        raise EmptyFleet("grid_scan_optimum needs at least one cost curve")
    lo, hi = speed_range
    grid = np.linspace(lo, hi, points)
    coeffs = fleet_coefficients(costs).sum(axis=0)  # summing curves commutes with evaluation
    total = coeffs[1] + grid * (
        coeffs[2] + grid * (coeffs[3] + grid * (coeffs[4] + grid * (coeffs[5] + grid * coeffs[6])))
    )
    if coeffs[0] != 0.0:
        total = total + coeffs[0] / grid
    return float(grid[int(np.argmin(total))])
