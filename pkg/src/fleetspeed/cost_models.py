"""Per-vehicle cost curves: CO2 grams/km for combustion cars, kWh/km for EVs.

Every curve is a Laurent polynomial in the speed v (km/h),

    cost(v) = c[0]/v + c[1] + c[2]*v + c[3]*v^2 + c[4]*v^3 + c[5]*v^4 + c[6]*v^5,

strictly convex on its speed interval. The combustion form divides a degree-6
polynomial by v; the EV form is steady-state power drawn at speed v divided by
v. Both reduce to the representation above, which is what the simulation
kernels consume (one coefficient row per vehicle).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvexityViolation, DomainError

# Default evaluation interval for shipped curves, km/h. Average-speed emission
# fits are only trustworthy in roughly this band; scenarios may override.
DEFAULT_SPEED_RANGE = (5.0, 130.0)

# Grid density used to vet convexity / bound curvature: 1000 interior samples
# plus both endpoints.
CURVATURE_GRID_POINTS = 1002


@dataclass(frozen=True)
class DerivativeBounds:
    """Positive lower/upper bounds on a curve's derivative slope, units cost
    per (km/h)^2. These are the growth-rate constants the gain rule needs."""

    d_min: float
    d_max: float

    def __post_init__(self):
        if not (0.0 < self.d_min <= self.d_max):
            raise ConvexityViolation(
                f"derivative-slope bounds must satisfy 0 < d_min <= d_max, "
                f"got ({self.d_min}, {self.d_max})"
            )


class CostFunction:
    """Common behaviour for all cost curves.

    Subclasses provide `laurent()` (the 7-vector of coefficients for powers
    v^-1 .. v^5), the speed interval [v_lo, v_hi], and a `label`.
    Curves are immutable after construction; evaluation is pure.
    """

    v_lo: float
    v_hi: float

    def laurent(self) -> np.ndarray:
        raise NotImplementedError

    def _check_domain(self, v: float) -> None:
        if not (self.v_lo <= v <= self.v_hi) or v <= 0.0:
            raise DomainError(
                f"{self.label}: speed {v} km/h outside [{self.v_lo}, {self.v_hi}]"
            )

    def cost(self, v: float) -> float:
        """Cost rate at speed v (g/km or kWh/km)."""
        self._check_domain(v)
        c = self.laurent()
        pole = c[0] / v if c[0] != 0.0 else 0.0  # curves without a 1/v term allow v = 0
        return float(
            pole + c[1] + v * (c[2] + v * (c[3] + v * (c[4] + v * (c[5] + v * c[6]))))
        )

    def derivative(self, v: float) -> float:
        """Analytic d(cost)/dv at speed v."""
        self._check_domain(v)
        c = self.laurent()
        pole = -c[0] / (v * v) if c[0] != 0.0 else 0.0
        return float(
            pole
            + c[2]
            + v * (2.0 * c[3] + v * (3.0 * c[4] + v * (4.0 * c[5] + v * 5.0 * c[6])))
        )

    def second_derivative(self, v: float) -> float:
        self._check_domain(v)
        c = self.laurent()
        pole = 2.0 * c[0] / (v * v * v) if c[0] != 0.0 else 0.0
        return float(
            pole
            + 2.0 * c[3]
            + v * (6.0 * c[4] + v * (12.0 * c[5] + v * 20.0 * c[6]))
        )

    @property
    def label(self) -> str:
        return type(self).__name__

    def _validate_convexity(self) -> None:
        estimate_bounds(self, (self.v_lo, self.v_hi))


@dataclass(frozen=True)
class IceEmissionCurve(CostFunction):
    """Average-speed CO2 curve for a combustion vehicle.

    cost(v) = k*(a + b v + c v^2 + d v^3 + e v^4 + f v^5 + g v^6)/v, g/km for
    v in km/h. Strict convexity is checked numerically at construction rather
    than assumed: three of the four shipped coefficient rows carry a
    negative c.
    """

    a: float
    b: float
    c: float
    d: float
    e: float = 0.0
    f: float = 0.0
    g: float = 0.0
    k: float = 1.0
    v_lo: float = DEFAULT_SPEED_RANGE[0]
    v_hi: float = DEFAULT_SPEED_RANGE[1]
    name: str = ""

    def __post_init__(self):
        if not (0.0 < self.v_lo < self.v_hi):
            raise DomainError(f"invalid speed interval [{self.v_lo}, {self.v_hi}]")
        if self.k != 0.0:
            self._validate_convexity()

    def laurent(self) -> np.ndarray:
        k = self.k
        return np.array(
            [k * self.a, k * self.b, k * self.c, k * self.d, k * self.e, k * self.f, k * self.g],
            dtype=float,
        )

    @property
    def label(self) -> str:
        return self.name or "IceEmissionCurve"


@dataclass(frozen=True)
class EvPowerCurve(CostFunction):
    """Energy-per-km curve for an EV at steady speed.

    cost(v) = alpha0/v + alpha1 + alpha2 v + alpha3 v^2, kWh/km for v in km/h:
    constant ancillary draw spread over distance, rolling/drivetrain linear
    term, and the aerodynamic cube-of-speed power divided by v.
    """

    alpha0: float
    alpha1: float
    alpha2: float
    alpha3: float
    v_lo: float = DEFAULT_SPEED_RANGE[0]
    v_hi: float = DEFAULT_SPEED_RANGE[1]
    name: str = ""

    def __post_init__(self):
        if self.alpha0 <= 0.0:
            raise ConvexityViolation(
                f"ancillary term alpha0 must be positive, got {self.alpha0}"
            )
        if not (0.0 < self.v_lo < self.v_hi):
            raise DomainError(f"invalid speed interval [{self.v_lo}, {self.v_hi}]")
        self._validate_convexity()

    def laurent(self) -> np.ndarray:
        return np.array(
            [self.alpha0, self.alpha1, self.alpha2, self.alpha3, 0.0, 0.0, 0.0],
            dtype=float,
        )

    @property
    def label(self) -> str:
        return self.name or "EvPowerCurve"


@dataclass(frozen=True)
class QuadraticCost(CostFunction):
    """cost(v) = scale*(v - center)^2 + offset.

    Constant curvature 2*scale; a fully analysable fleet member for tests,
    admissible under the same growth-rate assumption as the physical curves.
    """

    center: float
    scale: float = 1.0
    offset: float = 0.0
    v_lo: float = -1e12
    v_hi: float = 1e12
    name: str = ""

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ConvexityViolation(f"scale must be positive, got {self.scale}")

    def laurent(self) -> np.ndarray:
        s, m = self.scale, self.center
        return np.array([0.0, s * m * m + self.offset, -2.0 * s * m, s, 0.0, 0.0, 0.0])

    def _check_domain(self, v: float) -> None:
        # No 1/v term, so negative and zero speeds are evaluable.
        if not (self.v_lo <= v <= self.v_hi):
            raise DomainError(f"{self.label}: speed {v} outside domain")

    @property
    def label(self) -> str:
        return self.name or f"QuadraticCost(center={self.center})"


# -- public operations -------------------------------------------------------


def eval_cost(curve: CostFunction, v: float) -> float:
    """Cost rate of `curve` at speed v km/h (g/km or kWh/km)."""
    return curve.cost(v)


def eval_derivative(curve: CostFunction, v: float) -> float:
    """Slope of the cost rate at speed v km/h."""
    return curve.derivative(v)


def estimate_bounds(curve: CostFunction, speed_range: tuple[float, float]) -> DerivativeBounds:
    """Bound the curvature of `curve` on `speed_range` from a dense grid.

    Samples the analytic second derivative on a uniform grid (1000 interior
    points plus both endpoints; the curve family is low order, so grid error
    is negligible) and returns the observed min/max. Raises
    ConvexityViolation if any sample is non-positive.
    """
    lo, hi = speed_range
    if not lo < hi:
        raise DomainError(f"invalid range [{lo}, {hi}]")
    c = curve.laurent()
    if c[0] != 0.0 and lo <= 0.0:
        raise DomainError(f"range for {curve.label} must have positive lower end, got {lo}")
    grid = np.linspace(lo, hi, CURVATURE_GRID_POINTS)
    curv = 2.0 * c[3] + 6.0 * c[4] * grid + 12.0 * c[5] * grid**2 + 20.0 * c[6] * grid**3
    if c[0] != 0.0:
        curv = curv + 2.0 * c[0] / grid**3
    d_min = float(curv.min())
    d_max = float(curv.max())
    if d_min <= 0.0:
        raise ConvexityViolation(
            f"{curve.label}: second derivative reaches {d_min:.3e} on "
            f"[{lo}, {hi}]; curve is not strictly convex there"
        )
    return DerivativeBounds(d_min=d_min, d_max=d_max)


@dataclass(frozen=True)
class MinSpeedResult:
    speed: float
    interior: bool  # False when the derivative never changes sign on the range


def find_min_speed(
    curve: CostFunction,
    speed_range: tuple[float, float] | None = None,
    tol: float = 1e-6,
) -> MinSpeedResult:
    """Locate the speed minimising `curve` on `speed_range` by bisecting the
    derivative (unique by strict convexity).

    When the derivative keeps one sign on the whole range there is no
    interior minimum; the cheaper boundary is returned with interior=False.
    """
    lo, hi = speed_range if speed_range is not None else (curve.v_lo, curve.v_hi)
    d_lo = curve.derivative(lo)
    d_hi = curve.derivative(hi)
    if d_lo >= 0.0 and d_hi >= 0.0:
        return MinSpeedResult(speed=lo, interior=False)
    if d_lo <= 0.0 and d_hi <= 0.0:
        return MinSpeedResult(speed=hi, interior=False)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if curve.derivative(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return MinSpeedResult(speed=0.5 * (lo + hi), interior=True)


# -- shipped combustion presets ----------------------------------------------

# Petrol cars / minibuses up to 2.5 t gross mass; e = f = g = 0, k = 1.
_PRESET_ROWS = {
    "R007": (2.2606e3, 3.1583e1, 2.9263e-1, 3.0199e-3),
    "R014": (2.5324e3, 6.8842e1, -4.3167e-1, 6.6776e-3),
    "R021": (3.7473e3, 1.0571e2, -8.5270e-1, 1.0318e-2),
    "R040": (1.2988e3, 2.0203e2, -1.5597e0, 1.2264e-2),
}

PRESET_NAMES = tuple(sorted(_PRESET_ROWS))


@lru_cache(maxsize=256)
def ice_preset(
    name: str,
    v_lo: float = DEFAULT_SPEED_RANGE[0],
    v_hi: float = DEFAULT_SPEED_RANGE[1],
) -> IceEmissionCurve:
    """Return one of the shipped emission types R007/R014/R021/R040.

    Instances are immutable, so identical requests share one object (fleets
    reference the same preset hundreds of times)."""
    try:
        a, b, c, d = _PRESET_ROWS[name]
    except KeyError:
        raise KeyError(f"unknown emission preset {name!r}; have {sorted(_PRESET_ROWS)}") from None
    return IceEmissionCurve(a=a, b=b, c=c, d=d, v_lo=v_lo, v_hi=v_hi, name=name)


def ev_fleet_curve(
    base_alpha: tuple[float, float, float, float],
    ancillary_kw: float,
    passengers: int,
    passenger_mass_kg: float = 80.0,
    base_mass_kg: float = 1300.0,
    v_lo: float = DEFAULT_SPEED_RANGE[0],
    v_hi: float = DEFAULT_SPEED_RANGE[1],
    name: str = "",
) -> EvPowerCurve:
    """Build one EV's curve from the shared base fit.

    The ancillary draw replaces alpha0 outright; the linear (rolling) term
    scales with total vehicle mass, passengers counted at `passenger_mass_kg`
    each.
    """
    if ancillary_kw <= 0.0:
        raise ConvexityViolation(f"ancillary draw must be positive, got {ancillary_kw}")
    if passengers < 1:
        raise ValueError(f"need at least the driver, got passengers={passengers}")
    _, a1, a2, a3 = base_alpha
    mass_factor = (base_mass_kg + passenger_mass_kg * passengers) / base_mass_kg
    return EvPowerCurve(
        alpha0=ancillary_kw,
        alpha1=a1 * mass_factor,
        alpha2=a2,
        alpha3=a3,
        v_lo=v_lo,
        v_hi=v_hi,
        name=name,
    )


def fleet_coefficients(curves: list[CostFunction]) -> np.ndarray:
    """Stack curve coefficients into the (n, 7) matrix the kernels consume."""
    if not curves:
        return np.zeros((0, 7))
    return np.stack([c.laurent() for c in curves])


def finite_difference_derivative(curve: CostFunction, v: float, h: float = 1e-3) -> float:
    """Central-difference slope, the independent check for `derivative`."""
    return (curve.cost(v + h) - curve.cost(v - h)) / (2.0 * h)
