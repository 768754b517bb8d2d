"""Exception types shared across the package."""


class FleetspeedError(Exception):
    """Base class for all package errors."""


class DomainError(FleetspeedError, ValueError):
    """Speed outside a curve's valid evaluation interval."""


class ConvexityViolation(FleetspeedError, ValueError):
    """A cost curve is not strictly convex on the requested range."""


class WeightOverflow(FleetspeedError, ValueError):
    """eta * |N_i| exceeds 1 for some row of the averaging matrix."""


class EmptyFleet(FleetspeedError, ValueError):
    """An operation that needs at least one vehicle got none."""


class DimensionMismatch(FleetspeedError, ValueError):
    """State vector and matrix sizes disagree."""


class GainOutOfRange(FleetspeedError, ValueError):
    """Feedback gain mu is not strictly inside (0, 2 / sum d_max)."""


class NonConvergence(FleetspeedError, RuntimeError):
    """Iteration failed to reach tolerance within the iteration cap."""


class MissingReport(FleetspeedError, ValueError):
    """An active vehicle produced no gradient report this round."""


class DuplicateReport(FleetspeedError, ValueError):
    """More than one gradient report from the same vehicle this round."""


class StaleRound(FleetspeedError, ValueError):
    """A report carries a round index other than the one being closed."""


class ConfigError(FleetspeedError, ValueError):
    """Scenario configuration problem; `field` names the offending entry."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")
