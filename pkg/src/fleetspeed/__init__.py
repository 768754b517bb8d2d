"""fleetspeed: consensus-based speed advisory simulation.

A fleet iteratively agrees on one recommended speed that minimises total
CO2 (combustion) or energy per km (EV), while the aggregation point only ever
sees scalar gradient values. Ships a verifiable library (cost models, the
round dynamics, an independent centralized oracle, graph tooling, the
aggregation boundary) plus a desk-scale mobility simulator and CLI.
"""

from .base_station import (
    AggregateBroadcast,
    AuditVerdict,
    BaseStation,
    GradientReport,
    MessageLog,
    V2VTrace,
    audit_privacy,
)
from .comm_graph import (
    NeighborGraph,
    complete_graph,
    radius_graph,
    random_graph,
    union_strongly_connected,
)
from .consensus import (
    ConsensusMatrix,
    ConsensusParams,
    ConvergenceReport,
    SpeedState,
    build_matrix,
    consensus_step,
    detect_consensus,
    lure_step,
    mu_upper_bound,
    run_lure_to_fixed_point,
)
from .cost_models import (
    DerivativeBounds,
    EvPowerCurve,
    IceEmissionCurve,
    QuadraticCost,
    estimate_bounds,
    eval_cost,
    eval_derivative,
    ev_fleet_curve,
    find_min_speed,
    ice_preset,
)
from .errors import (
    ConfigError,
    ConvexityViolation,
    DimensionMismatch,
    DomainError,
    DuplicateReport,
    EmptyFleet,
    FleetspeedError,
    GainOutOfRange,
    MissingReport,
    NonConvergence,
    StaleRound,
    WeightOverflow,
)
from .kernels import BACKEND
from .mobility import (
    VEHICLE_TYPE_PRESETS,
    MetricsAccumulator,
    RoadLayout,
    RoadSection,
    VehicleSpec,
    VehicleState,
    VehicleType,
    accrue_cost,
    kinematic_step,
    spawn_schedule,
    target_speed,
)
from .oracle import OptimumReport, centralized_optimum, grid_scan_optimum
from .scenario import Scenario, load_scenario, load_shipped, scenario_from_dict, shipped_names
from .simulation import RunArtifact, build_fleet, run_scenario, run_sweep

__version__ = "0.1.0"
