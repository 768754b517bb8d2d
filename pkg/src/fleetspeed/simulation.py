"""The synchronous round loop coupling mobility, communication, aggregation
and the recommendation dynamics.

Round structure (one round per dt, default 1 s):

    positions -> neighbour graph -> gradient reports -> aggregate broadcast
    -> recommendation update -> target speeds -> kinematics -> metrics

Everything is deterministic for a given scenario and seed: random draws come
from named substreams of the scenario seed, and all reductions run in fixed
(ascending vehicle id) order.

The loop works on flat per-vehicle arrays and calls the selected kernel
backend for the O(n) inner operations; no per-vehicle Python objects exist in
the hot path. Neighbour sums for radius graphs use prefix sums over
position-sorted arrays, an O(n) equivalent of building the averaging matrix
(equivalence with the reference `consensus_step` is covered by tests).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .base_station import BaseStation, MessageLog, V2VTrace
from .consensus import ConvergenceReport
from .cost_models import (
    CostFunction,
    estimate_bounds,
    ev_fleet_curve,
    find_min_speed,
)
from .errors import ConfigError, WeightOverflow
from .mobility import (
    EV_VEHICLE_TYPE,
    VEHICLE_TYPE_PRESETS,
    MetricsAccumulator,
    spawn_schedule,
)
from .oracle import centralized_optimum
from .scenario import Scenario

LOG = logging.getLogger(__name__)

CONNECTIVITY_WINDOW = 30  # rounds per union-connectivity check

_EMPTY_F = np.zeros(0)
_EMPTY_I = np.zeros(0, dtype=np.int64)


@dataclass
class FleetArrays:
    """Flat per-vehicle data for the whole (eventual) fleet."""

    ids: np.ndarray
    coeffs: np.ndarray          # (n, 7) Laurent rows
    accel_kmh_s: np.ndarray
    decel_kmh_s: np.ndarray
    compliant: np.ndarray       # bool
    free_kmh: np.ndarray
    spawn_round: np.ndarray     # int
    init_pos_m: np.ndarray
    init_rec_kmh: np.ndarray    # NaN where the entrant rule applies
    d_max: np.ndarray           # curvature ceiling per vehicle on [v_lo, v_hi]
    curves: list[CostFunction]
    curve_names: list[str]

    @property
    def size(self) -> int:
        return len(self.ids)


def build_fleet(scenario: Scenario, seed: int) -> FleetArrays:
    """Materialise the fleet; all randomness comes from `seed` substreams in a
    fixed draw order (composition, speeds, placement, compliance)."""
    ss = np.random.SeedSequence(seed)
    fleet_ss, _graph_ss = ss.spawn(2)
    rng = np.random.default_rng(fleet_ss)
    f = scenario.fleet
    v_lo, v_hi = scenario.consensus.v_lo, scenario.consensus.v_hi
    road_len = scenario.road.total_length_m

    if f.mode == "fixed":
        names: list[str] = []
        for curve_name in sorted(f.curve_counts):
            names += [curve_name] * int(f.curve_counts[curve_name])
        n = len(names)
        curves = [scenario.resolve_curve(nm) for nm in names]
        type_idx = rng.integers(0, len(f.vehicle_types), n)
        vtypes = [VEHICLE_TYPE_PRESETS[f.vehicle_types[i]] for i in type_idx]
        init_speed = _draw_speeds(f.initial_speed_kmh, n, rng, "fleet.initial_speed_kmh")
        if f.placement == "even":
            pos = np.arange(n) * (road_len / n)
        else:
            pos = np.sort(rng.uniform(0.0, road_len, n))
        free = init_speed.copy()  # uncontrolled driving holds the initial speed
        spawn_round = np.zeros(n, dtype=np.int64)
        init_rec = np.full(n, np.nan)
    elif f.mode == "spawn":
        times = spawn_schedule(f.spawn_period_s, f.spawn_cutoff_s)
        n = len(times)
        mix = list(f.curve_mix)
        curve_idx = rng.integers(0, len(mix), n)
        names = [mix[i] for i in curve_idx]
        curves = [scenario.resolve_curve(nm) for nm in names]
        type_idx = rng.integers(0, len(f.vehicle_types), n)
        vtypes = [VEHICLE_TYPE_PRESETS[f.vehicle_types[i]] for i in type_idx]
        free = _draw_speeds(f.free_speed_kmh, n, rng, "fleet.free_speed_kmh")
        pos = np.zeros(n)
        spawn_round = np.rint(times / scenario.dt_s).astype(np.int64)
        init_rec = np.full(n, np.nan)
    else:  # ev
        n = int(f.count)
        ev = scenario.ev
        ancillary = rng.uniform(ev.ancillary_range_kw[0], ev.ancillary_range_kw[1], n)
        passengers = rng.integers(ev.passenger_range[0], ev.passenger_range[1] + 1, n)
        curves = [
            ev_fleet_curve(
                ev.base_alpha,
                float(ancillary[i]),
                int(passengers[i]),
                passenger_mass_kg=ev.passenger_mass_kg,
                base_mass_kg=ev.base_mass_kg,
                v_lo=v_lo,
                v_hi=v_hi,
                name=f"ev{i}",
            )
            for i in range(n)
        ]
        names = [c.name for c in curves]
        vtypes = [EV_VEHICLE_TYPE] * n
        if f.placement == "even":
            pos = np.arange(n) * (road_len / n)
        else:
            pos = np.sort(rng.uniform(0.0, road_len, n))
        own_opt = np.array([find_min_speed(c, (v_lo, v_hi)).speed for c in curves])
        if f.initial_speed_kmh in (None, "own_optimum"):
            init_rec = own_opt
        else:
            init_rec = _draw_speeds(f.initial_speed_kmh, n, rng, "fleet.initial_speed_kmh")
        free = init_rec.copy()
        spawn_round = np.zeros(n, dtype=np.int64)

    _validate_speeds(free, v_lo, v_hi, "fleet speeds")
    u = rng.random(n)  # shared uniforms: the same vehicles comply at any fraction
    compliant = u < scenario.compliance
    coeffs = np.stack([c.laurent() for c in curves]) if n else np.zeros((0, 7))
    bound_cache: dict = {}  # presets repeat across the fleet; bound each curve once
    d_max = np.empty(n)
    for i, c in enumerate(curves):
        if c not in bound_cache:
            bound_cache[c] = estimate_bounds(c, (v_lo, v_hi)).d_max
        d_max[i] = bound_cache[c]
    return FleetArrays(
        ids=np.arange(n, dtype=np.int64),
        coeffs=coeffs,
        accel_kmh_s=np.array([t.accel_kmh_s for t in vtypes]),
        decel_kmh_s=np.array([t.decel_kmh_s for t in vtypes]),
        compliant=compliant,
        free_kmh=free,
        spawn_round=spawn_round,
        init_pos_m=pos.astype(float),
        init_rec_kmh=init_rec,
        d_max=d_max,
        curves=curves,
        curve_names=names,
    )


def _draw_speeds(spec, n: int, rng: np.random.Generator, field_name: str) -> np.ndarray:
    if isinstance(spec, (int, float)):
        return np.full(n, float(spec))
    if isinstance(spec, (list, tuple)) and len(spec) == 2:
        return rng.uniform(float(spec[0]), float(spec[1]), n)
    raise ConfigError(field_name, f"expected a number or [lo, hi], got {spec!r}")


def _validate_speeds(speeds: np.ndarray, v_lo: float, v_hi: float, what: str) -> None:
    if len(speeds) and ((speeds < v_lo).any() or (speeds > v_hi).any()):
        raise ConfigError(
            "fleet", f"{what} must lie within the operator band [{v_lo}, {v_hi}] km/h"
        )


@dataclass
class EvPhaseStat:
    phase: int
    forced_speed_kmh: float | None  # None while the algorithm decides
    energy_kwh: float
    distance_km: float

    @property
    def kwh_per_km(self) -> float:
        return self.energy_kwh / self.distance_km if self.distance_km > 0 else 0.0


@dataclass
class RunArtifact:
    scenario_name: str
    seed: int
    backend: str
    n_rounds: int
    dt_s: float
    section_names: list[str]
    section_controlled: list[bool]
    metrics: MetricsAccumulator
    rounds: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    section_counts: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int64))
    consensus_size: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    spread: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step_delta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    aggregate: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rec_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    converged: ConvergenceReport = field(default_factory=lambda: ConvergenceReport(False, None))
    flags: dict = field(default_factory=dict)
    message_log: MessageLog | None = None
    v2v_trace: V2VTrace | None = None
    rec_history: list | None = None            # [(round, ids, pre-update recs)]
    ev_phases: list[EvPhaseStat] = field(default_factory=list)
    oracle_y_star: float | None = None

    @property
    def uncontrolled_total(self) -> float:
        """Total of the entry (uncontrolled) section preceding the advisory
        zone; the like-for-like baseline, since every vehicle crosses both."""
        baseline = 0.0
        for total, controlled in zip(self.metrics.section_totals, self.section_controlled):
            if controlled:
                break
            baseline = float(total)
        return baseline

    @property
    def controlled_total(self) -> float:
        return float(
            sum(t for t, c in zip(self.metrics.section_totals, self.section_controlled) if c)
        )

    def improvement_pct(self) -> float:
        l1 = self.uncontrolled_total
        l2 = self.controlled_total
        if l1 <= 0.0:
            return 0.0
        return 100.0 * (l1 - l2) / l1

    def final_recommendation(self) -> float:
        return float(self.rec_mean[-1]) if len(self.rec_mean) else float("nan")


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb

    def n_components(self):
        return len({self.find(x) for x in self.parent})


def run_scenario(
    scenario: Scenario,
    seed: int | None = None,
    backend=None,
    collect_log: bool = True,
    collect_v2v: bool = False,
    monitor_connectivity: bool = False,
    trace_sink=None,
) -> RunArtifact:
    """Execute one scenario and return its artifact.

    `trace_sink(round, ids, section, pos_m, speed, rec, rate)` receives one
    call per round when supplied (streaming, nothing retained here).
    """
    K = backend if backend is not None else kernels.active
    seed = scenario.seed if seed is None else seed
    fleet = build_fleet(scenario, seed)
    n = fleet.size
    road = scenario.road
    params = scenario.consensus
    comm = scenario.communication
    dt = scenario.dt_s
    n_rounds = scenario.n_rounds
    activation = scenario.activation_round
    bounds = road.boundaries()
    controlled = road.controlled_flags()
    k_sections = len(road.sections)
    road_len = road.total_length_m
    ring = road.wrap
    eta = params.eta
    adaptive = params.eta_mode == "adaptive"

    _graph_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])

    # EV phase plumbing
    ev = scenario.ev
    phase_edges: list[int] = []
    forced_speeds: list[float | None] = [None]
    y_star = None
    if ev is not None:
        phase_edges = list(np.cumsum([int(p) for p in ev.phase_rounds]))
        y_star = centralized_optimum(fleet.curves, (params.v_lo, params.v_hi)).y_star
        clamp = lambda x: float(min(max(x, params.v_lo), params.v_hi))
        forced_speeds = [
            clamp(y_star) if ev.phase1_forced else None,
            clamp(y_star + ev.phase2_offset_kmh),
            clamp(y_star + ev.phase3_offset_kmh),
        ]

    # state arrays
    pos = fleet.init_pos_m.copy()
    v = fleet.free_kmh.copy()
    rec = fleet.init_rec_kmh.copy()
    active = np.zeros(n, dtype=bool)
    in_consensus_prev = np.zeros(n, dtype=bool)
    ids = np.zeros(0, dtype=np.int64)  # active ids, maintained incrementally
    spawn_buckets: dict[int, np.ndarray] = {}
    for t_spawn in np.unique(fleet.spawn_round):
        spawn_buckets[int(t_spawn)] = np.nonzero(fleet.spawn_round == t_spawn)[0].astype(np.int64)

    log = MessageLog() if collect_log else None
    station = BaseStation(log=log)
    v2v = V2VTrace() if collect_v2v else None
    rec_history: list | None = [] if collect_v2v else None
    metrics = MetricsAccumulator(road.section_names(), n, ma_window=scenario.ma_window)

    # per-round records
    rounds_rec = np.arange(n_rounds, dtype=np.int64)
    section_counts = np.zeros((n_rounds, k_sections), dtype=np.int64)
    consensus_size = np.zeros(n_rounds, dtype=np.int64)
    spread_rec = np.zeros(n_rounds)
    delta_rec = np.full(n_rounds, np.nan)
    aggregate_rec = np.full(n_rounds, np.nan)
    rec_mean = np.full(n_rounds, np.nan)

    mu_exceeds_bound = False
    streak = 0
    converged = ConvergenceReport(False, None)
    prev_member_ids: np.ndarray | None = None
    monitor_buffer: list[tuple[np.ndarray, np.ndarray]] = []
    connectivity_warnings = 0
    sum_d_max = 0.0

    phase_idx = 0
    phase_energy_mark = 0.0
    phase_km_mark = 0.0
    phase_stats: list[EvPhaseStat] = []
    km_total = 0.0

    for t in range(n_rounds):
        arrivals = spawn_buckets.get(t)
        if arrivals is not None:
            active[arrivals] = True
            ids = np.concatenate([ids, arrivals]) if len(ids) else arrivals
            ids = np.sort(ids)

        # EV phase switching
        if ev is not None and phase_edges:
            if phase_idx < 2 and t == phase_edges[phase_idx]:
                phase_stats.append(
                    _close_phase(phase_idx, forced_speeds[phase_idx], metrics, km_total,
                                 phase_energy_mark, phase_km_mark)
                )
                phase_energy_mark = metrics.fleet_total()
                phase_km_mark = km_total
                phase_idx += 1
                rec[active] = forced_speeds[phase_idx]
            elif t == 0 and ev.phase1_forced:
                rec[active] = forced_speeds[0]

        if len(ids) == 0:
            metrics._push_rate(0.0, np.zeros(k_sections))
            continue

        sec, sec_counts = K.section_lookup(bounds, pos, ids)
        section_counts[t] = sec_counts

        advisory_on = t >= activation and (ev is None or (phase_idx == 0 and not ev.phase1_forced))
        member_mask = controlled[sec] & advisory_on
        mem_ids = ids[member_mask]
        m = len(mem_ids)
        consensus_size[t] = m

        same_members = (
            prev_member_ids is not None
            and m == len(prev_member_ids)
            and m > 0
            and np.array_equal(mem_ids, prev_member_ids)
        )

        if m > 0:
            entrants = mem_ids[~in_consensus_prev[mem_ids]]
            if len(entrants):
                rec[entrants] = v[entrants]

            derivs = K.member_derivatives(fleet.coeffs, rec, mem_ids)
            broadcast = station.aggregate_array(t, mem_ids, derivs)
            aggregate_rec[t] = broadcast.value
            if v2v is not None:
                rec_m_now = rec[mem_ids]
                v2v.record_round(t, mem_ids, rec_m_now)
                rec_history.append((t, mem_ids.copy(), rec_m_now))

            if not same_members:
                sum_d_max = K.sequential_sum(np.ascontiguousarray(fleet.d_max[mem_ids]))
            mu = params.mu if params.mu is not None else 0.9 * (2.0 / sum_d_max)
            if sum_d_max > 0.0 and mu >= 2.0 / sum_d_max and not mu_exceeds_bound:
                mu_exceeds_bound = True
                LOG.warning(
                    "round %d: mu=%.4g is not below the admissible gain ceiling %.4g "
                    "for the current fleet; continuing (diagnostic only)",
                    t, mu, 2.0 / sum_d_max,
                )

            if comm.model == "random":
                rec_m = rec[mem_ids]
                draws = _graph_rng.random((m, m)) < comm.p_edge
                np.fill_diagonal(draws, False)
                nbr_sum = draws @ rec_m
                nbr_cnt = draws.sum(axis=1).astype(np.int64)
                rec_new = K.consensus_update(
                    rec_m, nbr_sum, nbr_cnt, eta, adaptive,
                    mu * broadcast.value, params.v_lo, params.v_hi,
                )
                spread = float(rec_new.max() - rec_new.min())
                delta = float(np.abs(rec_new - rec_m).max())
                max_cnt = int(nbr_cnt.max()) if m else 0
            else:
                if comm.model == "complete":
                    mode = K.MODE_COMPLETE
                    pos_sorted = _EMPTY_F
                    order = _EMPTY_I
                else:
                    mode = K.MODE_RADIUS_RING if ring else K.MODE_RADIUS_LINE
                    pos_m = pos[mem_ids]
                    order = np.argsort(pos_m, kind="stable")
                    pos_sorted = np.ascontiguousarray(pos_m[order])
                rec_new, spread, delta, max_cnt = K.consensus_round_update(
                    rec, pos_sorted, order, mem_ids, mode,
                    comm.radius_m if comm.radius_m is not None else 0.0,
                    road_len, eta, adaptive,
                    mu * broadcast.value, params.v_lo, params.v_hi,
                )
            if not adaptive and eta * max_cnt > 1.0:
                raise WeightOverflow(
                    f"round {t}: eta*|N_i| = {eta * max_cnt:.4f} exceeds 1"
                )
            if same_members:
                delta_rec[t] = delta
            rec[mem_ids] = rec_new
            spread_rec[t] = spread
            rec_mean[t] = float(rec_new.mean())

            if monitor_connectivity and comm.model == "radius":
                monitor_buffer.append((mem_ids, pos[mem_ids].copy()))
                if len(monitor_buffer) == CONNECTIVITY_WINDOW:
                    if not _window_union_connected(monitor_buffer, comm.radius_m, ring, road_len):
                        connectivity_warnings += 1
                        LOG.warning(
                            "rounds %d-%d: union of communication graphs is not connected",
                            t - CONNECTIVITY_WINDOW + 1, t,
                        )
                    monitor_buffer.clear()

            # convergence bookkeeping
            if (
                same_members
                and spread_rec[t] < params.epsilon_consensus
                and delta < params.epsilon_consensus
            ):
                streak += 1
                if streak >= params.hold_rounds and not converged.converged:
                    converged = ConvergenceReport(True, t)
            else:
                streak = 0
        else:
            streak = 0

        in_consensus_prev[:] = False
        in_consensus_prev[mem_ids] = True
        prev_member_ids = mem_ids

        # driving
        follow = controlled[sec] & fleet.compliant[ids]
        if ev is not None:
            follow &= (phase_idx > 0) or ev.phase1_forced or advisory_on
        else:
            follow &= t >= activation
        v_new, dist, rates, amounts, sec_rate, sec_amount, total_rate, total_dist = K.drive_round(
            fleet.coeffs, v, rec, fleet.free_kmh, ids, follow.astype(np.uint8),
            fleet.accel_kmh_s, fleet.decel_kmh_s, dt, sec, k_sections,
        )
        metrics.accrue_precomputed(ids, amounts, sec_rate, sec_amount, total_rate)
        km_total += total_dist * 0.001

        if trace_sink is not None:
            trace_sink(t, ids, sec, pos[ids], v_new, rec[ids], rates)

        v[ids] = v_new
        pos[ids] = pos[ids] + dist
        if ring:
            pos[ids] = np.mod(pos[ids], road_len)
        else:
            gone = pos[ids] >= road_len
            if gone.any():
                retired = ids[gone]
                active[retired] = False
                in_consensus_prev[retired] = False
                ids = ids[~gone]

    if ev is not None:
        phase_stats.append(
            _close_phase(phase_idx, forced_speeds[phase_idx], metrics, km_total,
                         phase_energy_mark, phase_km_mark)
        )

    return RunArtifact(
        scenario_name=scenario.name,
        seed=seed,
        backend=K.NAME,
        n_rounds=n_rounds,
        dt_s=dt,
        section_names=road.section_names(),
        section_controlled=[s.controlled for s in road.sections],
        metrics=metrics,
        rounds=rounds_rec,
        section_counts=section_counts,
        consensus_size=consensus_size,
        spread=spread_rec,
        step_delta=delta_rec,
        aggregate=aggregate_rec,
        rec_mean=rec_mean,
        converged=converged,
        flags={
            "mu_exceeds_bound": mu_exceeds_bound,
            "consensus_converged": converged.converged,
            "connectivity_warnings": connectivity_warnings,
        },
        message_log=log,
        v2v_trace=v2v,
        rec_history=rec_history,
        ev_phases=phase_stats,
        oracle_y_star=y_star,
    )


def _close_phase(phase_idx, forced, metrics, km_total, energy_mark, km_mark) -> EvPhaseStat:
    return EvPhaseStat(
        phase=phase_idx + 1,
        forced_speed_kmh=forced,
        energy_kwh=metrics.fleet_total() - energy_mark,
        distance_km=km_total - km_mark,
    )


def _window_union_connected(buffer, radius, ring, road_len) -> bool:
    """Union connectivity over a window of (member ids, positions) snapshots.

    Radius graphs on a line are interval graphs: their connected components
    are maximal runs of position-sorted vehicles with consecutive gaps within
    the radius, so merging consecutive pairs per round reproduces the union's
    components exactly.
    """
    common = set(buffer[0][0].tolist())
    for ids, _ in buffer[1:]:
        common &= set(ids.tolist())
    if len(common) <= 1:
        return True
    common_arr = np.array(sorted(common), dtype=np.int64)
    uf = _UnionFind(common_arr.tolist())
    for ids, positions in buffer:
        present = np.isin(ids, common_arr)
        sub_ids = ids[present]
        sub_pos = positions[present]
        order = np.argsort(sub_pos, kind="stable")
        sid = sub_ids[order]
        spos = sub_pos[order]
        gaps = np.diff(spos)
        for i in np.nonzero(gaps <= radius)[0]:
            uf.union(int(sid[i]), int(sid[i + 1]))
        if ring and len(spos) > 1 and (road_len - (spos[-1] - spos[0])) <= radius:
            uf.union(int(sid[-1]), int(sid[0]))
    return uf.n_components() == 1


# -- sweeps ---------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    seed: int
    converged_round: int   # -1 when not converged within the run
    uncontrolled_total: float
    controlled_total: float
    improvement_pct: float


def run_sweep(
    scenario: Scenario,
    axis: str,
    values: list[float],
    n_seeds: int,
    backend=None,
) -> list[SweepRow]:
    """Run `scenario` once per (value, seed) cell.

    Seeds derive from the scenario seed by fixed offsets (base + k) and are
    shared across values, so cells are paired for variance reduction.
    """
    if axis not in ("compliance", "radius"):
        raise ConfigError("sweep.axis", f"unknown sweep axis {axis!r}")
    rows: list[SweepRow] = []
    for value in values:
        if axis == "compliance":
            cell_scenario = scenario.with_overrides(compliance=float(value))
        else:
            if scenario.communication.model != "radius":
                raise ConfigError("sweep.axis", "radius sweep needs a radius communication model")
            cell_scenario = scenario.with_overrides(radius_m=float(value))
        for k in range(n_seeds):
            seed = scenario.seed + k
            art = run_scenario(cell_scenario, seed=seed, backend=backend, collect_log=False)
            rows.append(
                SweepRow(
                    axis=axis,
                    value=float(value),
                    seed=seed,
                    converged_round=art.converged.round_index if art.converged.converged else -1,
                    uncontrolled_total=art.uncontrolled_total,
                    controlled_total=art.controlled_total,
                    improvement_pct=art.improvement_pct(),
                )
            )
    return rows
