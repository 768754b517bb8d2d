"""Command-line harness: run scenarios, sweeps, oracle spot checks, privacy
audits and the backend benchmark.

Output files are CSV with one leading comment line echoing scenario, seed and
backend, so every artifact is traceable to its inputs. Floats are written with
repr precision: derived columns recompute exactly from the file.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from .base_station import MessageLog, audit_privacy
from .cost_models import ice_preset
from .errors import ConfigError, FleetspeedError
from .oracle import centralized_optimum
from .scenario import Scenario, load_scenario, shipped_names
from .simulation import build_fleet, run_scenario, run_sweep

TRACE_COLUMNS = "round,vehicle_id,section,position_m,actual_speed_kmh,recommended_speed_kmh,cost_rate"
METRICS_COLUMNS = "round,fleet_size_per_section,total_rate,moving_average,spread"
SWEEP_COLUMNS = "value,seed,converged_round,L1_total,L2_total,improvement_pct"


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FleetspeedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ImportError as exc:
        print(f"backend unavailable: {exc}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fleetspeed",
        description="Consensus speed advisory simulator (shipped scenarios: %s)" % ", ".join(shipped_names()),
    )
    sub = parser.add_subparsers(required=True)

    p_run = sub.add_parser("run", help="run one scenario, write trace/metrics/message log")
    _common_run_args(p_run)
    p_run.add_argument("--trace", action="store_true", help="write the per-vehicle trace CSV")
    p_run.add_argument("--no-monitor", action="store_true", help="skip union-connectivity monitoring")
    p_run.set_defaults(handler=cmd_run)

    p_oracle = sub.add_parser("oracle", help="print the centralized optimum for a fleet")
    p_oracle.add_argument("--scenario", help="scenario path or shipped name")
    p_oracle.add_argument("--fleet", help="inline fleet like '32xR007,8xR021'")
    p_oracle.add_argument("--range", default="5,130", help="speed range lo,hi km/h (default 5,130)")
    p_oracle.add_argument("--tol", type=float, default=1e-3)
    p_oracle.add_argument("--seed", type=int, default=None)
    p_oracle.set_defaults(handler=cmd_oracle)

    p_sweep = sub.add_parser("sweep", help="run a scenario across an axis of values")
    _common_run_args(p_sweep)
    p_sweep.add_argument("--sweep", required=True, metavar="AXIS=V1,V2,...",
                         help="compliance=0,0.5,1 or radius=15,50,150")
    p_sweep.add_argument("--seeds", type=int, default=5, help="seeds per value (default 5)")
    p_sweep.set_defaults(handler=cmd_sweep)

    p_audit = sub.add_parser("audit", help="audit a message log file")
    p_audit.add_argument("--log", required=True, help="path to a messages.log file")
    p_audit.set_defaults(handler=cmd_audit)

    p_ev = sub.add_parser("ev-threephase", help="EV fleet: consensus phase, then below/above optimum")
    _common_run_args(p_ev, default_scenario="ev_threephase")
    p_ev.set_defaults(handler=cmd_ev_threephase)

    p_bench = sub.add_parser("bench", help="compare kernel backends on one scenario")
    p_bench.add_argument("--scenario", default="dynamic_case1")
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--repeat", type=int, default=3)
    p_bench.set_defaults(handler=cmd_bench)

    return parser


def _common_run_args(p: argparse.ArgumentParser, default_scenario: str | None = None) -> None:
    if default_scenario:
        p.add_argument("--scenario", default=default_scenario, help="scenario path or shipped name")
    else:
        p.add_argument("--scenario", required=True, help="scenario path or shipped name")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", default=None, help="output directory (default: no files)")
    p.add_argument("--backend", default=None, choices=["python", "compiled"],
                   help="kernel backend (default: best available)")


def _header(scenario: Scenario, seed: int, backend: str) -> str:
    return f"# scenario={scenario.name} seed={seed} backend={backend}\n"


def _resolve(args) -> tuple[Scenario, int, object]:
    scenario = load_scenario(args.scenario)
    seed = scenario.seed if args.seed is None else args.seed
    backend = kernels.load_backend(args.backend) if args.backend else kernels.active
    return scenario, seed, backend


def cmd_run(args) -> int:
    scenario, seed, backend = _resolve(args)
    out_dir = Path(args.out) if args.out else None
    trace_fh = None
    trace_sink = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.trace:
            trace_fh = open(out_dir / "trace.csv", "w", encoding="utf-8")
            trace_fh.write(_header(scenario, seed, backend.NAME))
            trace_fh.write(TRACE_COLUMNS + "\n")
            section_names = scenario.road.section_names()

            def trace_sink(t, ids, sec, pos, v, rec, rates):  # noqa: ANN001
                for i in range(len(ids)):
                    r = rec[i]
                    rec_str = repr(float(r)) if np.isfinite(r) else ""
                    trace_fh.write(
                        f"{t},{ids[i]},{section_names[sec[i]]},{pos[i]!r},{v[i]!r},{rec_str},{rates[i]!r}\n"
                    )

    art = run_scenario(
        scenario,
        seed=seed,
        backend=backend,
        collect_log=True,
        collect_v2v=False,
        monitor_connectivity=not args.no_monitor,
        trace_sink=trace_sink,
    )
    if trace_fh is not None:
        trace_fh.close()
    if out_dir is not None:
        _write_metrics_csv(out_dir / "metrics.csv", scenario, seed, art)
        art.message_log.dump(out_dir / "messages.log")
        (out_dir / "summary.json").write_text(json.dumps(_summary(art), indent=2) + "\n")
    print(_format_summary(art))
    return 0


def _write_metrics_csv(path: Path, scenario: Scenario, seed: int, art) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header(scenario, seed, art.backend))
        fh.write(METRICS_COLUMNS + "\n")
        for t in range(art.n_rounds):
            counts = "|".join(str(int(c)) for c in art.section_counts[t])
            fh.write(
                f"{t},{counts},{art.metrics.per_round_rate[t]!r},"
                f"{art.metrics.per_round_ma[t]!r},{art.spread[t]!r}\n"
            )


def _summary(art) -> dict:
    d = {
        "scenario": art.scenario_name,
        "seed": art.seed,
        "backend": art.backend,
        "rounds": art.n_rounds,
        "section_totals": art.metrics.totals_by_section(),
        "fleet_total": art.metrics.fleet_total(),
        "uncontrolled_total": art.uncontrolled_total,
        "controlled_total": art.controlled_total,
        "improvement_pct": art.improvement_pct(),
        "converged": art.converged.converged,
        "converged_round": art.converged.round_index,
        "final_recommendation_kmh": art.final_recommendation(),
        "flags": art.flags,
    }
    if art.ev_phases:
        d["ev_phases"] = [
            {
                "phase": p.phase,
                "forced_speed_kmh": p.forced_speed_kmh,
                "energy_kwh": p.energy_kwh,
                "distance_km": p.distance_km,
                "kwh_per_km": p.kwh_per_km,
            }
            for p in art.ev_phases
        ]
        d["oracle_y_star"] = art.oracle_y_star
    return d


def _format_summary(art) -> str:
    lines = [
        f"{art.scenario_name} (seed {art.seed}, {art.backend} backend): "
        f"{art.n_rounds} rounds",
    ]
    for name, total in art.metrics.totals_by_section().items():
        lines.append(f"  {name}: {total:.1f}")
    if art.uncontrolled_total > 0:
        lines.append(f"  improvement: {art.improvement_pct():.2f}%")
    if art.converged.converged:
        lines.append(f"  consensus at round {art.converged.round_index}, "
                     f"final recommendation {art.final_recommendation():.2f} km/h")
    else:
        lines.append("  consensus: not reached within the run")
    for p in art.ev_phases:
        speed = "algorithm" if p.forced_speed_kmh is None else f"{p.forced_speed_kmh:.2f} km/h"
        lines.append(f"  phase {p.phase} ({speed}): {p.kwh_per_km:.4f} kWh/km over {p.distance_km:.1f} km")
    return "\n".join(lines)


def cmd_oracle(args) -> int:
    lo, hi = (float(x) for x in args.range.split(","))
    if args.fleet:
        curves = []
        for part in args.fleet.split(","):
            count_s, _, name = part.strip().partition("x")
            curves += [ice_preset(name, v_lo=lo, v_hi=hi)] * int(count_s)
    elif args.scenario:
        scenario = load_scenario(args.scenario)
        seed = scenario.seed if args.seed is None else args.seed
        curves = build_fleet(scenario, seed).curves
        lo, hi = scenario.consensus.v_lo, scenario.consensus.v_hi
    else:
        print("oracle needs --scenario or --fleet", file=sys.stderr)
        return 2
    report = centralized_optimum(curves, (lo, hi), tol=args.tol)
    print(report)
    return 0


def cmd_sweep(args) -> int:
    scenario, seed, backend = _resolve(args)
    scenario = scenario.with_overrides(seed=seed)
    axis, _, values_s = args.sweep.partition("=")
    if not values_s:
        raise ConfigError("sweep", "expected AXIS=V1,V2,...")
    values = [float(x) for x in values_s.split(",")]
    rows = run_sweep(scenario, axis.strip(), values, args.seeds, backend=backend)
    out_lines = [SWEEP_COLUMNS]
    for r in rows:
        out_lines.append(
            f"{r.value!r},{r.seed},{r.converged_round},"
            f"{r.uncontrolled_total!r},{r.controlled_total!r},{r.improvement_pct!r}"
        )
    text = _header(scenario, seed, backend.NAME) + "\n".join(out_lines) + "\n"
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"sweep_{axis.strip()}.csv").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_audit(args) -> int:
    log = MessageLog.load(args.log)
    verdict = audit_privacy(log)
    print(verdict)
    return 0 if verdict.passed else 1


def cmd_ev_threephase(args) -> int:
    scenario, seed, backend = _resolve(args)
    if scenario.ev is None:
        raise ConfigError("ev", "ev-threephase needs an EV scenario")
    art = run_scenario(scenario, seed=seed, backend=backend, collect_log=True)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_metrics_csv(out_dir / "metrics.csv", scenario, seed, art)
        art.message_log.dump(out_dir / "messages.log")
        (out_dir / "summary.json").write_text(json.dumps(_summary(art), indent=2) + "\n")
    print(_format_summary(art))
    return 0


def cmd_bench(args) -> int:
    scenario = load_scenario(args.scenario)
    seed = scenario.seed if args.seed is None else args.seed
    names = kernels.available_backends()
    if len(names) < 2:
        print("compiled backend not built; benchmarking python backend only")
    results = {}
    for name in names:
        backend = kernels.load_backend(name)
        best = float("inf")
        for _ in range(max(1, args.repeat)):
            t0 = time.perf_counter()
            art = run_scenario(scenario, seed=seed, backend=backend, collect_log=False)
            best = min(best, time.perf_counter() - t0)
        results[name] = (best, art)
        print(f"{name:>9}: {best * 1e3:8.1f} ms/run "
              f"(fleet total {art.metrics.fleet_total():.3f})")
    if len(results) == 2:
        py_t, py_art = results["python"]
        c_t, c_art = results["compiled"]
        print(f"speedup: {py_t / c_t:.2f}x")
        diff = abs(py_art.metrics.fleet_total() - c_art.metrics.fleet_total())
        scale = max(1.0, abs(py_art.metrics.fleet_total()))
        print(f"fleet-total relative difference: {diff / scale:.3e}")
        rec_a, rec_b = py_art.rec_mean, c_art.rec_mean
        mask = np.isfinite(rec_a) & np.isfinite(rec_b)
        if mask.any():
            print(f"max |rec mean diff|: {np.abs(rec_a[mask] - rec_b[mask]).max():.3e} km/h")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
