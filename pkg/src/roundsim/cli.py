"""Batch experiment runner: scenario sweeps over penetration rates and seeds.

Command surface:

    roundsim run <scenario> --out <dir> [--mpr <list>] [--seeds <list>] [--jobs <n>]
    roundsim validate <scenario>

Exit codes: 0 success, 2 configuration error, 3 invariant violation during a
run (artifacts are retained for inspection).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import engine, metrics, runio
from .engine import ConfigError
from .scenario import Scenario, ScenarioError, load_scenario, validation_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def _run_dir(out: str, mpr: float, seed: int) -> str:
    return os.path.join(out, f"mpr_{round(mpr * 100)}", f"seed_{seed}")


def _execute_one(args: tuple) -> dict:
    """Run one (mpr, seed) cell and write its artifacts; returns a digest."""
    scenario, mpr, seed, out = args
    cfg = scenario.sim_config(mpr=mpr, seed=seed)
    result = engine.run(
        cfg,
        geom=scenario.geometry,
        limits=scenario.limits,
        safety=scenario.safety,
        driver=scenario.driver,
    )
    moe = runio.write_run_csvs(result, _run_dir(out, mpr, seed), scenario.fuel)
    totals = metrics.run_totals(result, scenario.fuel)
    lateral = sum(1 for ev in result.events if ev[2] == "lateral_conflict")
    active_end = result.spawned - result.exited
    return {
        "mpr": mpr,
        "seed": seed,
        "totals": totals,
        "moe": moe,
        "lateral_conflicts": lateral,
        "spawned": result.spawned,
        "exited": result.exited,
        "residual": result.residual,
        "conserved": active_end == result.residual and result.spawned <= cfg.total_vehicles,
    }


def run_scenario(
    path: str,
    out: str,
    mprs: list[float] | None = None,
    seeds: list[int] | None = None,
    jobs: int = 1,
) -> int:
    try:
        scenario = load_scenario(path)
    except (ScenarioError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    mprs = list(mprs if mprs is not None else scenario.mprs)
    seeds = list(seeds if seeds is not None else scenario.seeds)
    for m in mprs:
        if not 0.0 <= m <= 1.0:
            print(f"error: mpr value {m} outside [0, 1]", file=sys.stderr)
            return EXIT_CONFIG

    os.makedirs(out, exist_ok=True)
    cells = [(scenario, mpr, seed, out) for mpr in mprs for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            digests = list(pool.map(_execute_one, cells))
    else:
        digests = [_execute_one(cell) for cell in cells]

    violations = []
    for digest in digests:
        if not digest["conserved"]:
            violations.append(
                f"conservation breach at mpr={digest['mpr']} seed={digest['seed']}: "
                f"spawned {digest['spawned']}, exited {digest['exited']}, "
                f"residual {digest['residual']}"
            )
        if digest["mpr"] == 1.0 and digest["lateral_conflicts"]:
            violations.append(
                f"{digest['lateral_conflicts']} LateralConflict events at mpr=1.0 "
                f"seed={digest['seed']}"
            )

    by_mpr: dict[float, list[dict]] = {}
    for digest in digests:
        by_mpr.setdefault(digest["mpr"], []).append(digest)
    for group in by_mpr.values():
        group.sort(key=lambda d: d["seed"])

    baseline = by_mpr.get(0.0)
    summary_rows = []
    print(f"{'MPR %':>6} {'travel time %':>14} {'delay %':>9} {'fuel %':>8} "
          f"{'residual':>9}")
    for mpr in sorted(by_mpr):
        group = by_mpr[mpr]
        totals = [d["totals"] for d in group]
        agg_tt = sum(t.travel_time for t in totals)
        agg_delay = sum(t.delay for t in totals)
        agg_fuel = sum(t.fuel for t in totals)
        residual = sum(d["residual"] for d in group)
        if baseline is not None and len(baseline) == len(group):
            imps_tt, imps_dl, imps_fu = [], [], []
            for base, scen in zip(baseline, group):
                imps_tt.append(
                    metrics.improvement(base["totals"].travel_time, scen["totals"].travel_time)
                )
                imps_dl.append(metrics.improvement(base["totals"].delay, scen["totals"].delay))
                imps_fu.append(metrics.improvement(base["totals"].fuel, scen["totals"].fuel))
            imp_tt = sum(imps_tt) / len(imps_tt)
            imp_dl = sum(imps_dl) / len(imps_dl)
            imp_fu = sum(imps_fu) / len(imps_fu)
        else:
            imp_tt = imp_dl = imp_fu = None
        summary_rows.append(
            {
                "mpr": mpr,
                "travel_time_improvement_pct": imp_tt,
                "delay_improvement_pct": imp_dl,
                "fuel_improvement_pct": imp_fu,
                "total_travel_time_s": agg_tt,
                "total_delay_s": agg_delay,
                "total_fuel_mL": agg_fuel,
                "vehicles": sum(t.vehicles for t in totals),
                "residual_vehicles": residual,
            }
        )
        def cell(x):
            return f"{x:9.1f}" if x is not None else "        -"
        print(
            f"{round(mpr * 100):>6} {cell(imp_tt):>14} {cell(imp_dl):>9} "
            f"{cell(imp_fu):>8} {residual:>9}"
        )

    runio.write_sweep_summary(os.path.join(out, "summary.csv"), summary_rows)
    runio.write_moe_timeseries(
        os.path.join(out, "moe_timeseries.csv"),
        [(d["mpr"], d["seed"], d["moe"]) for d in digests],
    )

    if violations:
        for message in violations:
            print(f"invariant violation: {message}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def validate(path: str) -> int:
    try:
        scenario = load_scenario(path)
    except (ScenarioError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(validation_report(scenario, path))
    return EXIT_OK


def _parse_mpr_list(raw: str) -> list[float]:
    return [float(p) for p in raw.replace(",", " ").split()]


def _parse_seed_list(raw: str) -> list[int]:
    return [int(p) for p in raw.replace(",", " ").split()]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="roundsim",
        description="Roundabout CAV-coordination simulator and experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario sweep")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--mpr", type=_parse_mpr_list, default=None,
                       help="override sweep MPR list, e.g. '0,0.5,1.0'")
    p_run.add_argument("--seeds", type=_parse_seed_list, default=None,
                       help="override sweep seed list, e.g. '1,2,3'")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="parallel runs (independent and deterministic)")

    p_val = sub.add_parser("validate", help="check a scenario and print derived values")
    p_val.add_argument("scenario")

    args = parser.parse_args(argv)
    if args.command == "run":
        return run_scenario(args.scenario, args.out, args.mpr, args.seeds, args.jobs)
    return validate(args.scenario)


if __name__ == "__main__":
    sys.exit(main())
