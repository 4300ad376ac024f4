"""CSV serialization of run logs and sweep-level outputs.

Formatting is fixed-precision and row order deterministic, so repeated runs
of the same scenario and seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import os

from .engine import RunResult
from .geometry import Approach
from .metrics import (
    FuelModelCoefficients,
    MOERecord,
    _per_vehicle_samples,
    aggregate,
    vehicle_fuel,
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_run_csvs(
    run: RunResult, outdir: str, coeffs: FuelModelCoefficients | None = None
) -> list[MOERecord]:
    """Write the full set of per-run CSVs; returns the MOE series."""
    from .metrics import vehicle_delay, vehicle_travel_time  # avoid cycle at import

    coeffs = coeffs or FuelModelCoefficients()
    os.makedirs(outdir, exist_ok=True)

    _write_csv(
        os.path.join(outdir, "trajectories.csv"),
        ["t", "id", "class", "approach", "s", "v", "u", "mode", "zone"],
        run.trajectories,
    )
    _write_csv(
        os.path.join(outdir, "events.csv"),
        ["t", "id", "event", "detail"],
        run.events,
    )
    _write_csv(
        os.path.join(outdir, "queue.csv"),
        ["event", "t", "id", "vehicle", "class", "approach", "t0", "tm", "tz", "tf_exit"],
        (
            (
                ev.event, ev.t, ev.id, ev.vehicle, ev.vclass.value,
                ev.approach.value, ev.t0, ev.tm, ev.tz, ev.tf_exit,
            )
            for ev in run.queue_events
        ),
    )

    samples = _per_vehicle_samples(run)
    vehicle_rows = []
    for rec in run.vehicles:
        if rec.t_exit_network is not None:
            travel = vehicle_travel_time(rec)
            delay = vehicle_delay(rec, run.geom)
        else:
            travel = None
            delay = None
        fuel = vehicle_fuel(samples.get(rec.id, []), coeffs)
        vehicle_rows.append(
            (
                rec.id, rec.vclass.value, rec.approach.value, rec.t_spawn,
                rec.t_enter_control, rec.tm, rec.tz, rec.tf_exit,
                rec.t_exit_network, travel, delay, fuel,
            )
        )
    _write_csv(
        os.path.join(outdir, "vehicles.csv"),
        [
            "id", "class", "approach", "t_spawn", "t_enter_control", "tm", "tz",
            "tf_exit", "t_exit_network", "travel_time", "delay", "fuel_mL",
        ],
        vehicle_rows,
    )

    moe = aggregate(run, coeffs)
    _write_csv(
        os.path.join(outdir, "moe.csv"),
        [
            "window_start", "approach", "mean_travel_time", "mean_density",
            "cumulative_exits", "total_delay", "cumulative_fuel",
        ],
        moe_rows(moe),
    )
    return moe


def moe_rows(moe: list[MOERecord]):
    for rec in moe:
        for approach in (Approach.EASTBOUND, Approach.WESTBOUND):
            yield (
                rec.window_start,
                approach.value,
                rec.mean_travel_time[approach],
                rec.mean_density[approach],
                rec.cumulative_exits,
                rec.total_delay,
                rec.cumulative_fuel,
            )


def write_sweep_summary(path: str, rows: list[dict]) -> None:
    header = [
        "mpr", "travel_time_improvement_pct", "delay_improvement_pct",
        "fuel_improvement_pct", "total_travel_time_s", "total_delay_s",
        "total_fuel_mL", "vehicles", "residual_vehicles",
    ]
    _write_csv(path, header, ([row.get(h) for h in header] for row in rows))


def write_moe_timeseries(path: str, entries: list[tuple[float, int, list[MOERecord]]]) -> None:
    header = [
        "mpr", "seed", "window_start", "approach", "mean_travel_time",
        "mean_density", "cumulative_exits", "total_delay", "cumulative_fuel",
    ]

    def rows():
        for mpr, seed, moe in entries:
            for row in moe_rows(moe):
                yield (mpr, seed, *row)

    _write_csv(path, header, rows())
