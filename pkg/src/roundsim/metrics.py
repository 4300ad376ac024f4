"""Measures of effectiveness: travel time, delay, density, throughput, fuel.

Fuel uses a polynomial metamodel of speed and acceleration (a cubic cruise
term plus an acceleration term that vanishes while coasting or braking),
integrated trapezoidally over the 1 s trajectory archive.  Delay compares
each vehicle's travel time with the free-flow traversal of its route at the
zone speed limits.  Cross-scenario summaries report percentage improvements
of totals against a baseline, seed by seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .geometry import Approach, RoundaboutGeometry

if TYPE_CHECKING:
    from .engine import RunResult, VehicleRecord


class Incomplete(RuntimeError):
    """The vehicle has not exited the network yet."""


class SummaryError(ValueError):
    pass


@dataclass(frozen=True)
class FuelModelCoefficients:
    """mL/s polynomial coefficients; defaults reproduce the standard metamodel."""

    b0: float = 0.1569
    b1: float = 2.450e-2
    b2: float = -7.415e-4
    b3: float = 5.975e-5
    c0: float = 0.07224
    c1: float = 9.681e-2
    c2: float = 1.075e-3

    def __post_init__(self):
        if self.b0 <= 0.0:
            raise ValueError("idle rate b0 must be positive")


def fuel_rate(v: float, u: float, coeffs: FuelModelCoefficients) -> float:
    """Instantaneous fuel use in mL/s; deceleration contributes no accel term."""
    f = coeffs.b0 + v * (coeffs.b1 + v * (coeffs.b2 + v * coeffs.b3))
    if u > 0.0:
        f += u * (coeffs.c0 + v * (coeffs.c1 + v * coeffs.c2))
    return f if f > 0.0 else 0.0


def vehicle_travel_time(record: "VehicleRecord") -> float:
    """Entry point to data-collection point, in seconds."""
    if record.t_exit_network is None:
        raise Incomplete(f"vehicle {record.id} still in the network")
    return record.t_exit_network - record.t_spawn


def vehicle_delay(record: "VehicleRecord", geom: RoundaboutGeometry) -> float:
    """Travel time in excess of the free-flow traversal, floored at zero."""
    return max(vehicle_travel_time(record) - geom.free_flow_time(record.approach), 0.0)


def density(
    snapshot: list[tuple], approach: Approach, geom: RoundaboutGeometry
) -> float:
    """Vehicles per km on the approach link [0, approach_length)."""
    count = sum(
        1 for row in snapshot if row[3] == approach.value and row[4] < geom.approach_length
    )
    return count / (geom.approach_length / 1000.0)


@dataclass
class MOERecord:
    """Aggregated network measures for one 60 s window."""

    window_start: float
    mean_travel_time: dict[Approach, float | None]
    mean_density: dict[Approach, float]
    cumulative_exits: int
    total_delay: float  # cumulative over exited vehicles, s
    cumulative_fuel: float  # mL


@dataclass
class RunTotals:
    travel_time: float  # s, summed over all dispatched vehicles
    delay: float  # s
    fuel: float  # mL
    vehicles: int
    residual: int


def _per_vehicle_samples(run: "RunResult") -> dict[int, list[tuple[float, float, float]]]:
    samples: dict[int, list[tuple[float, float, float]]] = {}
    for row in run.trajectories:
        samples.setdefault(row[1], []).append((row[0], row[5], row[6]))
    return samples


def vehicle_fuel(
    samples: list[tuple[float, float, float]], coeffs: FuelModelCoefficients
) -> float:
    """Trapezoidal integral of the fuel rate over (t, v, u) samples, in mL."""
    total = 0.0
    for (t0, v0, u0), (t1, v1, u1) in zip(samples, samples[1:]):
        total += (t1 - t0) * 0.5 * (fuel_rate(v0, u0, coeffs) + fuel_rate(v1, u1, coeffs))
    return total


def aggregate(
    run: "RunResult", coeffs: FuelModelCoefficients | None = None
) -> list[MOERecord]:
    """MOE series on aggregation windows over the whole run.

    Densities average the per-second snapshots inside each window; travel
    times average the vehicles that exited during the window; exits, delay
    and fuel accumulate from the start of the run.  Fuel segments between
    consecutive samples are charged to the window containing the segment
    start, so the windowed series sums exactly to the run total.
    """
    coeffs = coeffs or FuelModelCoefficients()
    cfg = run.cfg
    geom = run.geom
    width = cfg.aggregate_every
    n_windows = int(cfg.duration // width)
    approaches = (Approach.EASTBOUND, Approach.WESTBOUND)

    counts = {a: [0] * n_windows for a in approaches}
    # The archive samples on a fixed grid, so every window holds the same
    # number of snapshots whether or not vehicles were present.
    snapshots_per_window = round(width / cfg.log_trajectory_every)
    for row in run.trajectories:
        w = int(row[0] // width)
        if w >= n_windows:
            continue
        if row[4] < geom.approach_length:
            counts[Approach(row[3])][w] += 1

    fuel_per_window = [0.0] * n_windows
    for samples in _per_vehicle_samples(run).values():
        for (t0, v0, u0), (t1, v1, u1) in zip(samples, samples[1:]):
            w = int(t0 // width)
            if w < n_windows:
                fuel_per_window[w] += (
                    (t1 - t0) * 0.5 * (fuel_rate(v0, u0, coeffs) + fuel_rate(v1, u1, coeffs))
                )

    exits_per_window = [0] * n_windows
    delay_per_window = [0.0] * n_windows
    tt_sums = {a: [0.0] * n_windows for a in approaches}
    tt_counts = {a: [0] * n_windows for a in approaches}
    for rec in run.vehicles:
        if rec.t_exit_network is None:
            continue
        w = int(rec.t_exit_network // width)
        if w >= n_windows:
            w = n_windows - 1
        exits_per_window[w] += 1
        delay_per_window[w] += vehicle_delay(rec, geom)
        tt_sums[rec.approach][w] += vehicle_travel_time(rec)
        tt_counts[rec.approach][w] += 1

    records = []
    cum_exits = 0
    cum_delay = 0.0
    cum_fuel = 0.0
    for w in range(n_windows):
        cum_exits += exits_per_window[w]
        cum_delay += delay_per_window[w]
        cum_fuel += fuel_per_window[w]
        mean_tt = {}
        mean_density = {}
        for a in approaches:
            mean_tt[a] = (
                tt_sums[a][w] / tt_counts[a][w] if tt_counts[a][w] else None
            )
            mean_density[a] = (
                counts[a][w] / snapshots_per_window
            ) / (geom.approach_length / 1000.0)
        records.append(
            MOERecord(
                window_start=w * width,
                mean_travel_time=mean_tt,
                mean_density=mean_density,
                cumulative_exits=cum_exits,
                total_delay=cum_delay,
                cumulative_fuel=cum_fuel,
            )
        )
    return records


def run_totals(
    run: "RunResult", coeffs: FuelModelCoefficients | None = None
) -> RunTotals:
    """Totals over all dispatched vehicles.

    Vehicles still in the network at the end contribute their partial travel
    time (and its delay in excess of free flow) plus the fuel they burned, so
    baseline and scenario totals stay comparable even when a congested run
    does not fully clear.
    """
    coeffs = coeffs or FuelModelCoefficients()
    geom = run.geom
    travel = 0.0
    delay = 0.0
    for rec in run.vehicles:
        if rec.t_exit_network is not None:
            tt = vehicle_travel_time(rec)
        else:
            tt = run.cfg.duration - rec.t_spawn
        travel += tt
        delay += max(tt - geom.free_flow_time(rec.approach), 0.0)
    fuel = sum(
        vehicle_fuel(s, coeffs) for s in _per_vehicle_samples(run).values()
    )
    return RunTotals(
        travel_time=travel,
        delay=delay,
        fuel=fuel,
        vehicles=len(run.vehicles),
        residual=run.residual,
    )


@dataclass
class ImprovementSummary:
    """Mean percentage improvements of a scenario over its per-seed baselines."""

    travel_time_pct: float
    delay_pct: float
    fuel_pct: float
    baseline: RunTotals = field(repr=False)
    scenario: RunTotals = field(repr=False)


def improvement(baseline: float, scenario: float) -> float:
    if baseline == 0.0:
        return 0.0
    return 100.0 * (baseline - scenario) / baseline


def summarize(
    baselines: list["RunResult"],
    scenarios: list["RunResult"],
    coeffs: FuelModelCoefficients | None = None,
) -> ImprovementSummary:
    """Seed-by-seed improvement of scenario totals over baseline totals.

    Both lists must pair up run for run (same seeds, same dispatched vehicle
    counts); percentages are averaged over the pairs.
    """
    if len(baselines) != len(scenarios) or not baselines:
        raise SummaryError(
            f"need matching non-empty run lists, got {len(baselines)} baselines "
            f"and {len(scenarios)} scenarios"
        )
    tt, dl, fu = [], [], []
    base_acc = RunTotals(0.0, 0.0, 0.0, 0, 0)
    scen_acc = RunTotals(0.0, 0.0, 0.0, 0, 0)
    for base, scen in zip(baselines, scenarios):
        if base.spawned != scen.spawned:
            raise SummaryError(
                f"vehicle counts differ: baseline spawned {base.spawned}, "
                f"scenario spawned {scen.spawned}"
            )
        b = run_totals(base, coeffs)
        s = run_totals(scen, coeffs)
        tt.append(improvement(b.travel_time, s.travel_time))
        dl.append(improvement(b.delay, s.delay))
        fu.append(improvement(b.fuel, s.fuel))
        for acc, tot in ((base_acc, b), (scen_acc, s)):
            acc.travel_time += tot.travel_time
            acc.delay += tot.delay
            acc.fuel += tot.fuel
            acc.vehicles += tot.vehicles
            acc.residual += tot.residual
    n = len(tt)
    return ImprovementSummary(
        travel_time_pct=sum(tt) / n,
        delay_pct=sum(dl) / n,
        fuel_pct=sum(fu) / n,
        baseline=base_acc,
        scenario=scen_acc,
    )
