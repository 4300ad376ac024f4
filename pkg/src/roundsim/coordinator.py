"""FIFO merge-time scheduler and trajectory issuer for the control zone.

Every vehicle that enters a control zone is appended to a single network-wide
FIFO queue and assigned the time it may enter the merging zone.  The
assignment honours, in this order of the max/min structure: the predecessor
gap (rear-end headway on the same road, or full merging-zone clearance across
roads), the latest arrival reachable at the minimum speed, the planning
average speed, and the earliest arrival reachable at the maximum speed.
Control-zone exit times follow from the merge time by subtracting the
circulating-arc lag for westbound vehicles.

CAVs receive a closed-form trajectory plan targeting their exit time; human
vehicles occupy queue slots too, but their merge times are kinematic
estimates that are refreshed continuously and never commanded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .geometry import Approach, RoundaboutGeometry
from .trajectory import (
    ActuationLimits,
    BoundaryConditions,
    TrajectoryCoefficients,
    Violation,
    check_feasible,
    solve_cubic,
)
from .vehicle import VClass, VehicleState

# Queue-event rows are logged when an entry's merge time moves by more than
# this amount; it doubles as the replan trigger for CAVs following a
# re-estimated predecessor.
REPLAN_THRESHOLD = 0.5  # s

# The circulating-arc lag is snapped to this dyadic grid (~0.24 ms) so that
# tm - tz reproduces the lag bit-exactly for every float magnitude in a run.
_LAG_QUANTUM_BITS = 12


class AlreadyRegistered(RuntimeError):
    pass


class AlreadyReleased(RuntimeError):
    pass


class SchedulingOrderViolated(RuntimeError):
    pass


@dataclass(frozen=True)
class SafetyParams:
    standstill: float = 1.5  # m
    headway: float = 1.2  # s

    def __post_init__(self):
        if self.standstill <= 0.0 or self.headway <= 0.0:
            raise ValueError("standstill and headway must be positive")


def safe_distance(v: float, params: SafetyParams) -> float:
    """Speed-proportional safe following distance: standstill + headway * v."""
    return params.standstill + params.headway * v


@dataclass
class QueueEntry:
    """Coordinator bookkeeping for one vehicle in the FIFO queue."""

    id: int  # FIFO order, 1-based
    vehicle: int  # engine vehicle id
    vclass: VClass
    approach: Approach
    t0: float  # control-zone entry time
    v0: float  # speed at control-zone entry
    lam: int  # 0 eastbound, 1 westbound
    vbar: float  # planning average speed over the control zone
    tm: float | None = None  # assigned merging-zone entry time
    tz: float | None = None  # control-zone exit time, tm - lam * L_r / v_r
    tf_exit: float | None = None  # merging-zone exit time, once observed
    estimated: bool = False  # tm is a kinematic estimate, not a command


@dataclass
class QueueEvent:
    event: str  # register | assign | replan | release
    t: float
    id: int
    vehicle: int
    vclass: VClass
    approach: Approach
    t0: float
    tm: float | None
    tz: float | None
    tf_exit: float | None


@dataclass
class Coordinator:
    geom: RoundaboutGeometry
    limits: ActuationLimits
    safety: SafetyParams
    follow_up_time: float = 3.2  # s, yield-line discharge estimate for stopped humans

    entries: dict[int, QueueEntry] = field(default_factory=dict)
    events: list[QueueEvent] = field(default_factory=list)
    _by_vehicle: dict[int, int] = field(default_factory=dict)
    _released: set[int] = field(default_factory=set)
    _last_logged_tm: dict[int, float] = field(default_factory=dict)
    _next_id: int = 1

    def __post_init__(self):
        lag = self.geom.circulating_arc / self.geom.roundabout_speed
        self.merge_lag = math.ldexp(
            round(math.ldexp(lag, _LAG_QUANTUM_BITS)), -_LAG_QUANTUM_BITS
        )
        self.zone_clear_time = self.geom.merging_zone_arc / self.geom.roundabout_speed

    # -- queue management ------------------------------------------------------

    def entry_for_vehicle(self, vehicle_id: int) -> QueueEntry | None:
        qid = self._by_vehicle.get(vehicle_id)
        return self.entries[qid] if qid is not None else None

    def predecessor(self, entry: QueueEntry) -> QueueEntry | None:
        return self.entries.get(entry.id - 1)

    def register_arrival(self, state: VehicleState, t: float) -> QueueEntry:
        """Append a vehicle to the FIFO queue and assign its merge time."""
        if state.id in self._by_vehicle:
            raise AlreadyRegistered(f"vehicle {state.id} already in the queue")
        entry = QueueEntry(
            id=self._next_id,
            vehicle=state.id,
            vclass=state.vclass,
            approach=state.approach,
            t0=t,
            v0=state.v,
            lam=0 if state.approach is Approach.EASTBOUND else 1,
            vbar=(state.v + self.geom.roundabout_speed) / 2.0,
        )
        self._next_id += 1
        self.entries[entry.id] = entry
        self._by_vehicle[state.id] = entry.id
        pred = self.predecessor(entry)
        if pred is None:
            tm = self.first_vehicle_tm(entry)
        else:
            tm = self.schedule_merge_time(entry, pred)
        self._set_times(entry, tm)
        self._log("register", t, entry)
        return entry

    def release(self, entry: QueueEntry, t: float) -> None:
        """Record the merging-zone exit time and retire the entry."""
        if entry.id in self._released:
            raise AlreadyReleased(f"queue entry {entry.id} already released")
        entry.tf_exit = t
        self._released.add(entry.id)
        self._log("release", t, entry)

    def is_released(self, entry: QueueEntry) -> bool:
        return entry.id in self._released

    # -- merge-time assignment -------------------------------------------------

    def _lag(self, entry: QueueEntry) -> float:
        return entry.lam * self.merge_lag

    def earliest_tm(self, entry: QueueEntry) -> float:
        return entry.t0 + self.geom.control_zone_length / self.limits.v_max + self._lag(entry)

    def latest_tm(self, entry: QueueEntry) -> float:
        return entry.t0 + self.geom.control_zone_length / self.limits.v_min + self._lag(entry)

    def first_vehicle_tm(self, entry: QueueEntry) -> float:
        """Desired merge time of an unconstrained queue head.

        The externally assigned desire is arrival while holding the entry
        speed, passed through the same max/min structure as scheduled
        vehicles (desire in place of the predecessor term).  The planning
        average-speed floor is kept: dropping it demands a mean transit speed
        of v0 from a plan that must end at the roundabout speed, which can
        only be met by exceeding the speed limit.
        """
        v = min(max(entry.v0, self.limits.v_min), self.limits.v_max)
        desired = entry.t0 + self.geom.control_zone_length / v + self._lag(entry)
        floor_vbar = entry.t0 + self.geom.control_zone_length / entry.vbar + self._lag(entry)
        return max(
            min(desired, self.latest_tm(entry)),
            floor_vbar,
            self.earliest_tm(entry),
        )

    def schedule_merge_time(self, entry: QueueEntry, pred: QueueEntry) -> float:
        """Merge time respecting the predecessor and the admissible window.

        Same-approach pairs keep the safe following distance, evaluated at
        the roundabout speed both vehicles hold at the merge; conflicting
        approaches keep the full merging-zone clearance time so the zone
        holds one vehicle at a time.
        """
        if pred.id >= entry.id:
            raise SchedulingOrderViolated(
                f"entry {entry.id} scheduled against later entry {pred.id}"
            )
        if pred.tm is None:
            raise SchedulingOrderViolated(
                f"predecessor {pred.id} has no merge time assigned yet"
            )
        v_r = self.geom.roundabout_speed
        if pred.approach is entry.approach:
            gap_time = safe_distance(v_r, self.safety) / v_r
        else:
            gap_time = self.geom.merging_zone_arc / v_r
        floor_vbar = entry.t0 + self.geom.control_zone_length / entry.vbar + self._lag(entry)
        return max(
            min(pred.tm + gap_time, self.latest_tm(entry)),
            floor_vbar,
            self.earliest_tm(entry),
        )

    def _set_times(self, entry: QueueEntry, tm: float, estimated: bool = False) -> None:
        lag = self._lag(entry)
        entry.tz = tm - lag
        entry.tm = entry.tz + lag  # exact: lag is dyadically quantized
        entry.estimated = estimated

    def assign(
        self, entry: QueueEntry, tm: float, t: float, estimated: bool = False,
        event: str | None = None,
    ) -> bool:
        """Update an entry's merge time; logs a row when it moved materially.

        Movement is judged against the last logged value so slow per-step
        estimate drift still surfaces in the queue log once it accumulates.
        """
        self._set_times(entry, tm, estimated)
        last = self._last_logged_tm.get(entry.id)
        moved = last is None or abs(entry.tm - last) > REPLAN_THRESHOLD
        if event is not None or moved:
            self._log(event or "assign", t, entry)
        return moved

    # -- trajectory planning ---------------------------------------------------

    def plan(
        self, entry: QueueEntry, state: VehicleState, now: float
    ) -> tuple[TrajectoryCoefficients, list[Violation]]:
        """Solve the vehicle's control-zone trajectory toward its exit time.

        The plan runs from the vehicle's current state to the control-zone
        exit at the roundabout speed.  Violations of the actuation limits are
        reported alongside, never clamped here.
        """
        if entry.vclass is not VClass.CAV:
            raise ValueError(f"entry {entry.id} is not a CAV")
        p_now = state.s - self.geom.control_entry_s()
        remaining = self.geom.control_zone_length - p_now
        # A disturbed vehicle may no longer be able to reach the roundabout
        # speed within the remaining distance; demanding it anyway makes the
        # boundary-value problem unsolvable within the control limits.  Plan
        # to the highest reachable exit speed and let the ring cruise law
        # close the rest.
        vf = min(
            self.geom.roundabout_speed,
            math.sqrt(state.v * state.v + 2.0 * self.limits.u_max * max(remaining, 0.0)),
        )
        bc = BoundaryConditions(
            t0=now,
            tf=entry.tz,
            p0=p_now,
            v0=state.v,
            pf=self.geom.control_zone_length,
            vf=vf,
        )
        coeffs = solve_cubic(bc)
        return coeffs, check_feasible(coeffs, self.limits)

    def reachable_tm(self, entry: QueueEntry, state: VehicleState, now: float) -> float:
        """Earliest merge time reachable from the vehicle's current state.

        Minimum-time arrival at the control-zone exit ending at the
        roundabout speed: accelerate at the limit, cruise at the speed cap if
        reached, brake at the limit to the roundabout speed.  Replans floored
        here stay trackable even for vehicles that fell behind schedule.
        """
        remaining = self.geom.control_zone_length - (state.s - self.geom.control_entry_s())
        if remaining <= 0.0:
            return now + self._lag(entry)
        v = state.v
        v_r = self.geom.roundabout_speed
        u_acc = self.limits.u_max
        u_dec = -self.limits.u_min
        v_cap = self.limits.v_max
        # Peak speed of the accelerate-then-brake profile covering `remaining`.
        v_peak_sq = (
            2.0 * u_acc * u_dec * remaining + u_dec * v * v + u_acc * v_r * v_r
        ) / (u_acc + u_dec)
        if v_peak_sq < max(v, v_r) ** 2:
            # The roundabout speed is unreachable in the remaining distance;
            # the soonest crossing is full throttle all the way.
            tau = (math.sqrt(v * v + 2.0 * u_acc * remaining) - v) / u_acc
            return now + tau + self._lag(entry)
        v_peak = math.sqrt(v_peak_sq)
        if v_peak <= v_cap:
            tau = (v_peak - v) / u_acc + (v_peak - v_r) / u_dec
        else:
            d_acc = max((v_cap * v_cap - v * v) / (2.0 * u_acc), 0.0)
            d_dec = (v_cap * v_cap - v_r * v_r) / (2.0 * u_dec)
            tau = (
                max(v_cap - v, 0.0) / u_acc
                + (v_cap - v_r) / u_dec
                + max(remaining - d_acc - d_dec, 0.0) / v_cap
            )
        return now + tau + self._lag(entry)

    # -- human estimates ---------------------------------------------------------

    def estimate_human_merge_time(
        self, state: VehicleState, now: float, stopped_at_yield: bool = False
    ) -> float:
        """Kinematic prediction of an uncontrolled vehicle's merge entry time.

        A vehicle held at the yield line is predicted to discharge one
        follow-up time plus the zone clearance from now; otherwise the
        remaining distance is divided by its current speed, floored at
        1 m/s so stopped traffic still yields a finite estimate.
        """
        if stopped_at_yield:
            return now + self.follow_up_time + self.zone_clear_time
        d = self.geom.merge_entry_s(state.approach) - state.s
        return now + max(d, 0.0) / max(state.v, 1.0)

    # -- logging -----------------------------------------------------------------

    def _log(self, event: str, t: float, entry: QueueEntry) -> None:
        if entry.tm is not None:
            self._last_logged_tm[entry.id] = entry.tm
        self.events.append(
            QueueEvent(
                event, t, entry.id, entry.vehicle, entry.vclass, entry.approach,
                entry.t0, entry.tm, entry.tz, entry.tf_exit,
            )
        )
