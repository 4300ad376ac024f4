"""Fixed-step microscopic simulation of the two-approach roundabout.

The loop advances a mutable world at a constant control step: due arrivals
spawn, the coordinator refreshes estimated and scheduled merge times,
every vehicle picks an acceleration (planned trajectory tracking, car
following, or the on-off safety fallback), states integrate
semi-implicitly, and zone-boundary crossings fire registration, merge and
despawn events.  Runs are bitwise deterministic for a given configuration
and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .coordinator import Coordinator, QueueEntry, SafetyParams, safe_distance
from .driver_model import (
    SWITCH_HYSTERESIS,
    DriverParams,
    GapDecision,
    desired_speed,
    gap_acceptance,
    idm_accel,
)
from .geometry import Approach, RoundaboutGeometry, Zone
from .trajectory import ActuationLimits, DegenerateHorizon, TrajectoryCoefficients
from .vehicle import Mode, VClass, VehicleState

# Feedforward trajectory tracking gains (position / speed corrections).
TRACK_KP = 0.5  # 1/s^2
TRACK_KV = 1.0  # 1/s

# Activation margin of the safety switch behind CAV leaders.  Scheduling
# guarantees the safe distance only at the merge point, so tightly spaced
# arrivals may sit just below it mid-zone; the margin keeps millimetre
# tracking jitter from flipping modes while staying inside the 0.5 m
# rear-end acceptance slack.
CAV_LEADER_MARGIN = 0.4  # m

# Minimum dwell in a control mode; together with the hysteresis band this
# keeps the on-off switch from chattering when the leader's state moves the
# activation threshold between steps.
MODE_DWELL = 1.0  # s

# Gap acceptance is consulted near the yield line; the window grows with the
# comfortable braking distance so a Yield decision can still halt the vehicle
# at the line instead of inside the conflict zone.
YIELD_WINDOW = 5.0  # m

# A spawn is delayed while the newest vehicle on the route is closer than
# standstill + this margin to the input point.
SPAWN_CLEARANCE_MARGIN = 2.0  # m

# A schedule drift toward later merge times eats directly into the
# predecessor's clearance, so it triggers a replan within the arrival
# tolerance; drifts that free room are followed lazily to bound churn.
REPLAN_LATER_THRESHOLD = 0.15  # s
REPLAN_EARLIER_THRESHOLD = 0.5  # s

# Replans are skipped when the remaining horizon is shorter than this;
# the vehicle is about to cross the control-zone exit anyway.
MIN_REPLAN_HORIZON = 0.2  # s

# Replans are also skipped once the remaining control-zone distance is too
# short to absorb a schedule change: past this point the merge time is
# committed (the ring is traversed at the imposed speed), and re-assigning
# it would only misstate the time the vehicle actually achieves.
MIN_REPLAN_DISTANCE = 5.0  # m

# Kinematic merge-time estimates of uncontrolled vehicles are low-pass
# filtered with this time constant before entering the schedule; raw
# per-step estimates jitter with the estimated vehicle's speed and would
# otherwise churn follower replans.  Estimates that jump by more than the
# snap distance follow immediately (a vehicle stopping at the yield line).
ESTIMATE_FILTER_TAU = 1.0  # s
ESTIMATE_SNAP = 5.0  # s

# Conflicting-approach co-occupancy of the merging zone counts as a lateral
# conflict once the measured overlap exceeds the same tolerance the
# scheduler's arrival fidelity is held to; the admissible schedule itself is
# boundary-touching (a vehicle may enter exactly when its predecessor
# exits), so realization jitter below this is logged as a touch instead.
LATERAL_OVERLAP_TOLERANCE = 0.2  # s


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    step: float = 0.05
    duration: float = 1200.0
    dispatch_window: float = 900.0
    demand_per_approach: float = 800.0  # veh/h
    total_vehicles: int = 400
    mpr: float = 1.0
    seed: int = 1
    min_generation_headway: float = 1.0
    log_trajectory_every: float = 1.0
    aggregate_every: float = 60.0

    def __post_init__(self):
        if self.step <= 0.0:
            raise ConfigError("step must be positive")
        if self.dispatch_window > self.duration:
            raise ConfigError("dispatch_window must not exceed duration")
        if self.total_vehicles % 2 != 0:
            raise ConfigError("total_vehicles must split evenly across two approaches")
        if not 0.0 <= self.mpr <= 1.0:
            raise ConfigError(f"mpr must lie in [0, 1], got {self.mpr}")
        if self.demand_per_approach <= 0.0:
            raise ConfigError("demand_per_approach must be positive")
        expected = self.demand_per_approach * self.dispatch_window / 3600.0
        if abs(expected - self.total_vehicles / 2) > 1.0:
            raise ConfigError(
                f"demand {self.demand_per_approach} vphpl over {self.dispatch_window} s "
                f"implies {expected:.1f} vehicles per approach, inconsistent with "
                f"total_vehicles {self.total_vehicles}"
            )
        if self.min_generation_headway <= 0.0:
            raise ConfigError("min_generation_headway must be positive")


def generate_arrivals(cfg: SimConfig) -> dict[Approach, list[tuple[float, VClass]]]:
    """Per-approach spawn schedule: times and class labels.

    Headways are shifted-exponential with the demand's mean and the minimum
    generation headway as shift, rescaled so exactly ``total_vehicles / 2``
    arrivals land inside the dispatch window.  Deterministic per seed.
    """
    n = cfg.total_vehicles // 2
    mean = 3600.0 / cfg.demand_per_approach
    shift = cfg.min_generation_headway
    if mean <= shift:
        raise ConfigError(
            f"mean headway {mean:.2f} s must exceed min_generation_headway {shift:.2f} s"
        )
    # Land the last arrival about half a mean headway before the window closes.
    target_sum = cfg.dispatch_window - mean / 2.0
    if target_sum <= n * shift:
        raise ConfigError(
            f"{n} arrivals at min headway {shift} s do not fit the "
            f"{cfg.dispatch_window} s dispatch window"
        )
    schedule: dict[Approach, list[tuple[float, VClass]]] = {}
    for idx, approach in enumerate((Approach.EASTBOUND, Approach.WESTBOUND)):
        rng = np.random.default_rng([cfg.seed, idx])
        exponentials = rng.exponential(mean - shift, n)
        headways = shift + exponentials * ((target_sum - n * shift) / exponentials.sum())
        times = np.cumsum(headways)
        labels = rng.random(n) < cfg.mpr
        schedule[approach] = [
            (float(t), VClass.CAV if cav else VClass.HUMAN)
            for t, cav in zip(times, labels)
        ]
    return schedule


@dataclass(eq=False, repr=False)
class _Vehicle(VehicleState):
    leader: "_Vehicle | None" = None
    plan: TrajectoryCoefficients | None = None
    entry: QueueEntry | None = None
    yield_hold: bool = False
    committed: bool = False
    spawn_delayed: bool = False
    t_merge_entry: float | None = None
    s_prev: float = 0.0
    last_mode_change: float = -math.inf
    last_neg_gap_log: float = -math.inf


@dataclass
class VehicleRecord:
    id: int
    vclass: VClass
    approach: Approach
    t_spawn: float
    t_enter_control: float | None
    tm: float | None
    tz: float | None
    tf_exit: float | None
    t_exit_network: float | None
    t_merge_entry: float | None
    estimated_tm: bool


@dataclass
class RunResult:
    cfg: SimConfig
    geom: RoundaboutGeometry
    trajectories: list[tuple]  # (t, id, class, approach, s, v, u, mode, zone)
    events: list[tuple]  # (t, id, event, detail)
    queue_events: list
    vehicles: list[VehicleRecord]
    spawned: int
    exited: int
    residual: int


class World:
    """Mutable simulation state advanced by :meth:`step`."""

    def __init__(
        self,
        cfg: SimConfig,
        geom: RoundaboutGeometry | None = None,
        limits: ActuationLimits | None = None,
        safety: SafetyParams | None = None,
        driver: DriverParams | None = None,
    ):
        self.cfg = cfg
        self.geom = geom or RoundaboutGeometry()
        self.limits = limits or ActuationLimits()
        self.safety = safety or SafetyParams()
        self.driver = driver or DriverParams()
        self.coordinator = Coordinator(
            self.geom, self.limits, self.safety, self.driver.follow_up_time
        )

        self.t = 0.0
        self._step_index = 0
        self._steps_per_log = max(1, round(cfg.log_trajectory_every / cfg.step))

        self._pending = {
            a: list(reversed(sched)) for a, sched in generate_arrivals(cfg).items()
        }
        self.route: dict[Approach, list[_Vehicle]] = {
            Approach.EASTBOUND: [],
            Approach.WESTBOUND: [],
        }
        self._veh_by_qid: dict[int, _Vehicle] = {}
        self.in_merge: dict[Approach, list[_Vehicle]] = {
            Approach.EASTBOUND: [],
            Approach.WESTBOUND: [],
        }
        self.all_vehicles: list[_Vehicle] = []
        self._active_entries: list[_Vehicle] = []  # registered, upstream of merge
        self.last_proceed: dict[Approach, float] = {
            Approach.EASTBOUND: -math.inf,
            Approach.WESTBOUND: -math.inf,
        }

        self.trajectories: list[tuple] = []
        self.events: list[tuple] = []
        self.spawned = 0
        self.exited = 0
        self._next_vehicle_id = 1
        # Open conflicting-approach co-occupancies of the merging zone:
        # (occupant, entrant, entrant entry time, entrant was controlled CAV).
        self._merge_pairs: list[tuple[_Vehicle, _Vehicle, float, bool]] = []

        g = self.geom
        self._control_entry = g.control_entry_s()
        self._merge_entry = {a: g.merge_entry_s(a) for a in Approach}
        self._merge_exit = {a: g.merge_exit_s(a) for a in Approach}
        self._route_end = {a: g.route_length(a) for a in Approach}
        # Humans start braking toward the roundabout speed within comfortable
        # stopping distance of the lower-speed boundary at the approach end.
        self._slow_boundary = g.approach_length

    # -- event log ---------------------------------------------------------------

    def _log_event(self, t: float, vid: int, event: str, detail: str = "") -> None:
        self.events.append((t, vid, event, detail))

    # -- spawning ----------------------------------------------------------------

    def _spawn_due(self, t_next: float) -> None:
        for approach in (Approach.EASTBOUND, Approach.WESTBOUND):
            pending = self._pending[approach]
            while pending and pending[-1][0] <= t_next:
                vehicles = self.route[approach]
                tail = vehicles[-1] if vehicles else None
                if tail is not None and tail.s < self.safety.standstill + SPAWN_CLEARANCE_MARGIN:
                    break  # entry cell occupied; retry next step
                t_due, vclass = pending.pop()
                v0 = self.geom.entry_speed_limit
                if tail is not None:
                    # Match speed so the newcomer can comfortably settle behind
                    # the tail instead of ramming it.
                    gap = tail.s - self.safety.standstill
                    v_safe = tail.v + math.sqrt(
                        2.0 * self.driver.comfort_decel * max(gap, 0.0)
                    )
                    v0 = min(v0, v_safe)
                veh = _Vehicle(
                    id=self._next_vehicle_id,
                    vclass=vclass,
                    approach=approach,
                    s=0.0,
                    v=v0,
                    u=0.0,
                    mode=Mode.UNCONTROLLED if vclass is VClass.CAV else Mode.HUMAN_DRIVING,
                    t_spawn=t_next,
                    leader=tail,
                )
                self._next_vehicle_id += 1
                vehicles.append(veh)
                self.all_vehicles.append(veh)
                self.spawned += 1
                self._log_event(t_next, veh.id, "spawn", vclass.value)
                if t_next - t_due > self.cfg.step and not veh.spawn_delayed:
                    veh.spawn_delayed = True
                    self._log_event(
                        t_next, veh.id, "spawn_delayed", f"due={t_due:.3f}"
                    )

    # -- coordinator refresh -------------------------------------------------------

    def _smoothed_estimate(self, veh: _Vehicle, t: float) -> float:
        coord = self.coordinator
        entry = veh.entry
        stopped = veh.yield_hold and veh.v < 0.5
        tm = coord.estimate_human_merge_time(veh, t, stopped_at_yield=stopped)
        if entry.estimated and abs(tm - entry.tm) < ESTIMATE_SNAP:
            tm = entry.tm + (self.cfg.step / ESTIMATE_FILTER_TAU) * (tm - entry.tm)
        return tm

    def _skippable_pred(self, pred: QueueEntry, for_entry: QueueEntry) -> bool:
        """Queue entries a westbound vehicle need not wait for.

        Eastbound traffic yields to the circulating (westbound) flow, so an
        eastbound predecessor that has not committed to the merge will, by
        right of way, enter after the westbound vehicle being scheduled;
        waiting on its receding estimate would invert the priority and stall
        the ring.  Committed vehicles, vehicles in or past the zone, and
        CAVs executing their plan keep their constraint.
        """
        if not (
            pred.approach is Approach.EASTBOUND
            and for_entry.approach is Approach.WESTBOUND
        ):
            return False
        veh = self._veh_by_qid.get(pred.id)
        if veh is None or veh.t_merge_entry is not None or veh.committed:
            return False
        if veh.vclass is VClass.HUMAN:
            return True
        return veh.mode is Mode.FOLLOW and (veh.yield_hold or veh.v < 2.0)

    def _schedule_candidate(self, entry: QueueEntry) -> float:
        coord = self.coordinator
        qid = entry.id - 1
        while qid >= 1 and self._skippable_pred(coord.entries[qid], entry):
            qid -= 1
        if qid < 1:
            return coord.first_vehicle_tm(entry)
        return coord.schedule_merge_time(entry, coord.entries[qid])

    def _refresh_schedules(self, t: float) -> None:
        coord = self.coordinator
        for veh in self._active_entries:
            entry = veh.entry
            if veh.vclass is VClass.HUMAN:
                coord.assign(entry, self._smoothed_estimate(veh, t), t, estimated=True)
                continue
            if veh.s < self.geom.approach_length:
                # CAV in the control zone: keep the plan aligned with the
                # schedule whether tracking alone or bounded by the follower
                # law; in follower mode the assignment additionally carries
                # the later of schedule and kinematic reality for successors.
                candidate = self._schedule_candidate(entry)
                if veh.plan is None:
                    self._replan(veh, candidate, t)
                else:
                    target = veh.plan.valid_to + entry.lam * coord.merge_lag
                    drift = candidate - target
                    if drift > REPLAN_LATER_THRESHOLD or drift < -REPLAN_EARLIER_THRESHOLD:
                        self._replan(veh, candidate, t)
                if veh.mode is Mode.FOLLOW:
                    est = self._smoothed_estimate(veh, t)
                    sched = (
                        veh.plan.valid_to + entry.lam * coord.merge_lag
                        if veh.plan is not None
                        else candidate
                    )
                    coord.assign(entry, max(sched, est), t, estimated=True)
            elif veh.mode is Mode.FOLLOW:
                # Past the control zone the cruise law is the schedule; only
                # a blocked follower needs a kinematic prediction.
                coord.assign(entry, self._smoothed_estimate(veh, t), t, estimated=True)

    def _replan(self, veh: _Vehicle, tm: float, t: float) -> None:
        """Re-solve a CAV's trajectory toward an updated merge time.

        The merge time is floored at what the vehicle can still reach at the
        maximum speed, and the assignment is updated so successors schedule
        against the value actually executed.
        """
        coord = self.coordinator
        entry = veh.entry
        remaining = self.geom.approach_length - veh.s
        if remaining < MIN_REPLAN_DISTANCE:
            return  # merge time committed; keep the executed plan and assignment
        tm = max(tm, coord.reachable_tm(entry, veh, t))
        tz = tm - entry.lam * coord.merge_lag
        if tz - t < MIN_REPLAN_HORIZON:
            return  # about to cross the control-zone exit; keep the old plan
        coord.assign(entry, tm, t, estimated=False, event="replan")
        try:
            veh.plan, violations = coord.plan(entry, veh, t)
        except DegenerateHorizon:
            return
        if violations:
            worst = violations[0]
            self._log_event(
                t, veh.id, "plan_infeasible",
                f"{worst.bound}={worst.value:.3f}@t={worst.t:.2f}",
            )

    # -- control selection -----------------------------------------------------------

    def _circulating_conflicts(self) -> list[_Vehicle]:
        """Westbound vehicles that have not yet cleared the merge point.

        A vehicle in the opening stretch of the zone still blocks the entry;
        one past the midpoint has cleared the conflict point and constrains
        the entrant only through car following inside the shared arc.
        """
        cleared = self._merge_entry[Approach.WESTBOUND] + self.geom.merging_zone_arc / 2.0
        return [v for v in self.route[Approach.WESTBOUND] if v.s < cleared]

    def _cross_leader_gap(self, veh: _Vehicle) -> tuple[float, _Vehicle] | None:
        """Nearest conflicting-approach vehicle ahead inside the merging zone.

        Positions map into the follower's frame through distance past the
        merge entry; vehicles still upstream of the entry are invisible to
        the other approach (the yield line does not block the ring).
        """
        other = (
            Approach.WESTBOUND if veh.approach is Approach.EASTBOUND else Approach.EASTBOUND
        )
        occupants = self.in_merge[other]
        if not occupants:
            return None
        my_d = veh.s - self._merge_entry[veh.approach]
        best = None
        for occ in occupants:
            d = occ.s - self._merge_entry[other]
            if d > my_d:
                gap = d - my_d
                if best is None or gap < best[0]:
                    best = (gap, occ)
        return best

    def _yield_line_accel(
        self, veh: _Vehicle, t: float, v_des: float, gap: float | None, closing: float
    ) -> float | None:
        """Gap acceptance at the eastbound yield line.

        Applies to eastbound humans and to CAVs degraded to follower mode,
        which inherit the yield rule of the traffic they are embedded in.
        Returns the braking command while the vehicle is held (a virtual
        standing leader at the merge entry), or None once free to go.
        """
        drv = self.driver
        entry_s = self._merge_entry[Approach.EASTBOUND]
        dist_to_merge = entry_s - veh.s
        leader = veh.leader
        # Decisions start one second of travel before the point of no return
        # so a Yield can still halt the vehicle at the line.
        stopping_need = veh.v * veh.v / (2.0 * drv.hard_decel) + drv.standstill
        window = max(YIELD_WINDOW, stopping_need + veh.v)
        if dist_to_merge <= window and (leader is None or leader.s >= entry_s):
            if dist_to_merge < 0.3 or (
                not veh.yield_hold and dist_to_merge <= stopping_need
            ):
                # Too close to halt at the line; entering is the only option.
                veh.committed = True
                veh.yield_hold = False
                self.last_proceed[Approach.EASTBOUND] = t
            else:
                decision = gap_acceptance(
                    veh,
                    self._circulating_conflicts(),
                    t,
                    drv,
                    self.geom,
                    merging_zone_occupied=bool(
                        self.in_merge[Approach.WESTBOUND] or self.in_merge[Approach.EASTBOUND]
                    ),
                    last_proceed_t=self.last_proceed[Approach.EASTBOUND],
                )
                if decision is GapDecision.PROCEED:
                    veh.committed = True
                    veh.yield_hold = False
                    self.last_proceed[Approach.EASTBOUND] = t
                    self._log_event(t, veh.id, "proceed", f"dist={dist_to_merge:.2f}")
                elif not veh.yield_hold:
                    veh.yield_hold = True
                    self._log_event(t, veh.id, "yield_hold", f"dist={dist_to_merge:.2f}")
        if veh.yield_hold and not veh.committed:
            u_stop = idm_accel(veh.v, v_des, dist_to_merge, veh.v, drv)
            if gap is not None:
                return min(u_stop, idm_accel(veh.v, v_des, gap, closing, drv))
            return u_stop
        return None

    def _human_accel(self, veh: _Vehicle, t: float) -> float:
        drv = self.driver
        v_des = desired_speed(self._zone_fast(veh), drv)
        # Anticipate the lower roundabout speed at the approach end.
        if veh.s < self._slow_boundary and v_des > drv.desired_speed_roundabout:
            dist = self._slow_boundary - veh.s
            v_r = drv.desired_speed_roundabout
            if veh.v > v_r and (veh.v**2 - v_r**2) / (2.0 * drv.comfort_decel) >= dist:
                v_des = v_r

        leader = veh.leader
        gap = leader.s - veh.s if leader is not None else None
        closing = veh.v - leader.v if leader is not None else 0.0

        # Yield-line logic for eastbound humans approaching the merge entry.
        if veh.approach is Approach.EASTBOUND and not veh.committed:
            held = self._yield_line_accel(veh, t, v_des, gap, closing)
            if held is not None:
                return held

        # Cross-approach leader inside the shared merging arc.
        cross = None
        if veh.s + 30.0 >= self._merge_entry[veh.approach]:
            cross = self._cross_leader_gap(veh)
        if cross is not None and (gap is None or cross[0] < gap):
            gap = cross[0]
            closing = veh.v - cross[1].v
        if gap is not None and gap <= 0.0:
            self._log_negative_gap(veh, t, gap)
            return -drv.hard_decel
        return idm_accel(veh.v, v_des, gap, closing, drv)

    def _cav_accel(self, veh: _Vehicle, t: float) -> float:
        drv = self.driver
        s = veh.s
        leader = veh.leader
        gap = leader.s - s if leader is not None else None

        # Shared-arc leader from the conflicting approach (human stragglers).
        cross = None
        if s + 30.0 >= self._merge_entry[veh.approach]:
            cross = self._cross_leader_gap(veh)

        if gap is not None and gap <= 0.0:
            self._log_negative_gap(veh, t, gap)
            return -drv.hard_decel

        # On-off safety switch: always for human leaders, and with a small
        # margin for CAV leaders whose spacing the scheduler only guarantees
        # at the merge point.  The speed-proportional distance is a
        # steady-state bound; when closing on a slower leader the trigger
        # additionally covers the comfortable braking distance, without which
        # a planned approach into a standing queue activates too late to stop.
        if veh.mode in (Mode.OPTIMAL_CONTROL, Mode.FOLLOW):
            trigger = None  # (gap, margin, leader speed)
            if leader is not None:
                margin = 0.0 if leader.vclass is VClass.HUMAN else CAV_LEADER_MARGIN
                trigger = (gap, margin, leader.v)
            if cross is not None and cross[1].vclass is VClass.HUMAN:
                if trigger is None or cross[0] < trigger[0]:
                    trigger = (cross[0], 0.0, cross[1].v)
            new_mode = veh.mode
            if t - veh.last_mode_change < MODE_DWELL:
                pass  # hold the current mode through the dwell
            elif trigger is not None:
                g, margin, v_lead = trigger
                threshold = safe_distance(veh.v, self.safety) - margin
                if veh.v > v_lead:
                    kinematic = (
                        (veh.v * veh.v - v_lead * v_lead) / (2.0 * drv.comfort_decel)
                        + self.safety.standstill
                    )
                    threshold = max(threshold, kinematic)
                if veh.mode is Mode.FOLLOW:
                    if g >= SWITCH_HYSTERESIS * max(
                        safe_distance(veh.v, self.safety), threshold
                    ):
                        new_mode = Mode.OPTIMAL_CONTROL
                elif g < threshold:
                    new_mode = Mode.FOLLOW
            elif veh.mode is Mode.FOLLOW:
                new_mode = Mode.OPTIMAL_CONTROL  # leader gone
            if new_mode is not veh.mode:
                veh.mode = new_mode
                veh.last_mode_change = t
                if new_mode is Mode.FOLLOW:
                    self._log_event(t, veh.id, "follow_on", f"gap={gap:.2f}" if gap is not None else "")
                else:
                    self._log_event(t, veh.id, "follow_off", "")
                    if veh.entry is not None and s < self.geom.approach_length:
                        self._replan(veh, self._schedule_candidate(veh.entry), t)

        track = None
        if veh.plan is not None and s < self.geom.approach_length:
            plan = veh.plan
            tt = t if t <= plan.valid_to else plan.valid_to
            p_ref, v_ref, u_ff = plan.eval(tt)
            p_here = s - self._control_entry
            track = u_ff + TRACK_KP * (p_ref - p_here) + TRACK_KV * (v_ref - veh.v)

        if veh.mode is Mode.FOLLOW:
            v_des = desired_speed(self._zone_fast(veh), drv)
            eff_gap = gap
            eff_closing = veh.v - leader.v if leader is not None else 0.0
            if cross is not None and (eff_gap is None or cross[0] < eff_gap):
                eff_gap = cross[0]
                eff_closing = veh.v - cross[1].v
            # A degraded eastbound CAV is embedded in yielding traffic: the
            # gap-acceptance gate at the line serializes its entry, and its
            # receding schedule must not pin it short of the line.
            if veh.approach is Approach.EASTBOUND:
                if not veh.committed:
                    held = self._yield_line_accel(veh, t, v_des, eff_gap, eff_closing)
                    if held is not None:
                        return held
                return idm_accel(veh.v, v_des, eff_gap, eff_closing, drv)
            u = idm_accel(veh.v, v_des, eff_gap, eff_closing, drv)
            if track is not None:
                # Westbound has no yield gate; the scheduled slot bounds from
                # below so a blocked vehicle runs late but never early.
                u = min(u, track)
            return u

        if track is not None:
            return track

        # Cruise: hold the zone speed (roundabout speed through the ring,
        # entry speed on the exit leg).
        if s >= self._merge_exit[veh.approach]:
            target = self.geom.entry_speed_limit
        else:
            target = self.geom.roundabout_speed
        return TRACK_KV * (target - veh.v)

    def _log_negative_gap(self, veh: _Vehicle, t: float, gap: float) -> None:
        if t - veh.last_neg_gap_log >= 1.0:
            veh.last_neg_gap_log = t
            self._log_event(t, veh.id, "negative_gap", f"gap={gap:.3f}")
            self._log_event(t, veh.id, "emergency_brake", f"gap={gap:.3f}")

    def _zone_fast(self, veh: _Vehicle) -> Zone:
        s = veh.s
        if s < self._control_entry:
            return Zone.ENTRY_ZONE
        if s < self.geom.approach_length:
            return Zone.CONTROL_ZONE
        if veh.approach is Approach.WESTBOUND and s < self._merge_entry[veh.approach]:
            return Zone.CIRCULATING_ARC
        if s < self._merge_exit[veh.approach]:
            return Zone.MERGING_ZONE
        return Zone.EXIT_LEG

    # -- main loop --------------------------------------------------------------------

    def step(self) -> None:
        """Advance the world by one control step."""
        cfg = self.cfg
        t = self.t
        if self._step_index % self._steps_per_log == 0:
            self._log_trajectories(t)
        t_next = t + cfg.step

        self._spawn_due(t_next)
        self._refresh_schedules(t)

        # Pass 1: control selection against the pre-step snapshot.
        u_min, u_max = self.limits.u_min, self.limits.u_max
        updates: list[tuple[_Vehicle, float]] = []
        for approach in (Approach.EASTBOUND, Approach.WESTBOUND):
            for veh in self.route[approach]:
                if veh.s < self._control_entry:
                    leader = veh.leader
                    u = idm_accel(
                        veh.v,
                        self.geom.entry_speed_limit,
                        leader.s - veh.s if leader is not None else None,
                        veh.v - leader.v if leader is not None else 0.0,
                        self.driver,
                    )
                    if leader is not None and leader.s - veh.s <= 0.0:
                        self._log_negative_gap(veh, t, leader.s - veh.s)
                        u = -self.driver.hard_decel
                elif veh.vclass is VClass.HUMAN:
                    u = self._human_accel(veh, t)
                else:
                    u = self._cav_accel(veh, t)
                updates.append((veh, min(max(u, u_min), u_max)))

        # Pass 2: semi-implicit integration.
        dt = cfg.step
        v_cap = self.limits.v_max
        for veh, u in updates:
            veh.u = u
            v_new = veh.v + u * dt
            if v_new < 0.0:
                v_new = 0.0
            elif v_new > v_cap:
                v_new = v_cap
            veh.v = v_new
            veh.s_prev = veh.s
            veh.s += v_new * dt

        # Pass 3: zone-boundary events; exits resolve before entries so a
        # freed merging zone is visible to same-step entrants.
        for approach in (Approach.EASTBOUND, Approach.WESTBOUND):
            removed = False
            for veh in self.route[approach]:
                self._fire_exits(veh, t, t_next)
                if veh.t_exit_network is not None:
                    removed = True
            if removed:
                self.route[approach] = [
                    v for v in self.route[approach] if v.t_exit_network is None
                ]
                if self.route[approach]:
                    self.route[approach][0].leader = None
        for approach in (Approach.EASTBOUND, Approach.WESTBOUND):
            for veh in self.route[approach]:
                self._fire_entries(veh, t, t_next)

        self.t = t_next
        self._step_index += 1

    def _interp_crossing(self, veh: _Vehicle, boundary: float, t: float, t_next: float) -> float:
        travelled = veh.s - veh.s_prev
        if travelled <= 0.0:
            return t_next
        frac = (boundary - veh.s_prev) / travelled
        return t + (t_next - t) * min(max(frac, 0.0), 1.0)

    def _fire_exits(self, veh: _Vehicle, t: float, t_next: float) -> None:
        s = veh.s
        approach = veh.approach
        if s >= self._merge_exit[approach] and veh in self.in_merge[approach]:
            self.in_merge[approach].remove(veh)
            t_cross = self._interp_crossing(veh, self._merge_exit[approach], t, t_next)
            self._resolve_merge_pairs(veh, t_cross, t_next)
            if veh.entry is not None and not self.coordinator.is_released(veh.entry):
                self.coordinator.release(veh.entry, t_cross)
            self._log_event(t_next, veh.id, "merge_exit", "")

        if s >= self._route_end[approach]:
            veh.t_exit_network = t_next
            self.exited += 1
            self._log_event(t_next, veh.id, "exit_network", "")

    def _fire_entries(self, veh: _Vehicle, t: float, t_next: float) -> None:
        s = veh.s
        approach = veh.approach
        if veh.t_enter_control is None and s >= self._control_entry:
            # Register at the interpolated crossing instant so the schedule
            # is not biased by the sub-step overshoot of the boundary.
            t_cross = self._interp_crossing(veh, self._control_entry, t, t_next)
            veh.t_enter_control = t_cross
            entry = self.coordinator.register_arrival(veh, t_cross)
            veh.entry = entry
            self._veh_by_qid[entry.id] = veh
            self._active_entries.append(veh)
            if veh.vclass is VClass.CAV:
                veh.mode = Mode.OPTIMAL_CONTROL
                leader = veh.leader
                if leader is not None:
                    margin = 0.0 if leader.vclass is VClass.HUMAN else CAV_LEADER_MARGIN
                    threshold = safe_distance(veh.v, self.safety) - margin
                    if veh.v > leader.v:
                        threshold = max(
                            threshold,
                            (veh.v**2 - leader.v**2) / (2.0 * self.driver.comfort_decel)
                            + self.safety.standstill,
                        )
                    if leader.s - s < threshold:
                        veh.mode = Mode.FOLLOW
                        veh.last_mode_change = t_next
                        self._log_event(t_next, veh.id, "follow_on", "at entry")
                try:
                    veh.plan, violations = self.coordinator.plan(entry, veh, t_next)
                except DegenerateHorizon:
                    violations = []
                if violations:
                    worst = violations[0]
                    self._log_event(
                        t_next, veh.id, "plan_infeasible",
                        f"{worst.bound}={worst.value:.3f}@t={worst.t:.2f}",
                    )
            self._log_event(t_next, veh.id, "enter_control", f"v={veh.v:.3f}")
            return

        if veh.t_merge_entry is None and s >= self._merge_entry[approach]:
            t_cross = self._interp_crossing(veh, self._merge_entry[approach], t, t_next)
            veh.t_merge_entry = t_cross
            self.in_merge[approach].append(veh)
            if veh in self._active_entries:
                self._active_entries.remove(veh)
            entry = veh.entry
            detail = ""
            if entry is not None:
                if entry.estimated or veh.vclass is VClass.HUMAN:
                    # Estimates finalize at the observed crossing.
                    self.coordinator.assign(entry, t_cross, t_next, estimated=True)
                detail = f"assigned={entry.tm:.3f}"
            other = (
                Approach.WESTBOUND if approach is Approach.EASTBOUND else Approach.EASTBOUND
            )
            controlled = veh.vclass is VClass.CAV and veh.mode is Mode.OPTIMAL_CONTROL
            for occupant in self.in_merge[other]:
                self._merge_pairs.append((occupant, veh, t_cross, controlled))
            self._log_event(t_next, veh.id, "merge_entry", detail)

    def _resolve_merge_pairs(self, exiting: _Vehicle, t_cross: float, t_next: float) -> None:
        """Close co-occupancy intervals the exiting vehicle participates in.

        The co-occupancy ends at the first exit among the pair; its measured
        duration decides between a boundary touch and a genuine conflict.
        """
        if not self._merge_pairs:
            return
        remaining = []
        for pair in self._merge_pairs:
            occupant, entrant, entered_at, controlled = pair
            if exiting is not occupant and exiting is not entrant:
                remaining.append(pair)
                continue
            overlap = t_cross - entered_at
            if overlap > LATERAL_OVERLAP_TOLERANCE:
                kind = "lateral_conflict" if controlled else "merge_overlap"
            else:
                kind = "merge_touch"
            self._log_event(
                t_next, entrant.id, kind,
                f"with={occupant.id} overlap={max(overlap, 0.0):.3f}",
            )
        self._merge_pairs = remaining

    def _log_trajectories(self, t: float) -> None:
        rows = self.trajectories
        for approach in (Approach.EASTBOUND, Approach.WESTBOUND):
            for veh in self.route[approach]:
                rows.append(
                    (
                        t,
                        veh.id,
                        veh.vclass.value,
                        approach.value,
                        veh.s,
                        veh.v,
                        veh.u,
                        veh.mode.value,
                        self._zone_fast(veh).value,
                    )
                )

    # -- inspection ---------------------------------------------------------------------

    def merging_zone_occupancy(self) -> list[tuple[int, Approach]]:
        """Vehicles currently inside the merging zone (either approach)."""
        out = []
        for approach in (Approach.EASTBOUND, Approach.WESTBOUND):
            out.extend((v.id, approach) for v in self.in_merge[approach])
        return out

    def active_vehicles(self) -> Iterable[_Vehicle]:
        yield from self.route[Approach.EASTBOUND]
        yield from self.route[Approach.WESTBOUND]


def merging_zone_occupancy(world: World) -> list[tuple[int, Approach]]:
    return world.merging_zone_occupancy()


def run(
    cfg: SimConfig,
    geom: RoundaboutGeometry | None = None,
    limits: ActuationLimits | None = None,
    safety: SafetyParams | None = None,
    driver: DriverParams | None = None,
) -> RunResult:
    """Execute one full simulation and collect its logs.

    Identical configuration and seed produce an identical result, including
    float-for-float identical log rows.
    """
    world = World(cfg, geom, limits, safety, driver)
    n_steps = round(cfg.duration / cfg.step)
    for _ in range(n_steps):
        world.step()

    records = []
    for veh in world.all_vehicles:
        entry = veh.entry
        records.append(
            VehicleRecord(
                id=veh.id,
                vclass=veh.vclass,
                approach=veh.approach,
                t_spawn=veh.t_spawn,
                t_enter_control=veh.t_enter_control,
                tm=entry.tm if entry else None,
                tz=entry.tz if entry else None,
                tf_exit=entry.tf_exit if entry else None,
                t_exit_network=veh.t_exit_network,
                t_merge_entry=veh.t_merge_entry,
                estimated_tm=entry.estimated if entry else False,
            )
        )
    return RunResult(
        cfg=cfg,
        geom=world.geom,
        trajectories=world.trajectories,
        events=world.events,
        queue_events=world.coordinator.events,
        vehicles=records,
        spawned=world.spawned,
        exited=world.exited,
        residual=world.spawned - world.exited,
    )
