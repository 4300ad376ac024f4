"""Longitudinal behavior of human-driven vehicles and the CAV safety switch.

Car following uses the Intelligent Driver Model (Treiber, Hennecke and
Helbing 2000), which is fully determined by the standstill distance and time
headway the network imposes on all vehicles plus standard acceleration
parameters.  Yield behavior at the roundabout entry is a critical-gap /
follow-up rule.  The on-off safety switch degrades a CAV to follower mode
whenever the speed-proportional safe distance to its leader is violated, with
a hysteresis band so the mode cannot chatter at the threshold.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .coordinator import SafetyParams, safe_distance
from .geometry import Approach, RoundaboutGeometry, Zone
from .vehicle import Mode, VehicleState

# Return to optimal control only once the gap exceeds the safe distance by
# this factor; the bare on-off rule chatters exactly at the threshold.
SWITCH_HYSTERESIS = 1.2


class GapDecision(enum.Enum):
    PROCEED = "proceed"
    YIELD = "yield"


@dataclass(frozen=True)
class DriverParams:
    desired_speed_approach: float = 15.6  # m/s
    desired_speed_roundabout: float = 8.9  # m/s
    max_accel: float = 3.0  # m/s^2
    comfort_decel: float = 2.5  # m/s^2
    hard_decel: float = 4.5  # m/s^2
    standstill: float = 1.5  # m
    time_headway: float = 1.2  # s
    accel_exponent: float = 4.0
    critical_gap: float = 4.1  # s
    follow_up_time: float = 3.2  # s

    def __post_init__(self):
        values = (
            self.desired_speed_approach, self.desired_speed_roundabout,
            self.max_accel, self.comfort_decel, self.hard_decel,
            self.standstill, self.time_headway, self.accel_exponent,
            self.critical_gap, self.follow_up_time,
        )
        if any(x <= 0.0 for x in values):
            raise ValueError("all driver parameters must be positive")
        if self.comfort_decel > self.hard_decel:
            raise ValueError("comfort_decel must not exceed hard_decel")
        if self.critical_gap <= self.follow_up_time:
            raise ValueError("critical_gap must exceed follow_up_time")


def desired_speed(zone: Zone, params: DriverParams) -> float:
    if zone in (Zone.CIRCULATING_ARC, Zone.MERGING_ZONE):
        return params.desired_speed_roundabout
    return params.desired_speed_approach


def idm_accel(
    v: float, v_des: float, gap: float | None, closing_speed: float,
    params: DriverParams,
) -> float:
    """IDM acceleration from scalar inputs; ``gap is None`` means free road.

    A non-positive gap returns the hard emergency deceleration; callers log
    that as a collision-risk event.  The dynamic part of the desired gap is
    floored at zero as in the published model, so a fast-receding leader
    cannot produce a negative desired gap.
    """
    free = params.max_accel * (1.0 - (v / v_des) ** params.accel_exponent)
    if gap is None:
        u = free
    elif gap <= 0.0:
        return -params.hard_decel
    else:
        s_star = params.standstill + max(
            0.0,
            v * params.time_headway
            + v * closing_speed / (2.0 * math.sqrt(params.max_accel * params.comfort_decel)),
        )
        u = free - params.max_accel * (s_star / gap) ** 2
    return min(max(u, -params.hard_decel), params.max_accel)


def car_following_accel(
    me: VehicleState, leader: VehicleState | None, params: DriverParams, zone: Zone
) -> float:
    """Car-following acceleration for a vehicle in the given zone.

    The leader, when present, must be on the same route ahead of the
    vehicle; the gap is the route-position difference.
    """
    v_des = desired_speed(zone, params)
    if leader is None:
        return idm_accel(me.v, v_des, None, 0.0, params)
    return idm_accel(me.v, v_des, leader.s - me.s, me.v - leader.v, params)


def gap_acceptance(
    me: VehicleState,
    circulating: list[VehicleState],
    t: float,
    params: DriverParams,
    geom: RoundaboutGeometry,
    merging_zone_occupied: bool = False,
    last_proceed_t: float = -math.inf,
) -> GapDecision:
    """Yield-line decision for an eastbound human at the merging-zone entry.

    Each conflicting vehicle's arrival at the merge point is predicted from
    its remaining distance at its current speed (floored at 1 m/s).  With no
    conflicting traffic at all the vehicle proceeds outright.  Otherwise it
    proceeds when the earliest arrival exceeds the critical gap and either
    the follow-up time has elapsed since the previous vehicle from this
    approach went, or the merging zone is empty (a queue discharges into a
    long gap as fast as the zone clears).
    """
    earliest = math.inf
    for other in circulating:
        d = geom.merge_entry_s(other.approach) - other.s
        # A conflict just past the merge point still blocks; one beyond it is
        # cleared traffic the entrant simply follows.
        earliest = min(earliest, max(d, 0.0) / max(other.v, 1.0))
    if math.isinf(earliest):
        return GapDecision.PROCEED
    if earliest <= params.critical_gap:
        return GapDecision.YIELD
    if t - last_proceed_t >= params.follow_up_time:
        return GapDecision.PROCEED
    if not merging_zone_occupied:
        return GapDecision.PROCEED
    return GapDecision.YIELD


def cav_safety_switch(
    me: VehicleState, leader: VehicleState, params: SafetyParams,
    activation_margin: float = 0.0,
) -> Mode:
    """On-off switch between optimal control and follower mode.

    Follower mode engages when the gap to the leader falls below the safe
    distance at the current speed (less ``activation_margin``); optimal
    control resumes only once the gap reaches ``SWITCH_HYSTERESIS`` times the
    safe distance, which triggers a replan in the engine.
    """
    gap = leader.s - me.s
    threshold = safe_distance(me.v, params)
    if me.mode is Mode.FOLLOW:
        if gap >= SWITCH_HYSTERESIS * threshold:
            return Mode.OPTIMAL_CONTROL
        return Mode.FOLLOW
    if gap < threshold - activation_margin:
        return Mode.FOLLOW
    return Mode.OPTIMAL_CONTROL
