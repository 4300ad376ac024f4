"""One-dimensional path model of the two-approach roundabout network.

Each vehicle travels a fixed route described by a scalar arc position ``s``
measured from its input point.  Eastbound traffic crosses the roundabout
through the merging arc; westbound traffic circulates half the ring (the
circulating arc) before reaching the same merging arc, i.e. a U-turn.  The
two routes conflict only inside the merging arc.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Approach(enum.Enum):
    EASTBOUND = "eastbound"
    WESTBOUND = "westbound"


class Zone(enum.Enum):
    ENTRY_ZONE = "entry"
    CONTROL_ZONE = "control"
    CIRCULATING_ARC = "circulating"
    MERGING_ZONE = "merging"
    EXIT_LEG = "exit"


class OutOfRoute(ValueError):
    """Position lies beyond the end of the route."""


class NegativeDistance(ValueError):
    """Position is at or past the merging-zone entry; distance would be <= 0."""


@dataclass(frozen=True)
class RoutePosition:
    approach: Approach
    s: float  # meters from the vehicle input point


@dataclass(frozen=True)
class RoundaboutGeometry:
    """Arc lengths, zone boundaries and speed limits of the network.

    All lengths in meters, speeds in m/s.  The perimeter is kept for
    documentation and consistency checks only; routes are one-dimensional.
    """

    approach_length: float = 320.0
    entry_zone_length: float = 20.0
    control_zone_length: float = 300.0
    circulating_arc: float = 100.0
    merging_zone_arc: float = 12.0
    perimeter: float = 200.0
    roundabout_speed: float = 8.9
    entry_speed_limit: float = 15.6
    exit_leg_length: float = 100.0

    def __post_init__(self):
        if self.entry_zone_length + self.control_zone_length != self.approach_length:
            raise ValueError(
                "geometry invariant violated: entry_zone_length + control_zone_length "
                f"({self.entry_zone_length} + {self.control_zone_length}) "
                f"!= approach_length ({self.approach_length})"
            )
        if not (self.merging_zone_arc <= self.circulating_arc <= self.perimeter):
            raise ValueError(
                "geometry invariant violated: need merging_zone_arc <= circulating_arc "
                f"<= perimeter, got {self.merging_zone_arc}, {self.circulating_arc}, "
                f"{self.perimeter}"
            )
        if not (0.0 < self.roundabout_speed <= self.entry_speed_limit):
            raise ValueError(
                "geometry invariant violated: need 0 < roundabout_speed <= "
                f"entry_speed_limit, got {self.roundabout_speed} vs {self.entry_speed_limit}"
            )
        if self.exit_leg_length < 0.0:
            raise ValueError("exit_leg_length must be >= 0")

    # -- derived boundaries (cumulative segment sums along each route) --------

    def control_entry_s(self) -> float:
        """Route position of the control-zone entry (same for both approaches)."""
        return self.entry_zone_length

    def merge_entry_s(self, approach: Approach) -> float:
        """Route position of the merging-zone entry point."""
        if approach is Approach.EASTBOUND:
            return self.approach_length
        return self.approach_length + self.circulating_arc

    def merge_exit_s(self, approach: Approach) -> float:
        return self.merge_entry_s(approach) + self.merging_zone_arc

    def route_length(self, approach: Approach) -> float:
        """Total route length from input point to the data-collection point."""
        return self.merge_exit_s(approach) + self.exit_leg_length

    def zone_of(self, pos: RoutePosition) -> Zone:
        """Classify a route position into its zone.

        Boundaries belong to the downstream zone (half-open intervals
        ``[start, end)``), so entry events fire exactly once.
        """
        s = pos.s
        if s < 0.0 or s > self.route_length(pos.approach):
            raise OutOfRoute(
                f"s={s} outside route [0, {self.route_length(pos.approach)}] "
                f"for {pos.approach.value}"
            )
        if s < self.entry_zone_length:
            return Zone.ENTRY_ZONE
        if s < self.approach_length:
            return Zone.CONTROL_ZONE
        if pos.approach is Approach.WESTBOUND and s < self.merge_entry_s(pos.approach):
            return Zone.CIRCULATING_ARC
        if s < self.merge_exit_s(pos.approach):
            return Zone.MERGING_ZONE
        return Zone.EXIT_LEG

    def distance_to_merge(self, pos: RoutePosition) -> float:
        """Arc distance from ``pos`` to the merging-zone entry of its approach.

        Raises :class:`NegativeDistance` when the position is at or past the
        entry point; callers that want a saturating value should catch it and
        use 0.
        """
        d = self.merge_entry_s(pos.approach) - pos.s
        if d <= 0.0:
            raise NegativeDistance(
                f"position s={pos.s} at/past merging-zone entry "
                f"({self.merge_entry_s(pos.approach)} m)"
            )
        return d

    def zone_speed_limit(self, zone: Zone) -> float:
        """Posted speed for a zone, used for desired speeds and free-flow times."""
        if zone in (Zone.CIRCULATING_ARC, Zone.MERGING_ZONE):
            return self.roundabout_speed
        return self.entry_speed_limit

    def free_flow_time(self, approach: Approach) -> float:
        """Route traversal time at zone speed limits (baseline for delay)."""
        t = self.approach_length / self.entry_speed_limit
        if approach is Approach.WESTBOUND:
            t += self.circulating_arc / self.roundabout_speed
        t += self.merging_zone_arc / self.roundabout_speed
        t += self.exit_leg_length / self.entry_speed_limit
        return t
