"""Single-lane roundabout microsimulation with optimal CAV merging coordination."""

from .coordinator import Coordinator, QueueEntry, SafetyParams, safe_distance
from .driver_model import DriverParams, GapDecision, car_following_accel, cav_safety_switch, gap_acceptance
from .engine import RunResult, SimConfig, World, generate_arrivals, run
from .geometry import Approach, RoundaboutGeometry, RoutePosition, Zone
from .metrics import FuelModelCoefficients, MOERecord, aggregate, fuel_rate, summarize
from .trajectory import (
    ActuationLimits,
    BoundaryConditions,
    TrajectoryCoefficients,
    check_feasible,
    cost,
    solve_cubic,
)
from .vehicle import Mode, VClass, VehicleState

__version__ = "0.1.0"
