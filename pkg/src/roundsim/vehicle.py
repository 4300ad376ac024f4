"""Vehicle state shared by the engine, coordinator and driver model."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .geometry import Approach, RoutePosition


class VClass(enum.Enum):
    CAV = "cav"
    HUMAN = "human"


class Mode(enum.Enum):
    UNCONTROLLED = "uncontrolled"
    OPTIMAL_CONTROL = "optimal"
    FOLLOW = "follow"
    HUMAN_DRIVING = "human"


@dataclass
class VehicleState:
    """Kinematic state and control mode of one vehicle.

    Positions are scalar along the vehicle's fixed route; ``s`` never
    decreases (no reversing).  ``t_enter_control`` and ``t_exit_network``
    stay ``None`` until the corresponding boundary crossings happen.
    """

    id: int
    vclass: VClass
    approach: Approach
    s: float
    v: float
    u: float
    mode: Mode
    t_spawn: float
    t_enter_control: float | None = None
    t_exit_network: float | None = None

    @property
    def pos(self) -> RoutePosition:
        return RoutePosition(self.approach, self.s)
