"""Closed-form minimum-effort trajectories for double-integrator vehicles.

Minimizing the integral of squared acceleration between fixed endpoint
position/speed pairs yields a control input that is affine in time, hence a
cubic position polynomial.  The four coefficients follow from the 4x4 linear
system of the boundary conditions.  Feasibility against speed/acceleration
bounds is checked exactly (the control is linear, the speed quadratic) and
reported rather than silently clamped; the scheduler's admissible merge-time
window keeps violations rare.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERATE_HORIZON = 1e-6  # s, below which the boundary system is singular


class DegenerateHorizon(ValueError):
    """Planning horizon too short to solve the boundary-value problem."""


class OutOfValidity(ValueError):
    """Evaluation time outside the trajectory's validity window."""


@dataclass(frozen=True)
class BoundaryConditions:
    t0: float
    tf: float
    p0: float
    v0: float
    pf: float
    vf: float

    def __post_init__(self):
        if self.tf <= self.t0:
            raise ValueError(f"tf ({self.tf}) must exceed t0 ({self.t0})")
        if self.pf <= self.p0:
            raise ValueError(f"pf ({self.pf}) must exceed p0 ({self.p0})")
        if self.v0 < 0.0 or self.vf < 0.0:
            raise ValueError("boundary speeds must be non-negative")


@dataclass(frozen=True)
class ActuationLimits:
    u_min: float = -4.5
    u_max: float = 4.5
    v_min: float = 1.0
    v_max: float = 15.6

    def __post_init__(self):
        if not (self.u_min < 0.0 < self.u_max):
            raise ValueError("need u_min < 0 < u_max")
        if not (0.0 < self.v_min < self.v_max):
            raise ValueError("need 0 < v_min < v_max")


@dataclass(frozen=True)
class TrajectoryCoefficients:
    """Cubic position plan p(t) = a*t^3/6 + b*t^2/2 + c*t + d.

    Speed and control follow analytically: v(t) = a*t^2/2 + b*t + c and
    u(t) = a*t + b, so the three profiles are consistent by construction.
    """

    a: float
    b: float
    c: float
    d: float
    valid_from: float
    valid_to: float

    def eval(self, t: float) -> tuple[float, float, float]:
        """Evaluate (position, speed, acceleration) at time ``t``."""
        if t < self.valid_from or t > self.valid_to:
            raise OutOfValidity(
                f"t={t} outside validity window [{self.valid_from}, {self.valid_to}]"
            )
        p = ((self.a / 6.0 * t + self.b / 2.0) * t + self.c) * t + self.d
        v = (self.a / 2.0 * t + self.b) * t + self.c
        u = self.a * t + self.b
        return p, v, u


@dataclass(frozen=True)
class Violation:
    """One actuation-bound violation with the time and value of the worst excess."""

    bound: str  # one of "u_min", "u_max", "v_min", "v_max"
    t: float
    value: float
    limit: float


def solve_cubic(bc: BoundaryConditions) -> TrajectoryCoefficients:
    """Solve the minimum-effort boundary-value problem.

    Returns the cubic whose position and speed match ``bc`` at both ends.
    Raises :class:`DegenerateHorizon` when the horizon is shorter than
    ``DEGENERATE_HORIZON``.
    """
    if bc.tf - bc.t0 < DEGENERATE_HORIZON:
        raise DegenerateHorizon(f"horizon {bc.tf - bc.t0} s below {DEGENERATE_HORIZON} s")
    t0, tf = bc.t0, bc.tf
    m = np.array(
        [
            [t0**3 / 6.0, t0**2 / 2.0, t0, 1.0],
            [t0**2 / 2.0, t0, 1.0, 0.0],
            [tf**3 / 6.0, tf**2 / 2.0, tf, 1.0],
            [tf**2 / 2.0, tf, 1.0, 0.0],
        ]
    )
    rhs = np.array([bc.p0, bc.v0, bc.pf, bc.vf])
    a, b, c, d = np.linalg.solve(m, rhs)
    return TrajectoryCoefficients(float(a), float(b), float(c), float(d), t0, tf)


def evaluate(coeffs: TrajectoryCoefficients, t: float) -> tuple[float, float, float]:
    return coeffs.eval(t)


def check_feasible(
    coeffs: TrajectoryCoefficients, limits: ActuationLimits
) -> list[Violation]:
    """Exact interval analysis of the plan against actuation limits.

    The control is linear in t, so its extrema sit at the window endpoints.
    The speed is quadratic with its interior extremum where the control
    crosses zero (t* = -b/a).  Returns one entry per violated bound, carrying
    the time and value of the worst excess; an empty list means the plan is
    admissible throughout the window.
    """
    t0, t1 = coeffs.valid_from, coeffs.valid_to
    violations: list[Violation] = []

    u_candidates = [(t, coeffs.a * t + coeffs.b) for t in (t0, t1)]
    worst_hi = max(u_candidates, key=lambda tv: tv[1])
    worst_lo = min(u_candidates, key=lambda tv: tv[1])
    if worst_hi[1] > limits.u_max:
        violations.append(Violation("u_max", worst_hi[0], worst_hi[1], limits.u_max))
    if worst_lo[1] < limits.u_min:
        violations.append(Violation("u_min", worst_lo[0], worst_lo[1], limits.u_min))

    def speed(t):
        return (coeffs.a / 2.0 * t + coeffs.b) * t + coeffs.c

    v_times = [t0, t1]
    if coeffs.a != 0.0:
        t_star = -coeffs.b / coeffs.a
        if t0 < t_star < t1:
            v_times.append(t_star)
    v_candidates = [(t, speed(t)) for t in v_times]
    worst_hi = max(v_candidates, key=lambda tv: tv[1])
    worst_lo = min(v_candidates, key=lambda tv: tv[1])
    if worst_hi[1] > limits.v_max:
        violations.append(Violation("v_max", worst_hi[0], worst_hi[1], limits.v_max))
    if worst_lo[1] < limits.v_min:
        violations.append(Violation("v_min", worst_lo[0], worst_lo[1], limits.v_min))
    return violations


def cost(coeffs: TrajectoryCoefficients) -> float:
    """Half the integral of squared acceleration over the validity window."""
    a, b = coeffs.a, coeffs.b
    t0, t1 = coeffs.valid_from, coeffs.valid_to

    def antiderivative(t):
        # integral of (a*t + b)^2 = a^2 t^3/3 + a b t^2 + b^2 t
        return a * a * t**3 / 3.0 + a * b * t**2 + b * b * t

    return 0.5 * (antiderivative(t1) - antiderivative(t0))
