import numpy as np
import pytest

from roundsim.trajectory import (
    ActuationLimits,
    BoundaryConditions,
    DegenerateHorizon,
    OutOfValidity,
    TrajectoryCoefficients,
    check_feasible,
    cost,
    solve_cubic,
)


def random_bc(rng):
    t0 = rng.uniform(0.0, 100.0)
    horizon = rng.uniform(1.0, 60.0)
    p0 = rng.uniform(-100.0, 100.0)
    return BoundaryConditions(
        t0=t0,
        tf=t0 + horizon,
        p0=p0,
        v0=rng.uniform(0.0, 20.0),
        pf=p0 + rng.uniform(10.0, 500.0),
        vf=rng.uniform(0.0, 20.0),
    )


def transcription_cost(bc, n=100):
    """Discretized oracle: piecewise-constant control, exact double-integrator
    hold discretization, terminal equality constraints, minimum squared-control
    solved through the normal equations of the constrained least-squares."""
    h = (bc.tf - bc.t0) / n
    # Effect of control u_k on terminal (p, v): p gains h^2/2 + remaining
    # steps' drift, v gains h per step.
    a_p = np.array([h * h / 2.0 + (n - 1 - k) * h * h for k in range(n)])
    a_v = np.full(n, h)
    target_p = bc.pf - (bc.p0 + bc.v0 * (bc.tf - bc.t0))
    target_v = bc.vf - bc.v0
    a = np.vstack([a_p, a_v])
    b = np.array([target_p, target_v])
    u = a.T @ np.linalg.solve(a @ a.T, b)
    # Verify the rollout hits the boundary conditions before trusting it.
    v = bc.v0 + np.cumsum(u) * h
    p = bc.p0 + np.cumsum(np.concatenate([[bc.v0], v[:-1]])) * h + np.cumsum(np.full(n, h * h / 2.0) * u)
    assert abs(v[-1] - bc.vf) < 1e-6
    assert abs(p[-1] - bc.pf) < 1e-6
    return 0.5 * float(u @ u) * h


def test_uniform_motion_is_zero_cost():
    bc = BoundaryConditions(t0=0.0, tf=10.0, p0=0.0, v0=10.0, pf=100.0, vf=10.0)
    coeffs = solve_cubic(bc)
    assert coeffs.a == pytest.approx(0.0, abs=1e-12)
    assert coeffs.b == pytest.approx(0.0, abs=1e-12)
    assert coeffs.c == pytest.approx(10.0)
    assert coeffs.d == pytest.approx(0.0, abs=1e-12)
    assert cost(coeffs) == pytest.approx(0.0, abs=1e-12)


def test_solution_verified_by_numerical_integration():
    bc = BoundaryConditions(t0=0.0, tf=24.49, p0=0.0, v0=15.6, pf=300.0, vf=8.9)
    coeffs = solve_cubic(bc)
    # Integrate the returned control densely and match the endpoint.
    n = 200_000
    ts = np.linspace(bc.t0, bc.tf, n + 1)
    u = coeffs.a * ts + coeffs.b
    v = bc.v0 + np.concatenate([[0.0], np.cumsum((u[1:] + u[:-1]) / 2.0) * (ts[1] - ts[0])])
    p = bc.p0 + np.concatenate([[0.0], np.cumsum((v[1:] + v[:-1]) / 2.0) * (ts[1] - ts[0])])
    assert abs(p[-1] - bc.pf) < 1e-6
    assert abs(v[-1] - bc.vf) < 1e-6


def test_time_translation_invariance():
    base = solve_cubic(BoundaryConditions(0.0, 10.0, 0.0, 0.0, 50.0, 10.0))
    shifted = solve_cubic(BoundaryConditions(5.0, 15.0, 0.0, 0.0, 50.0, 10.0))
    for t in np.linspace(0.0, 10.0, 23):
        u_base = base.a * t + base.b
        u_shift = shifted.a * (t + 5.0) + shifted.b
        assert u_shift == pytest.approx(u_base, abs=1e-9)


def test_boundary_residuals_randomized():
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        bc = random_bc(rng)
        coeffs = solve_cubic(bc)
        p0, v0, _ = coeffs.eval(bc.t0)
        pf, vf, _ = coeffs.eval(bc.tf)
        assert abs(p0 - bc.p0) < 1e-6
        assert abs(v0 - bc.v0) < 1e-6
        assert abs(pf - bc.pf) < 1e-6
        assert abs(vf - bc.vf) < 1e-6


def test_analytic_cost_below_transcription_oracle():
    rng = np.random.default_rng(11)
    for _ in range(200):
        bc = random_bc(rng)
        analytic = cost(solve_cubic(bc))
        discrete = transcription_cost(bc)
        assert analytic <= discrete + 1e-9
        if discrete > 1e-9:
            assert analytic >= discrete * 0.99


def test_control_is_affine_in_time():
    rng = np.random.default_rng(3)
    for _ in range(100):
        bc = random_bc(rng)
        coeffs = solve_cubic(bc)
        ts = np.sort(rng.uniform(bc.t0, bc.tf, 3))
        h = (ts[2] - ts[0]) / 2.0
        u = [coeffs.a * (ts[0] + i * h) + coeffs.b for i in range(3)]
        assert u[0] - 2.0 * u[1] + u[2] == pytest.approx(0.0, abs=1e-9)


def test_eval_consistency_finite_differences():
    bc = BoundaryConditions(0.0, 20.0, 0.0, 5.0, 200.0, 12.0)
    coeffs = solve_cubic(bc)
    h = 1e-4
    for t in np.linspace(1.0, 19.0, 9):
        p_m, v_m, u_m = coeffs.eval(t - h)
        p, v, u = coeffs.eval(t)
        p_p, v_p, u_p = coeffs.eval(t + h)
        assert (p_p - p_m) / (2 * h) == pytest.approx(v, abs=1e-6)
        assert (v_p - v_m) / (2 * h) == pytest.approx(u, abs=1e-6)


def test_eval_examples():
    uniform = TrajectoryCoefficients(0.0, 0.0, 10.0, 0.0, 0.0, 10.0)
    assert uniform.eval(5.0) == pytest.approx((50.0, 10.0, 0.0))
    const_accel = TrajectoryCoefficients(0.0, 2.0, 0.0, 0.0, 0.0, 10.0)
    assert const_accel.eval(3.0) == pytest.approx((9.0, 6.0, 2.0))


def test_eval_out_of_validity():
    coeffs = TrajectoryCoefficients(0.0, 0.0, 10.0, 0.0, 0.0, 10.0)
    with pytest.raises(OutOfValidity):
        coeffs.eval(10.1)
    with pytest.raises(OutOfValidity):
        coeffs.eval(-0.1)


def test_degenerate_horizon():
    with pytest.raises(DegenerateHorizon):
        solve_cubic(BoundaryConditions(0.0, 5e-7, 0.0, 1.0, 10.0, 1.0))


def test_check_feasible_clean():
    coeffs = TrajectoryCoefficients(0.0, 0.0, 10.0, 0.0, 0.0, 10.0)
    assert check_feasible(coeffs, ActuationLimits()) == []


def test_check_feasible_constant_control_violation():
    coeffs = TrajectoryCoefficients(0.0, 5.0, 0.0, 0.0, 0.0, 10.0)
    violations = check_feasible(coeffs, ActuationLimits())
    u_max = [v for v in violations if v.bound == "u_max"]
    assert len(u_max) == 1
    assert u_max[0].t == pytest.approx(0.0)
    assert u_max[0].value == pytest.approx(5.0)


def test_check_feasible_speed_vertex():
    coeffs = TrajectoryCoefficients(-1.0, 5.0, 10.0, 0.0, 0.0, 10.0)
    violations = check_feasible(coeffs, ActuationLimits())
    v_max = [v for v in violations if v.bound == "v_max"]
    assert len(v_max) == 1
    assert v_max[0].t == pytest.approx(5.0)
    assert v_max[0].value == pytest.approx(22.5)


def test_check_feasible_matches_dense_sampling():
    rng = np.random.default_rng(5)
    limits = ActuationLimits()
    for _ in range(200):
        bc = random_bc(rng)
        coeffs = solve_cubic(bc)
        reported = {v.bound for v in check_feasible(coeffs, limits)}
        ts = np.arange(bc.t0, bc.tf, 1e-3)
        u = coeffs.a * ts + coeffs.b
        v = (coeffs.a / 2.0 * ts + coeffs.b) * ts + coeffs.c
        sampled = set()
        if u.max() > limits.u_max:
            sampled.add("u_max")
        if u.min() < limits.u_min:
            sampled.add("u_min")
        if v.max() > limits.v_max:
            sampled.add("v_max")
        if v.min() < limits.v_min:
            sampled.add("v_min")
        # Dense sampling can only miss hairline violations at the boundary.
        assert sampled <= reported


def test_cost_examples():
    assert cost(TrajectoryCoefficients(0.0, 0.0, 3.0, 0.0, 0.0, 50.0)) == 0.0
    assert cost(TrajectoryCoefficients(0.0, 2.0, 0.0, 0.0, 0.0, 10.0)) == pytest.approx(20.0)
    assert cost(TrajectoryCoefficients(1.0, 0.0, 0.0, 0.0, 0.0, 2.0)) == pytest.approx(4.0 / 3.0)


def test_cost_matches_quadrature():
    rng = np.random.default_rng(13)
    for _ in range(50):
        bc = random_bc(rng)
        coeffs = solve_cubic(bc)
        ts = np.linspace(bc.t0, bc.tf, 20_001)
        u = coeffs.a * ts + coeffs.b
        quad = 0.5 * np.trapezoid(u * u, ts)
        assert cost(coeffs) == pytest.approx(float(quad), rel=1e-6, abs=1e-9)


def test_boundary_condition_validation():
    with pytest.raises(ValueError):
        BoundaryConditions(0.0, -1.0, 0.0, 1.0, 10.0, 1.0)
    with pytest.raises(ValueError):
        BoundaryConditions(0.0, 10.0, 5.0, 1.0, 5.0, 1.0)
    with pytest.raises(ValueError):
        BoundaryConditions(0.0, 10.0, 0.0, -1.0, 10.0, 1.0)


def test_actuation_limit_validation():
    with pytest.raises(ValueError):
        ActuationLimits(u_min=1.0)
    with pytest.raises(ValueError):
        ActuationLimits(v_min=0.0)
