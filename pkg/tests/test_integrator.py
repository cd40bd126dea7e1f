import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from conftest import LAGRANGE, random_state
from shapesphere import core
from shapesphere.core import EQUAL_MASSES, MassDistribution, PhaseState
from shapesphere.integrator import (COLLISION, TIME_REACHED, DenseOutput, IntegratorConfig, Trajectory,
                                    detect_events, drift_report, integrate, solve)
from shapesphere.projection import project
from shapesphere.solutions import lagrange_circular_state

LAGRANGE_PERIOD = 2 * math.pi * 3**0.25


def kepler_rhs(c):
    def f(t, y):
        r3 = math.hypot(y[0], y[1]) ** 3
        return np.array([y[2], y[3], -c * y[0] / r3, -c * y[1] / r3])
    return f


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(abs_tol=0)
    with pytest.raises(ValueError):
        IntegratorConfig(min_step=1.0, max_step=0.5)
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(error_control="global")


def test_trajectory_invariants():
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], np.zeros((2, 12)), "full", EQUAL_MASSES)
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], np.zeros((3, 12)), "full", EQUAL_MASSES)


def test_lagrange_orbit_conservation():
    s = lagrange_circular_state()
    traj = integrate(s, EQUAL_MASSES, 10 * LAGRANGE_PERIOD, IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10))
    assert traj.termination == TIME_REACHED
    dH, dJ, dP = drift_report(traj)
    H0 = abs(traj.diagnostics["H"][0])
    assert dH < 1e-9 * H0
    assert dJ < 1e-9 * abs(traj.diagnostics["J"][0])
    assert dP < 1e-9


def test_lagrange_jacobi_residual_on_circular_orbit():
    # equal-mass Lagrange motion is linearly unstable; stay within the first periods
    traj = integrate(lagrange_circular_state(), EQUAL_MASSES, 3 * LAGRANGE_PERIOD,
                     IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12))
    assert np.max(np.abs(traj.diagnostics["I"] - 3.0)) < 1e-9
    # I'' = 0 on the rigid rotation, so 4H + 2U = 0 along it; residual is finite-difference noise
    assert core.lagrange_jacobi_residual(traj, samples=4001) < 1e-5


def test_kepler_circular_period():
    c = 2.0
    cfg = IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12)
    P = math.pi * math.sqrt(2)
    _, _, dense, reason = solve(kepler_rhs(c), [1.0, 0.0, 0.0, math.sqrt(2)], 1.2 * P, cfg)
    assert reason == TIME_REACHED
    t_ret = brentq(lambda t: dense(t)[1], 0.9 * P, 1.1 * P, xtol=1e-14)
    assert abs(t_ret - P) < 1e-8


def test_free_fall_collinear_terminates_with_collision():
    traj = integrate(PhaseState(np.array([0, -1, 1], complex)), EQUAL_MASSES, 3.0)
    assert traj.termination == COLLISION
    assert np.all(np.isfinite(traj.states))
    assert traj.times[-1] < 1.0


def test_against_scipy_oracle(rng):
    m = MassDistribution(1.0, 0.8, 1.3)
    for _ in range(3):
        s = random_state(rng)
        s = PhaseState(2 * s.q, 0.3 * s.v)
        T = 1.5
        traj = integrate(s, m, T, IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12))
        if traj.termination != TIME_REACHED:
            continue
        ref = solve_ivp(core.full_rhs(m), (0, T), s.pack(), method="DOP853", rtol=1e-13, atol=1e-13,
                        dense_output=True)
        t = np.linspace(0, T, 50)
        scale = np.max(np.abs(ref.sol(t)))
        assert np.max(np.abs(traj.sample(t) - ref.sol(t).T)) < 1e-8 * scale


def test_rk4_fourth_order():
    c = 2.0
    P = math.pi * math.sqrt(2)
    errs = []
    for n in (200, 400, 800):
        cfg = IntegratorConfig(method="rk4", step=P / n)
        _, Y, _, _ = solve(kepler_rhs(c), [1.0, 0.0, 0.0, math.sqrt(2)], P, cfg)
        errs.append(np.max(np.abs(Y[-1] - [1.0, 0.0, 0.0, math.sqrt(2)])))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    for r in ratios:
        assert 13 < r < 19


def test_time_reversal(rng):
    s = PhaseState(LAGRANGE * 1.3, 0.2 * (rng.normal(size=3) + 1j * rng.normal(size=3)))
    cfg = IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12)
    fwd = integrate(s, EQUAL_MASSES, 2.0, cfg)
    end = fwd.state(-1)
    back = integrate(PhaseState(end.q, -end.v), EQUAL_MASSES, 2.0, cfg).state(-1)
    y0 = s.pack()
    y1 = PhaseState(back.q, -back.v).pack()
    assert np.max(np.abs(y1 - y0)) < 1e-8 * np.max(np.abs(y0))


def test_drift_grows_with_tolerance():
    s = PhaseState(np.array([0, 3, 4j]) - (3 + 4j) / 3, np.array([0.1j, -0.2, 0.1]))
    drifts = []
    for tol in (1e-3, 1e-6, 1e-9):
        traj = integrate(s, EQUAL_MASSES, 3.0, IntegratorConfig(abs_tol=tol, rel_tol=tol))
        drifts.append(drift_report(traj)[0])
    assert drifts[0] > drifts[1] > drifts[2]


def test_per_step_error_control_also_works():
    s = lagrange_circular_state()
    traj = integrate(s, EQUAL_MASSES, LAGRANGE_PERIOD, IntegratorConfig(error_control="per_step"))
    assert drift_report(traj)[0] < 1e-7


def test_drift_report_empty():
    t = Trajectory(np.zeros(0), np.zeros((0, 12)), "full", EQUAL_MASSES)
    assert drift_report(t) == (0.0, 0.0, 0.0)


def test_linear_observable_single_event():
    T = 3.0
    times = np.linspace(0, T, 7)
    v = np.array([1.0, 0.5j, -1 - 0.5j])
    q0 = np.array([0, 1, 2j])
    Y = np.array([PhaseState(q0 + t * v, v).pack() for t in times])
    F = np.array([np.concatenate([PhaseState(v, np.zeros(3)).pack()[:6], np.zeros(6)]) for _ in times])
    traj = Trajectory(times, Y, "full", EQUAL_MASSES, dense=DenseOutput.hermite(times, Y, F))
    ev = detect_events(traj, lambda s: s.q[0].real - T / 2)
    assert len(ev) == 1
    assert abs(ev[0].time - T / 2) <= 1e-10 * T
    assert not ev[0].grazing


def test_no_events_on_lagrange_orbit():
    traj = integrate(lagrange_circular_state(), EQUAL_MASSES, LAGRANGE_PERIOD)
    assert detect_events(traj, lambda s: project(s.q, EQUAL_MASSES)[2]) == []


def test_event_times_independent_of_sampling():
    s = PhaseState(np.array([0, 3, 4j]) - (3 + 4j) / 3, np.array([0.3j, -0.2, 0.1 - 0.3j]))
    s = PhaseState(s.q, s.v - core.linear_momentum(s, EQUAL_MASSES) / 3)
    traj = integrate(s, EQUAL_MASSES, 3.5, IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12))
    w3 = lambda st: project(st.q, EQUAL_MASSES)[2]
    a = [e.time for e in detect_events(traj, w3)]
    fine = traj.resample(np.linspace(0, traj.times[-1], 3 * len(traj)))
    b = [e.time for e in detect_events(fine, w3)]
    assert len(a) == len(b) > 0
    assert np.max(np.abs(np.subtract(a, b))) < 1e-9 * traj.duration


def test_grazing_touchdown_flagged():
    T = 2.0
    times = np.linspace(0, T, 9)
    # q1 real part (t - 1)^2: touches zero at t = 1 without crossing
    def st(t):
        q = np.array([(t - 1) ** 2 + 0j, 5, 5j])
        v = np.array([2 * (t - 1) + 0j, 0, 0])
        return PhaseState(q, v).pack()
    Y = np.array([st(t) for t in times])
    F = np.zeros_like(Y)
    F[:, 0] = 2 * (times - 1)
    F[:, 6] = 2.0
    traj = Trajectory(times, Y, "full", EQUAL_MASSES, dense=DenseOutput.hermite(times, Y, F))
    ev = detect_events(traj, lambda s: s.q[0].real)
    assert len(ev) == 1 and ev[0].grazing
