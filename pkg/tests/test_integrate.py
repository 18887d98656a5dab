import math

import pytest

from phibranch.examples import get_example
from phibranch.integrate import (
    DomainExitError,
    integrate,
    propagate,
)
from phibranch.normalform import State, SystemRhs
from phibranch.problem import problem_from_dict


@pytest.fixture(scope="module")
def harmonic():
    # x' = y, y' = -x with T = 2 pi: solution (cos t, -sin t) from (1, 0)
    return problem_from_dict(
        dict(
            form="autonomous-plus-perturbation",
            phi="v",
            g="0 - x",
            f="0",
            period=2.0 * math.pi,
        )
    )


def test_equilibrium_stays_constant():
    ex1 = get_example("ex1")
    traj = integrate(SystemRhs(ex1, 0.0), State(0.0, 0.0), 1.0, 1e-10)
    assert all(s == (0.0, 0.0) for s in traj.states)
    assert traj.times[0] == 0.0 and traj.times[-1] == 1.0
    assert len(traj.states) == 401


def test_linear_drift_exact():
    spec = problem_from_dict(
        dict(form="lambda-perturbed", phi="v", f="0", period=2.0)
    )
    c = 0.75
    traj = integrate(SystemRhs(spec, 0.0), State(0.25, c), 2.0, 1e-10)
    xT, yT = traj.endpoint()
    assert abs(xT - (0.25 + c * 2.0)) <= 1e-12
    assert yT == c


def test_harmonic_endpoint_accuracy(harmonic):
    sys = SystemRhs(harmonic, 0.0)
    traj = integrate(sys, State(1.0, 0.0), 2.0 * math.pi, 1e-10)
    xT, yT = traj.endpoint()
    assert math.hypot(xT - 1.0, yT) <= 1e-8


def test_tolerance_factor_on_harmonic(harmonic):
    sys = SystemRhs(harmonic, 0.0)
    T = 2.0 * math.pi
    errs = []
    for tol in (1e-6, 1e-8):
        z, _, _ = propagate(sys, [1.0, 0.0], 0.0, T, tol)
        errs.append(math.hypot(z[0] - 1.0, z[1]))
    assert errs[0] / errs[1] >= 16.0


def test_observed_order_in_window(harmonic):
    sys = SystemRhs(harmonic, 0.0)
    T = 2.0 * math.pi
    pts = []
    for tol in (1e-6, 1e-8, 1e-10):
        z, steps, _ = propagate(sys, [1.0, 0.0], 0.0, T, tol)
        pts.append((T / steps, math.hypot(z[0] - 1.0, z[1])))
    for (h1, e1), (h2, e2) in zip(pts[:-1], pts[1:]):
        order = math.log(e1 / e2) / math.log(h1 / h2)
        assert 4.0 <= order <= 6.0


def test_deterministic_bitwise(harmonic):
    sys = SystemRhs(harmonic, 0.0)
    t1 = integrate(sys, State(1.0, 0.0), 2.0 * math.pi, 1e-9)
    t2 = integrate(sys, State(1.0, 0.0), 2.0 * math.pi, 1e-9)
    assert t1.states == t2.states
    assert t1.steps == t2.steps and t1.rejected == t2.rejected


def test_forward_backward_reversal():
    ex3 = get_example("ex3")
    sys = SystemRhs(ex3, 0.5)
    tol = 1e-10
    z0 = [0.3, 0.4]
    z1, _, _ = propagate(sys, z0, 0.0, ex3.period, tol)
    z2, _, _ = propagate(sys, z1, ex3.period, 0.0, tol)
    assert max(abs(a - b) for a, b in zip(z0, z2)) <= 10.0 * tol


def test_dense_grid_shape_and_monotone_times():
    ex2 = get_example("ex2")
    traj = integrate(SystemRhs(ex2, 0.3), State(0.2, 0.1), ex2.period, 1e-9)
    assert len(traj.times) == 401
    assert traj.times[0] == 0.0 and traj.times[-1] == ex2.period
    assert all(a < b for a, b in zip(traj.times[:-1], traj.times[1:]))


def test_velocity_reconstruction_invariant():
    ex3 = get_example("ex3")
    lam = 0.7
    traj = integrate(SystemRhs(ex3, lam), State(0.5, -0.2), ex3.period, 1e-9)
    for s, v in zip(traj.states, traj.velocities):
        x, y = s
        assert abs(ex3.eval_phi(lam, x, v) - y) <= 1e-9 * (1.0 + abs(y))


def test_dense_samples_match_tight_reintegration():
    # interpolated mid-samples agree with a direct integration to that time
    ex2 = get_example("ex2")
    sys = SystemRhs(ex2, 0.4)
    traj = integrate(sys, State(0.3, 0.1), ex2.period, 1e-10)
    for idx in (57, 200, 333):
        t = traj.times[idx]
        z, _, _ = propagate(sys, [0.3, 0.1], 0.0, t, 1e-12)
        assert max(abs(a - b) for a, b in zip(traj.states[idx], z)) <= 1e-7


def test_domain_exit_reports_time():
    spec = problem_from_dict(
        dict(
            form="lambda-perturbed",
            phi="v",
            f="0",
            period=4.0,
            domain=[[-10.0, 1.0]],
        )
    )
    # x(t) = t exits at t = 1
    with pytest.raises(DomainExitError) as err:
        integrate(SystemRhs(spec, 0.0), State(0.0, 1.0), 4.0, 1e-9)
    assert 0.9 <= err.value.time <= 1.3


def test_initial_point_outside_domain_rejected():
    spec = problem_from_dict(
        dict(form="lambda-perturbed", phi="v", f="0", period=1.0, domain=[[0.0, 1.0]])
    )
    with pytest.raises(DomainExitError):
        integrate(SystemRhs(spec, 0.0), State(2.0, 0.0), 1.0, 1e-9)


def test_tolerance_range_enforced(harmonic):
    sys = SystemRhs(harmonic, 0.0)
    with pytest.raises(ValueError):
        integrate(sys, State(1.0, 0.0), 1.0, 1e-2)
    with pytest.raises(ValueError):
        integrate(sys, State(1.0, 0.0), 1.0, 1e-14)


def test_breakpoints_preserve_accuracy():
    # forcing with a kink at t = 0.5; declaring the breakpoint keeps the
    # integrator's order intact across it
    cfg = dict(
        form="lambda-perturbed",
        phi="v",
        f="abs(t - 0.5)",
        period=1.0,
        breakpoints=[0.5],
    )
    spec = problem_from_dict(cfg)
    sys = SystemRhs(spec, 1.0)
    traj = integrate(sys, State(0.0, 0.0), 1.0, 1e-11)
    # closed form: y(1) = 1/4, x(1) = 1/8
    xT, yT = traj.endpoint()
    assert abs(yT - 0.25) <= 1e-10
    assert abs(xT - 0.125) <= 1e-10
