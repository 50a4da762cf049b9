"""True systems, analytic linearization, RK4 integration, crossing detection."""
import numpy as np
import pytest
from scipy.linalg import expm

from reachplan.dynamics import (AffineModel, TrueSystem, analytic_linearize,
                                clamp_to_box, integrate, mecanum_system,
                                unicycle_system)
from reachplan.geometry import Box, facet_id


def _fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    n = f(x).size
    J = np.zeros((n, x.size))
    for k in range(x.size):
        e = np.zeros(x.size)
        e[k] = h
        J[:, k] = (f(x + e) - f(x - e)) / (2 * h)
    return J


@pytest.mark.parametrize("maker", [mecanum_system, unicycle_system])
def test_drift_jacobian_matches_finite_differences(maker):
    s = maker()
    rng = np.random.default_rng(17)
    for _ in range(20):
        x = rng.uniform(-3, 3, s.n)
        assert np.allclose(s.df(x), _fd_jacobian(s.f, x), atol=1e-6)


@pytest.mark.parametrize("maker", [mecanum_system, unicycle_system])
def test_analytic_linearize_is_first_order(maker):
    s = maker()
    rng = np.random.default_rng(23)
    for _ in range(10):
        xe = rng.uniform(-2, 2, s.n)
        u = rng.uniform(-1, 1, s.m)
        model = analytic_linearize(s, xe)
        # exact at the linearization point
        assert np.allclose(model.xdot(xe, u), s.xdot(xe, u), atol=1e-12)
        # drift error is second order nearby (the input matrix is frozen at
        # xe, so compare with zero input)
        d = 1e-4 * rng.standard_normal(s.n)
        err = np.linalg.norm(model.xdot(xe + d, np.zeros(s.m))
                             - s.xdot(xe + d, np.zeros(s.m)))
        assert err < 10 * np.linalg.norm(d) ** 2 + 1e-12


def test_unicycle_control_structure():
    s = unicycle_system()
    g = s.g([0.0, 0.0, np.pi / 3])
    assert np.allclose(g[:, 0], [np.cos(np.pi / 3), np.sin(np.pi / 3), 0.0])
    assert np.allclose(g[:, 1], [0.0, 0.0, 1.0])


def test_clamp_to_box():
    pu = Box(lo=[-1.0, -1.0], hi=[1.0, 1.0])
    u, clamped = clamp_to_box([0.5, -2.0], pu)
    assert clamped and np.allclose(u, [0.5, -1.0])
    u, clamped = clamp_to_box([0.1, 0.2], pu)
    assert not clamped


def _constant_field(v):
    v = np.asarray(v, dtype=float)
    return TrueSystem(n=v.size, m=v.size,
                      f=lambda x: v.copy(),
                      g=lambda x: np.zeros((v.size, v.size)))


def test_integrate_exit_time_exact_for_constant_flow():
    # dx/dt = (1, 0): from (0.2, 0.5) the +x facet of the unit box is hit
    # at t = 0.8 exactly
    s = _constant_field([1.0, 0.0])
    cell = Box(lo=[0.0, 0.0], hi=[1.0, 1.0])
    traj = integrate(s, lambda x: np.zeros(2), [0.2, 0.5], cell, dt=1e-2, t_max=5.0)
    assert traj.exit_facet == facet_id(0, +1)
    assert traj.exit_time == pytest.approx(0.8, abs=1e-8)
    assert traj.final_state[0] == pytest.approx(1.0, abs=1e-8)


def test_integrate_timeout_returns_no_exit():
    s = _constant_field([0.0, 0.0])
    cell = Box(lo=[0.0, 0.0], hi=[1.0, 1.0])
    traj = integrate(s, lambda x: np.zeros(2), [0.5, 0.5], cell, dt=1e-2, t_max=0.1)
    assert traj.exit_facet is None
    assert traj.t[-1] == pytest.approx(0.1)


def test_integrate_rejects_outside_start():
    s = _constant_field([1.0, 0.0])
    cell = Box(lo=[0.0, 0.0], hi=[1.0, 1.0])
    with pytest.raises(ValueError):
        integrate(s, lambda x: np.zeros(2), [2.0, 0.5], cell, dt=1e-2, t_max=1.0)


def test_rk4_accuracy_against_matrix_exponential():
    A = np.array([[0.0, 1.0], [-2.0, -0.5]])
    s = TrueSystem(n=2, m=2, f=lambda x: A @ x, g=lambda x: np.zeros((2, 2)))
    cell = Box(lo=[-10.0, -10.0], hi=[10.0, 10.0])
    x0 = np.array([1.0, 0.0])
    traj = integrate(s, lambda x: np.zeros(2), x0, cell, dt=1e-3, t_max=2.0)
    exact = expm(A * traj.t[-1]) @ x0
    assert np.allclose(traj.final_state, exact, atol=1e-9)


def test_integrate_control_clamping_counted():
    s = TrueSystem(n=1, m=1, f=lambda x: np.zeros(1),
                   g=lambda x: np.eye(1))
    cell = Box(lo=[-1.0], hi=[1.0])
    pu = Box(lo=[-0.5], hi=[0.5])
    with pytest.warns(UserWarning):
        traj = integrate(s, lambda x: np.array([2.0]), [0.0], cell,
                         dt=1e-2, t_max=0.05, pu=pu)
    assert traj.clamp_warnings == 5
    # effective input was clamped to 0.5
    assert traj.final_state[0] == pytest.approx(0.025)


def test_affine_model_xdot():
    m = AffineModel(A=[[0.0, 1.0], [0.0, 0.0]], B=[[0.0], [1.0]],
                    c=[0.5, 0.0], linearization_point=[0.0, 0.0])
    assert np.allclose(m.xdot([1.0, 2.0], [3.0]), [2.5, 3.0])


def test_mecanum_drift_magnitude():
    # drift pushes down-left at roughly 4.5 per axis everywhere
    s = mecanum_system()
    for x in ([0.0, 0.0], [6.0, 6.0], [-5.0, 3.0]):
        d = s.f(np.asarray(x, dtype=float))
        assert d[0] < -3.9 and d[1] < -3.9
        assert np.linalg.norm(d) < 8.0
