"""True-system models, analytic linearization, and closed-loop integration.

Two benchmark systems are built in: a mecanum-wheel ground robot with
terrain-dependent drift (fully actuated, n = m = 2) and a unicycle with
small heading/velocity disturbances (underactuated, n = 3, m = 2).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import Box, facet_id


@dataclass
class TrueSystem:
    n: int
    m: int
    f: Callable
    g: Callable
    df: Optional[Callable] = None  # Jacobian of the drift, when closed-form

    def xdot(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return self.f(x) + self.g(x) @ u


@dataclass
class AffineModel:
    """Local affine surrogate xdot ~= A x + B u + c."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    linearization_point: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.linearization_point = np.asarray(self.linearization_point, dtype=float)

    def xdot(self, x, u):
        return self.A @ np.asarray(x, float) + self.B @ np.asarray(u, float) + self.c


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    exit_facet: Optional[int] = None
    exit_time: Optional[float] = None
    clamp_warnings: int = 0

    @property
    def final_state(self):
        return self.x[-1]


def mecanum_system() -> TrueSystem:
    def f(x):
        return np.array([
            -0.5 * np.sin(0.1 * x[0] - 0.2 * x[1]) - 4.5,
            -0.2 * np.sin(0.3 * x[0] - 0.1 * x[1]) - 4.5,
        ])

    def g(x):
        return np.array([
            [1.0 + 0.02 * x[0], 0.02 * x[1]],
            [-0.02 * x[0], 1.0 - 0.02 * x[1]],
        ])

    def df(x):
        c1 = np.cos(0.1 * x[0] - 0.2 * x[1])
        c2 = np.cos(0.3 * x[0] - 0.1 * x[1])
        return np.array([
            [-0.05 * c1, 0.10 * c1],
            [-0.06 * c2, 0.02 * c2],
        ])

    return TrueSystem(n=2, m=2, f=f, g=g, df=df)


def unicycle_system() -> TrueSystem:
    def dv(x):
        return 0.03 * np.cos(0.01 * x[0] + 0.02 * x[1])

    def dw(x):
        return 0.03 * np.sin(-0.02 * x[0] + 0.01 * x[1])

    def f(x):
        th = x[2]
        return np.array([np.cos(th) * dv(x), np.sin(th) * dv(x), dw(x)])

    def g(x):
        th = x[2]
        return np.array([[np.cos(th), 0.0], [np.sin(th), 0.0], [0.0, 1.0]])

    def df(x):
        th = x[2]
        ddv = np.array([-0.03 * 0.01 * np.sin(0.01 * x[0] + 0.02 * x[1]),
                        -0.03 * 0.02 * np.sin(0.01 * x[0] + 0.02 * x[1]), 0.0])
        ddw = np.array([-0.03 * 0.02 * np.cos(-0.02 * x[0] + 0.01 * x[1]),
                        0.03 * 0.01 * np.cos(-0.02 * x[0] + 0.01 * x[1]), 0.0])
        J = np.zeros((3, 3))
        J[0, :] = np.cos(th) * ddv
        J[0, 2] += -np.sin(th) * dv(x)
        J[1, :] = np.sin(th) * ddv
        J[1, 2] += np.cos(th) * dv(x)
        J[2, :] = ddw
        return J

    return TrueSystem(n=3, m=2, f=f, g=g, df=df)


def analytic_linearize(s: TrueSystem, x_e) -> AffineModel:
    """Exact first-order model at x_e: A = df(x_e), B = g(x_e), c = f - A x_e."""
    x_e = np.asarray(x_e, dtype=float)
    if s.df is None:
        raise ValueError("system has no closed-form drift Jacobian")
    A = s.df(x_e)
    B = s.g(x_e)
    c = s.f(x_e) - A @ x_e
    return AffineModel(A=A, B=B, c=c, linearization_point=x_e)


def clamp_to_box(u, pu: Box):
    u = np.asarray(u, dtype=float)
    clamped = np.minimum(np.maximum(u, pu.lo), pu.hi)
    return clamped, bool(np.any(clamped != u))


def _rk4_step(deriv, x, dt):
    k1 = deriv(x)
    k2 = deriv(x + 0.5 * dt * k1)
    k3 = deriv(x + 0.5 * dt * k2)
    k4 = deriv(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _exit_violation(x, cell: Box):
    """Most-violated facet of the cell and its signed violation."""
    vio_lo = cell.lo - x
    vio_hi = x - cell.hi
    best_f, best_v = None, 0.0
    for k in range(cell.dim):
        if vio_lo[k] > best_v:
            best_v, best_f = vio_lo[k], facet_id(k, -1)
        if vio_hi[k] > best_v:
            best_v, best_f = vio_hi[k], facet_id(k, +1)
    return best_f, best_v


def integrate(s: TrueSystem, ctrl, x0, cell: Box, dt: float, t_max: float,
              pu: Optional[Box] = None, record_stride: int = 1) -> Trajectory:
    """Fixed-step RK4 rollout with facet-crossing event detection.

    The control is held constant across each RK4 step (zero-order hold at
    the step start). On the first step whose endpoint leaves the cell the
    crossing time is bisected to 1e-9 and the trajectory truncated there.
    """
    x = np.asarray(x0, dtype=float).copy()
    if not cell.contains(x, tol=1e-7):
        raise ValueError("initial state outside the cell")
    ts, xs, us = [0.0], [x.copy()], []
    clamps = 0
    t = 0.0
    n_steps = int(np.ceil(t_max / dt - 1e-12))
    for step in range(n_steps):
        u = np.asarray(ctrl(x), dtype=float)
        if pu is not None:
            u, was_clamped = clamp_to_box(u, pu)
            if was_clamped:
                clamps += 1
        deriv = lambda z: s.xdot(z, u)
        h = min(dt, t_max - t)
        x_new = _rk4_step(deriv, x, h)
        if not np.all(np.isfinite(x_new)):
            raise FloatingPointError("non-finite state during integration")
        fct, vio = _exit_violation(x_new, cell)
        if fct is not None and vio > 1e-12:
            # bisect the crossing time within this step
            lo_t, hi_t = 0.0, h
            for _ in range(200):
                if hi_t - lo_t <= 1e-9:
                    break
                mid = 0.5 * (lo_t + hi_t)
                x_mid = _rk4_step(deriv, x, mid)
                f_mid, v_mid = _exit_violation(x_mid, cell)
                if f_mid is not None and v_mid > 1e-12:
                    hi_t = mid
                else:
                    lo_t = mid
            x_cross = _rk4_step(deriv, x, hi_t)
            f_cross, _ = _exit_violation(x_cross, cell)
            t += hi_t
            ts.append(t)
            xs.append(x_cross)
            us.append(u)
            return Trajectory(
                t=np.array(ts), x=np.array(xs), u=np.array(us),
                exit_facet=f_cross if f_cross is not None else fct,
                exit_time=t, clamp_warnings=clamps,
            )
        x = x_new
        t += h
        if (step + 1) % record_stride == 0 or step == n_steps - 1:
            ts.append(t)
            xs.append(x.copy())
            us.append(u)
    if clamps:
        warnings.warn(f"control clamped to input box on {clamps} steps")
    return Trajectory(t=np.array(ts), x=np.array(xs), u=np.array(us),
                      clamp_warnings=clamps)
