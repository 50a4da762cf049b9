"""Local affine identification by small-signal excitation + least squares.

The plant is excited with a short sequence of constant inputs; each input
is held for one sampling period, the derivative is approximated by a
forward difference, and a least-squares fit of [A B c] against the stacked
regressor recovers the local affine parameters. The state is not reset
between excitations (it drifts); the regressor records the midpoint state
of each sample.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import AffineModel, TrueSystem, Trajectory, _rk4_step
from .geometry import Box


class CellEscape(RuntimeError):
    """State left the cell during excitation; caller must replan."""

    def __init__(self, state, facet):
        super().__init__("state exited the cell during identification")
        self.state = np.asarray(state, dtype=float)
        self.facet = facet


@dataclass
class ExcitationPlan:
    inputs: list
    period: float
    amplitude: float

    @staticmethod
    def default(pu: Box, m: int, period: float = 1e-3, n: int = None) -> "ExcitationPlan":
        """Zero input plus ±a·e_i with a = 0.1 × the input-box half-width,
        cycled to K = n + m + 2 samples for a full-rank regressor.
        """
        half_width = float(np.min(0.5 * (pu.hi - pu.lo)))
        a = 0.1 * half_width
        base = [np.zeros(m)]
        for i in range(m):
            e = np.zeros(m)
            e[i] = a
            base.append(e.copy())
            base.append(-e)
        K = (n if n is not None else m) + m + 2
        inputs = [base[k % len(base)].copy() for k in range(max(K, len(base)))]
        return ExcitationPlan(inputs=inputs, period=period, amplitude=a)


def identify_affine(s: TrueSystem, x0, plan: ExcitationPlan,
                    cell: Optional[Box] = None, substeps: int = 10) -> AffineModel:
    """Run the excitation plan from x0 and fit an affine model.

    Each input is held for one period, integrated with RK4 substeps, and
    the forward difference (x_next - x)/T serves as the derivative sample.
    Raises CellEscape if a cell is given and the state leaves it.
    """
    x = np.asarray(x0, dtype=float).copy()
    T = plan.period
    rows_x = []
    rows_dx = []
    for u in plan.inputs:
        u = np.asarray(u, dtype=float)
        x_next = x
        h = T / substeps
        for _ in range(substeps):
            x_next = _rk4_step(lambda z: s.xdot(z, u), x_next, h)
        if cell is not None and not cell.contains(x_next, tol=1e-9):
            raise CellEscape(x_next, None)
        # the forward difference matches the derivative at the midpoint
        # state to second order, so regress against the midpoint
        rows_x.append(np.concatenate([0.5 * (x + x_next), u, [1.0]]))
        rows_dx.append((x_next - x) / T)
        x = x_next

    X = np.array(rows_x)            # (K, n+m+1)
    Xdot = np.array(rows_dx)        # (K, n)
    # the regressor is badly scaled (states move by O(T) between samples),
    # so solve through the SVD; directions below the cutoff are pure
    # integration noise and would blow up the parameters if retained
    theta = np.linalg.lstsq(X, Xdot, rcond=1e-7)[0].T
    n, m = s.n, s.m
    A = theta[:, :n]
    B = theta[:, n:n + m]
    c = theta[:, n + m]
    model = AffineModel(A=A, B=B, c=c, linearization_point=np.asarray(x0, float))
    model.final_state = x
    return model
