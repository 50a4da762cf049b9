"""Terminal controller inside the target cell: CLF-CBF quadratic program.

A quadratic Lyapunov function drives the state toward the target point
while one affine barrier per cell facet keeps it inside the cell. Each
control step solves min ‖u‖² + δ² subject to the barrier rows (hard), the
Lyapunov decrease row softened by the slack δ ≥ 0, and the input box.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import AffineModel
from .geometry import Box
from .optim import LinearFeasibilityProblem, QPResult, SolverError, linear_feasible, solve_qp


@dataclass
class TerminalParams:
    P: Optional[np.ndarray] = None   # Lyapunov weight; identity by default
    alpha: float = 1.0               # Lyapunov decrease rate
    kappa: float = 1.0               # barrier rate
    r_stop: float = 0.1              # convergence radius
    slack_weight: float = 1.0        # penalty on the Lyapunov slack

    def weight(self, n: int) -> np.ndarray:
        if self.P is None:
            return np.eye(n)
        P = np.asarray(self.P, dtype=float)
        if P.shape != (n, n) or not np.allclose(P, P.T) or np.any(np.linalg.eigvalsh(P) <= 0):
            raise ValueError("P must be symmetric positive definite")
        return P


@dataclass
class TerminalStep:
    u: np.ndarray
    delta: float
    V: float
    min_barrier: float
    kkt_stationarity: float
    kkt_complementarity: float


def barrier_values(cell: Box, x) -> np.ndarray:
    """h_i(x) = b_i - n_iᵀx per facet; nonnegative inside the cell."""
    x = np.asarray(x, dtype=float)
    vals = np.empty(2 * cell.dim)
    for k in range(cell.dim):
        vals[2 * k] = x[k] - cell.lo[k]
        vals[2 * k + 1] = cell.hi[k] - x[k]
    return vals


def clf_cbf_control(model: AffineModel, x, x_target, cell: Box, pu: Box,
                    params: TerminalParams) -> TerminalStep:
    x = np.asarray(x, dtype=float)
    x_target = np.asarray(x_target, dtype=float)
    n, m = model.A.shape[0], model.B.shape[1]
    P = params.weight(n)
    err = x - x_target
    V = 0.5 * float(err @ P @ err)
    gradV = P @ err
    drift = model.A @ x + model.c

    # rows over z = (u, delta): G z <= h
    rows, rhs = [], []
    clf_row = np.concatenate([gradV @ model.B, [-1.0]])
    rows.append(clf_row)
    rhs.append(-params.alpha * V - float(gradV @ drift))
    h_vals = barrier_values(cell, x)
    for k in range(n):
        # lower facet: normal -e_k, barrier x_k - lo_k
        row = np.zeros(m + 1)
        row[:m] = -model.B[k]
        rows.append(row)
        rhs.append(params.kappa * h_vals[2 * k] + drift[k])
        # upper facet: normal +e_k, barrier hi_k - x_k
        row = np.zeros(m + 1)
        row[:m] = model.B[k]
        rows.append(row)
        rhs.append(params.kappa * h_vals[2 * k + 1] - drift[k])
    n_hard = len(rows)
    for k in range(m):
        row = np.zeros(m + 1)
        row[k] = 1.0
        rows.append(row)
        rhs.append(pu.hi[k])
        row = np.zeros(m + 1)
        row[k] = -1.0
        rows.append(row)
        rhs.append(pu.lo[k] * -1.0)
    row = np.zeros(m + 1)
    row[m] = -1.0
    rows.append(row)
    rhs.append(0.0)
    G = np.array(rows)
    h = np.array(rhs)

    # feasible start: satisfy the hard rows at some u, then lift delta
    hard = LinearFeasibilityProblem(
        A_le=G[1:n_hard, :m], b_le=h[1:n_hard],
        A_ge_strict=np.zeros((0, m)), b_ge_strict=np.zeros(0),
        lo=pu.lo, hi=pu.hi,
    )
    u0 = linear_feasible(hard)
    if u0 is None:
        raise SolverError("barrier rows infeasible within the input box")
    delta0 = max(0.0, float(clf_row[:m] @ u0) - h[0]) + 1e-9
    z0 = np.concatenate([u0, [delta0]])

    H = 2.0 * np.eye(m + 1)
    H[m, m] = 2.0 * params.slack_weight
    q = np.zeros(m + 1)
    res: QPResult = solve_qp(H, q, G, h, z0=z0)
    u = res.z[:m]
    delta = float(res.z[m])
    return TerminalStep(u=u, delta=delta, V=V, min_barrier=float(np.min(h_vals)),
                        kkt_stationarity=res.kkt_stationarity,
                        kkt_complementarity=res.kkt_complementarity)
