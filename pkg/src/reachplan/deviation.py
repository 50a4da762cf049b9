"""Lipschitz-based bounds on the drift between local affine models.

If the drift Jacobian is L_df-Lipschitz and the input matrix is
L_g-Lipschitz, then two affine models linearized at x1 and x2 differ by at
most (eps_A, eps_B, eps_c) in the A, B, c parameters respectively.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box


@dataclass(frozen=True)
class DeviationBounds:
    eps_A: float
    eps_B: float
    eps_c: float

    def __post_init__(self):
        if self.eps_A < 0 or self.eps_B < 0 or self.eps_c < 0:
            raise ValueError("deviation bounds must be nonnegative")

    @staticmethod
    def zero() -> "DeviationBounds":
        return DeviationBounds(0.0, 0.0, 0.0)


def deviation_bounds(L_df: float, L_g: float, x1, x2) -> DeviationBounds:
    """Parameter deviation between linearizations at x1 and x2."""
    if L_df < 0 or L_g < 0:
        raise ValueError("Lipschitz constants must be nonnegative")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    d = float(np.linalg.norm(x2 - x1))
    eps_A = L_df * d
    eps_B = L_g * d
    eps_c = 0.5 * L_df * d * d + L_df * d * float(np.linalg.norm(x2))
    return DeviationBounds(eps_A, eps_B, eps_c)


def cell_pair_bounds(L_df: float, L_g: float, source_point, target_cell: Box) -> DeviationBounds:
    """Worst-case deviation from a linearization point to any point of a cell.

    Both the distance d and the norm term are convex in the target point,
    so the componentwise maxima occur at cell vertices.
    """
    src = np.asarray(source_point, dtype=float)
    best = DeviationBounds.zero()
    ea = eb = ec = 0.0
    for code in range(2 ** target_cell.dim):
        v = target_cell.vertex(code)
        b = deviation_bounds(L_df, L_g, src, v)
        ea = max(ea, b.eps_A)
        eb = max(eb, b.eps_B)
        ec = max(ec, b.eps_c)
    return DeviationBounds(ea, eb, ec)
