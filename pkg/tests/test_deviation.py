"""Lipschitz deviation bounds between local affine models."""
import numpy as np
import pytest

from reachplan.deviation import DeviationBounds, cell_pair_bounds, deviation_bounds
from reachplan.dynamics import analytic_linearize, mecanum_system
from reachplan.geometry import Box


def test_spot_values_by_hand():
    # d = ||(3,4)|| = 5
    b = deviation_bounds(0.03, 0.1, [0.0, 0.0], [3.0, 4.0])
    assert b.eps_A == pytest.approx(0.03 * 5)
    assert b.eps_B == pytest.approx(0.1 * 5)
    # 0.5 * 0.03 * 25 + 0.03 * 5 * 5
    assert b.eps_c == pytest.approx(0.375 + 0.75)


def test_zero_distance_gives_zero_bounds():
    b = deviation_bounds(0.03, 0.03, [1.0, 2.0], [1.0, 2.0])
    assert b.eps_A == 0.0 and b.eps_B == 0.0 and b.eps_c == 0.0


def test_negative_constants_rejected():
    with pytest.raises(ValueError):
        deviation_bounds(-0.1, 0.0, [0.0], [1.0])
    with pytest.raises(ValueError):
        DeviationBounds(-1.0, 0.0, 0.0)


def test_cell_pair_bounds_dominate_pointwise():
    rng = np.random.default_rng(5)
    for _ in range(50):
        src = rng.uniform(-4, 4, 2)
        lo = rng.uniform(-4, 0, 2)
        cell = Box(lo=lo, hi=lo + rng.uniform(0.5, 2.0, 2))
        cb = cell_pair_bounds(0.03, 0.03, src, cell)
        for _ in range(20):
            x = rng.uniform(cell.lo, cell.hi)
            pb = deviation_bounds(0.03, 0.03, src, x)
            assert pb.eps_A <= cb.eps_A + 1e-12
            assert pb.eps_B <= cb.eps_B + 1e-12
            assert pb.eps_c <= cb.eps_c + 1e-12


def test_bounds_hold_for_mecanum_linearizations():
    # randomized version of the workspace-wide soundness check
    s = mecanum_system()
    rng = np.random.default_rng(6)
    for _ in range(200):
        x1 = rng.uniform(-8, 8, 2)
        x2 = rng.uniform(-8, 8, 2)
        b = deviation_bounds(0.03, 0.03, x1, x2)
        m1 = analytic_linearize(s, x1)
        m2 = analytic_linearize(s, x2)
        assert np.linalg.norm(m2.A - m1.A, 2) <= b.eps_A + 1e-12
        assert np.linalg.norm(m2.B - m1.B, 2) <= b.eps_B + 1e-12
        assert np.linalg.norm(m2.c - m1.c) <= b.eps_c + 1e-12
