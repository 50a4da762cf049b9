"""Scenario plumbing and mission log bookkeeping."""
import numpy as np
import pytest

from reachplan.dynamics import Trajectory
from reachplan.partition import uniform_cell_count
from reachplan.planner import MissionLog, Scenario, builtin_scenario


def test_builtin_mecanum_parameters():
    scn = builtin_scenario("mecanum")
    assert scn.system == "mecanum"
    assert scn.ws_lo.tolist() == [-8.0, -8.0] and scn.ws_hi.tolist() == [8.0, 8.0]
    assert scn.pu_lo.tolist() == [-5.0, -5.0] and scn.pu_hi.tolist() == [5.0, 5.0]
    assert scn.L_df == 0.03 and scn.L_g == 0.03
    assert scn.h_min.tolist() == [1.0, 1.0]
    assert scn.C_u == 100.0 and scn.beta_u == 0.8
    assert not scn.underactuated
    assert uniform_cell_count(scn.ws_lo, scn.ws_hi, scn.h_min) == 256


def test_builtin_unicycle_parameters():
    scn = builtin_scenario("unicycle")
    assert scn.system == "unicycle"
    assert scn.ws_lo.tolist() == [-10.0, -10.0, -np.pi]
    assert scn.ws_hi.tolist() == [10.0, 10.0, np.pi]
    assert scn.h_min == pytest.approx([1.25, 1.25, np.pi / 4])
    assert scn.C_u == 10.0 and scn.beta_u == 1.0
    assert scn.theta_thre == pytest.approx(np.deg2rad(10.0))
    assert scn.underactuated
    assert uniform_cell_count(scn.ws_lo, scn.ws_hi, scn.h_min) == 16 * 16 * 8


def test_unknown_builtin_raises():
    with pytest.raises(ValueError):
        builtin_scenario("hovercraft")


def test_scenario_rejects_start_outside_workspace():
    scn = builtin_scenario("mecanum")
    d = scn.to_dict()
    d["x_init"] = [9.0, 0.0]
    with pytest.raises(ValueError):
        Scenario.from_dict(d)


def test_scenario_round_trip():
    scn = builtin_scenario("unicycle")
    d = scn.to_dict()
    # everything is JSON-serializable
    import json
    blob = json.dumps(d)
    scn2 = Scenario.from_dict(json.loads(blob))
    assert scn2.system == scn.system
    assert np.allclose(scn2.h_min, scn.h_min)
    assert np.allclose(scn2.x_target, scn.x_target)
    assert scn2.theta_thre == scn.theta_thre


def test_scenario_make_system_dimensions():
    mec = builtin_scenario("mecanum").make_system()
    assert (mec.n, mec.m) == (2, 2)
    uni = builtin_scenario("unicycle").make_system()
    assert (uni.n, uni.m) == (3, 2)


def test_mission_log_append_and_success():
    log = MissionLog()
    assert not log.success
    traj = Trajectory(
        t=np.array([0.0, 0.5, 1.0]),
        x=np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]),
        u=np.array([[1.0, 0.0], [1.0, 0.0]]),
        exit_facet=1,
    )
    log.append_traj(traj, t0=2.0, cell_id=7)
    assert log.traj_t == [2.0, 2.5, 3.0]
    assert log.traj_cell == [7, 7, 7]
    # the final sample reuses the last held input
    assert np.allclose(log.traj_u[-1], [1.0, 0.0])
    log.event(3.0, "arrived", cell=7)
    assert log.events[-1] == {"t": 3.0, "type": "arrived", "cell": 7}
    log.status = "success"
    assert log.success
