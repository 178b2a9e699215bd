import numpy as np
import pytest

from uwbimu import geom, models, trajectories


def test_static_nothing_excited():
    traj = trajectories.make_static(duration=5.0)
    rep = trajectories.excitation_report(traj)
    assert rep.accel == (False, False, False)
    assert rep.gyro == (False, False, False)


def test_single_axis_accel_excites_one_channel():
    for axis, idx in zip("xyz", range(3)):
        traj = trajectories.make_single_axis_accel(axis=axis, duration=5.0)
        rep = trajectories.excitation_report(traj)
        assert rep.accel[idx]
        assert sum(rep.accel) == 1
        assert not any(rep.gyro)


def test_single_axis_rotation_excites_one_gyro_channel():
    for axis, idx in zip("xyz", range(3)):
        traj = trajectories.make_single_axis_rotation(axis=axis, duration=5.0)
        rep = trajectories.excitation_report(traj)
        assert rep.gyro[idx]
        assert sum(rep.gyro) == 1
        # the rotation axis is aligned with gravity, so the specific force
        # stays constant in the body frame and no accel channel is excited
        assert not any(rep.accel)


def test_constant_rate_is_not_excitation():
    # a constant nonzero rate has zero variance: no timing information
    traj = trajectories.make_single_axis_rotation(axis="z", rate=0.5, frequency=0.0,
                                                  duration=5.0)
    rep = trajectories.excitation_report(traj)
    assert not any(rep.gyro)


def test_full_excitation_excites_everything():
    traj = trajectories.make_full_excitation(duration=10.0)
    rep = trajectories.excitation_report(traj)
    assert rep.all_excited()


def test_velocity_consistent_with_position():
    traj = trajectories.make_full_excitation(duration=10.0)
    h = 1e-6
    for t in (1.0, 3.7, 8.2):
        v_fd = (traj.position(t + h) - traj.position(t - h)) / (2 * h)
        assert np.allclose(traj.velocity(t), v_fd, atol=1e-6)


def test_acceleration_consistent_with_velocity():
    traj = trajectories.make_full_excitation(duration=10.0)
    h = 1e-6
    for t in (1.0, 3.7, 8.2):
        a_fd = (traj.velocity(t + h) - traj.velocity(t - h)) / (2 * h)
        assert np.allclose(traj.acceleration(t), a_fd, atol=1e-5)


def test_angular_rate_consistent_with_orientation():
    traj = trajectories.make_full_excitation(duration=10.0)
    h = 1e-6
    for t in (1.0, 3.7, 8.2):
        R0 = geom.rotation_matrix(traj.orientation(t - h))
        R1 = geom.rotation_matrix(traj.orientation(t + h))
        Wh = R0.T @ (R1 - R0) / (2 * h)
        w_fd = np.array([Wh[2, 1], Wh[0, 2], Wh[1, 0]])
        assert np.allclose(traj.angular_rate(t), w_fd, atol=1e-5)


def test_domain_margin_allows_delay_lookback():
    traj = trajectories.make_full_excitation(duration=5.0)
    traj.position(-0.2)  # within the margin
    with pytest.raises(ValueError):
        traj.position(-0.5)


def test_make_trajectory_dispatch():
    traj = trajectories.make_trajectory("static", {"duration": 2.0})
    assert traj.kind == "static"
    with pytest.raises(ValueError):
        trajectories.make_trajectory("warp", {})


def test_state_at_packs_fields():
    traj = trajectories.make_full_excitation(duration=5.0)
    s = traj.state_at(2.0, b_a=[0.1, 0, 0], p_IU=[0, 0.2, 0], t_d=0.05)
    assert isinstance(s, models.State)
    assert s.t_d == 0.05
    assert np.allclose(s.p_WI, traj.position(2.0))
