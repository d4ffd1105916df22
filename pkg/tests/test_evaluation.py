import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lodestar_odom.evaluation import (
    FIRST_POSE,
    LEAST_SQUARES,
    AssociationError,
    TrajectoryFormatError,
    ape_series_csv,
    associate,
    compute_ape,
    fit_rigid_2d,
    format_trajectory,
    parse_trajectory,
    read_trajectory,
    write_trajectory,
)
from lodestar_odom.geometry import Pose2, Trajectory


def random_traj(rng, n=20, t0=0.0):
    ts = t0 + np.cumsum(rng.uniform(0.5, 1.5, n))
    poses = [Pose2(*v) for v in zip(rng.uniform(-math.pi, math.pi, n), *rng.uniform(-50, 50, (2, n)))]
    return Trajectory(tuple(ts), tuple(poses))


def shifted(traj, dt):
    return Trajectory(tuple(t + dt for t in traj.timestamps), traj.poses)


def test_associate_identity_and_gating():
    tr = random_traj(np.random.default_rng(0))
    assert associate(tr, tr) == [(i, i) for i in range(len(tr))]
    assert associate(shifted(tr, 0.005), tr, max_dt=0.01) == [(i, i) for i in range(len(tr))]
    with pytest.raises(AssociationError):
        associate(shifted(tr, 0.02), tr, max_dt=0.01)
    with pytest.raises(ValueError):
        associate(tr, tr, max_dt=0.0)


def test_associate_uses_each_gt_pose_once():
    gt = Trajectory((0.0, 1.0), (Pose2(), Pose2()))
    est = Trajectory((0.99, 1.0, 1.01), (Pose2(),) * 3)
    pairs = associate(est, gt, max_dt=0.05)
    assert pairs == [(1, 1)] or sorted(j for _, j in pairs) == [1]
    assert len({j for _, j in pairs}) == len(pairs)


def test_ape_zero_for_equal_trajectories():
    tr = random_traj(np.random.default_rng(1))
    for mode in (FIRST_POSE, LEAST_SQUARES):
        r = compute_ape(tr, tr, mode)
        assert r.trans_rmse == pytest.approx(0.0, abs=1e-9)
        assert r.rot_rmse == pytest.approx(0.0, abs=1e-9)
        assert len(r.trans_errors) == len(tr)


def test_ape_hand_example():
    gt = Trajectory((0.0, 1.0), (Pose2(), Pose2(0.0, 10.0, 0.0)))
    est = Trajectory((0.0, 1.0), (Pose2(), Pose2(0.0, 10.0, 1.0)))
    r = compute_ape(est, gt, FIRST_POSE)
    assert r.trans_rmse == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert r.trans_max == pytest.approx(1.0)
    assert r.trans_mean == pytest.approx(0.5)
    assert r.summary() == "0.707/0.000"


def test_ape_rejects_unknown_alignment_and_single_pair():
    tr = random_traj(np.random.default_rng(2))
    with pytest.raises(ValueError):
        compute_ape(tr, tr, "umeyama")
    one = Trajectory(tr.timestamps[:1], tr.poses[:1])
    with pytest.raises(AssociationError):
        compute_ape(one, tr)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-math.pi, math.pi), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_least_squares_ape_is_rigid_invariant(seed, th, x, y):
    rng = np.random.default_rng(seed)
    gt = random_traj(rng)
    noisy = Trajectory(gt.timestamps, tuple(
        Pose2(p.theta + rng.normal(0, 0.02), p.x + rng.normal(0, 0.5), p.y + rng.normal(0, 0.5))
        for p in gt.poses))
    T = Pose2(th, x, y)
    moved = Trajectory(noisy.timestamps, tuple(T.compose(p) for p in noisy.poses))
    a = compute_ape(noisy, gt)
    b = compute_ape(moved, gt)
    assert b.trans_rmse == pytest.approx(a.trans_rmse, abs=1e-9)
    assert b.rot_rmse == pytest.approx(a.rot_rmse, abs=1e-7)


def test_rigidly_moved_trajectory_aligns_exactly():
    gt = random_traj(np.random.default_rng(3))
    T = Pose2(1.1, 30.0, -7.0)
    est = Trajectory(gt.timestamps, tuple(T.compose(p) for p in gt.poses))
    r = compute_ape(est, gt, LEAST_SQUARES)
    assert r.trans_rmse < 1e-6
    assert r.rot_rmse < 1e-6
    assert np.allclose(r.alignment.compose(T).as_tuple(), (0, 0, 0), atol=1e-9)


def test_rot_error_matches_across_modes_when_alignment_heading_agrees():
    rng = np.random.default_rng(4)
    gt = random_traj(rng)
    # exact positions and first pose: both alignments are the identity
    est = Trajectory(gt.timestamps, (gt.poses[0],) + tuple(
        Pose2(p.theta + rng.normal(0, 0.05), p.x, p.y) for p in gt.poses[1:]))
    a = compute_ape(est, gt, FIRST_POSE)
    b = compute_ape(est, gt, LEAST_SQUARES)
    assert a.alignment.theta == pytest.approx(b.alignment.theta, abs=1e-12)
    assert a.rot_rmse > 0
    assert a.rot_rmse == pytest.approx(b.rot_rmse, abs=1e-9)


def test_fit_rigid_recovers_transform():
    rng = np.random.default_rng(5)
    src = rng.normal(size=(30, 2)) * 20
    T = Pose2(-2.0, 4.0, 9.0)
    got = fit_rigid_2d(src, T.apply(src))
    assert np.allclose(got.as_tuple(), T.as_tuple(), atol=1e-9)


def test_series_csv():
    tr = random_traj(np.random.default_rng(6), n=5)
    text = ape_series_csv(compute_ape(tr, tr))
    lines = text.splitlines()
    assert lines[0] == "timestamp,trans_error_m,rot_error_deg"
    assert len(lines) == 6


def test_trajectory_roundtrip(tmp_path):
    tr = random_traj(np.random.default_rng(7))
    tr = Trajectory(tr.timestamps, tuple(Pose2(*np.round(p.as_tuple(), 9)) for p in tr.poses))
    tr = Trajectory(tuple(round(t, 9) for t in tr.timestamps), tr.poses)
    write_trajectory(tmp_path / "t.txt", tr)
    back = read_trajectory(tmp_path / "t.txt")
    assert back.timestamps == tr.timestamps
    for a, b in zip(back.poses, tr.poses):
        assert np.allclose(a.as_tuple(), b.as_tuple(), atol=1e-12)
    assert format_trajectory(back) == (tmp_path / "t.txt").read_text()


def test_empty_trajectory_file(tmp_path):
    write_trajectory(tmp_path / "e.txt", Trajectory())
    assert (tmp_path / "e.txt").read_text() == ""
    assert len(read_trajectory(tmp_path / "e.txt")) == 0


def test_malformed_lines_name_the_line():
    with pytest.raises(TrajectoryFormatError, match="line 2"):
        parse_trajectory("0 0 0 0\n1 2 3\n")
    with pytest.raises(TrajectoryFormatError, match="line 1"):
        parse_trajectory("0 a 0 0\n")
    with pytest.raises(TrajectoryFormatError, match="line 3"):
        parse_trajectory("# header\n1 0 0 0\n0.5 0 0 0\n")


def test_quaternion_lines_are_projected():
    yaw = 0.7
    text = f"0.0 1 2 5 0 0 {math.sin(yaw / 2)} {math.cos(yaw / 2)}\n1.0 3 4 5 0 0 0 1\n"
    tr = parse_trajectory(text)
    assert tr.poses[0] == Pose2(yaw, 1.0, 2.0)
    assert tr.poses[1].theta == 0.0
