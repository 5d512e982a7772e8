import numpy as np
import pytest

from blockassembly.blocks import library_index, standard_library, support_offset
from blockassembly.calibration import (
    PoseError,
    SqueezeMissedError,
    UnstableSettleError,
    calibrate,
    decompose_error,
    flat_orientation,
    orthogonal_squeeze,
    plane_settle,
    recompose,
)
from blockassembly.collision import GripperModel
from blockassembly.geometry import Pose, compose, rot_x, rot_y, rot_z

LIB = library_index(standard_library())
GRIPPER = GripperModel(np.array([0.0075, 0.0125, 0.025]), 0.140)


def flush_pose(model_id: str, x=0.0, y=0.0, yaw=0.0, face=np.eye(3)) -> Pose:
    model = LIB[model_id]
    rotation = rot_z(yaw) @ face
    z = support_offset(model, rotation)
    return Pose(rotation, np.array([x, y, z]))


def test_decompose_zero_error():
    p = flush_pose("cube_60", 0.1, -0.05, 0.3)
    err = decompose_error(p, p)
    assert np.allclose(err.rot_xyz, 0.0)
    assert np.allclose(err.trans_xyz, 0.0)


def test_decompose_pure_translation():
    est = flush_pose("cube_60")
    true = Pose(est.rotation, est.translation + est.rotation @ np.array([0.001, 0, 0]))
    err = decompose_error(est, true)
    assert np.allclose(err.rot_xyz, 0.0, atol=1e-12)
    assert np.allclose(err.trans_xyz, [0.001, 0.0, 0.0], atol=1e-12)


def test_decompose_recompose_round_trip():
    rng = np.random.default_rng(40)
    for _ in range(1000):
        est = Pose(
            rot_z(rng.uniform(-np.pi, np.pi)) @ rot_y(rng.uniform(-0.1, 0.1)),
            rng.uniform(-0.3, 0.3, size=3),
        )
        small = Pose(
            rot_z(rng.uniform(-0.15, 0.15))
            @ rot_y(rng.uniform(-0.1, 0.1))
            @ rot_x(rng.uniform(-0.1, 0.1)),
            rng.uniform(-0.01, 0.01, size=3),
        )
        true = compose(est, small)
        err = decompose_error(est, true)
        back = recompose(est, err)
        assert np.abs(back.rotation - true.rotation).max() < 1e-9
        assert np.abs(back.translation - true.translation).max() < 1e-9


def test_decompose_warns_outside_small_angle_regime():
    est = Pose.identity()
    true = Pose(rot_x(0.5), np.zeros(3))
    with pytest.warns(UserWarning, match="small-angle"):
        decompose_error(est, true)


def test_error_component_views():
    err = PoseError(np.array([0.01, -0.03, 0.02]), np.array([0.001, -0.004, 0.002]))
    assert err.max_abs_rotation == pytest.approx(0.03)
    assert err.max_abs_translation == pytest.approx(0.004)


def test_settle_leaves_flush_pose_unchanged():
    p = flush_pose("post_40x40x80", 0.05, 0.02, 1.1)
    settled = plane_settle(p, 0.0, LIB["post_40x40x80"])
    assert settled.almost_equal(p, tol=1e-12)


def test_settle_small_roll():
    # 2 degree roll: flush again with identical x, y, yaw
    model = LIB["cube_60"]
    yaw = 0.7
    tilted = Pose(
        rot_z(yaw) @ rot_x(np.radians(2.0)),
        np.array([0.1, 0.2, support_offset(model, rot_z(yaw)) + 0.001]),
    )
    settled = plane_settle(tilted, 0.0, model)
    assert np.allclose(settled.rotation, rot_z(yaw), atol=1e-12)
    assert settled.translation[0] == pytest.approx(0.1)
    assert settled.translation[1] == pytest.approx(0.2)
    assert settled.translation[2] == pytest.approx(0.03)


def test_settle_corrects_height_offset():
    model = LIB["plate_80x80x30"]
    p = flush_pose("plate_80x80x30")
    floated = Pose(p.rotation, p.translation + np.array([0.0, 0.0, 0.0005]))
    settled = plane_settle(floated, 0.0, model)
    assert settled.translation[2] == pytest.approx(0.015, abs=1e-12)


def test_settle_respects_plane_height():
    model = LIB["cube_60"]
    p = flush_pose("cube_60")
    settled = plane_settle(p, 0.1, model)
    assert settled.translation[2] == pytest.approx(0.13)


def test_settle_preserves_yaw_for_side_faces():
    model = LIB["brick_40x80x120"]
    rotation = rot_z(0.4) @ rot_y(np.pi / 2) @ rot_z(0.05)  # lying on a side, slightly twisted
    p = Pose(rotation, np.array([0.0, 0.0, support_offset(model, rotation)]))
    settled = plane_settle(p, 0.0, model)
    _, yaw_before = flat_orientation(p.rotation)
    _, yaw_after = flat_orientation(settled.rotation)
    assert yaw_after == pytest.approx(yaw_before, abs=1e-12)
    assert np.allclose(p.translation[:2], settled.translation[:2])


def test_settle_rejects_large_tilt():
    model = LIB["cube_60"]
    p = Pose(rot_x(0.35), np.array([0.0, 0.0, 0.04]))
    with pytest.raises(UnstableSettleError, match="unstable settle"):
        plane_settle(p, 0.0, model)
    # tolerant mode snaps anyway
    settled = plane_settle(p, 0.0, model, strict=False)
    assert np.allclose(settled.rotation, np.eye(3), atol=1e-12)


def test_squeeze_exact_with_zero_noise():
    model = LIB["cube_60"]
    est = flush_pose("cube_60", 0.10, 0.20, 0.5)
    true = flush_pose("cube_60", 0.101, 0.20, 0.5 + np.radians(2.0))
    out = orthogonal_squeeze(true, est, model, GRIPPER)
    assert np.allclose(out.translation[:2], est.translation[:2], atol=1e-15)
    assert np.allclose(out.rotation, est.rotation, atol=1e-12)
    assert out.translation[2] == pytest.approx(true.translation[2])


def test_squeeze_identity_when_already_matching():
    model = LIB["cube_80"]
    p = flush_pose("cube_80", -0.05, 0.3, 1.2)
    out = orthogonal_squeeze(p, p, model, GRIPPER)
    assert out.almost_equal(p, tol=1e-12)


def test_squeeze_preserves_z_roll_pitch():
    # block lying on a side face: squeeze must not stand it up
    model = LIB["brick_40x80x120"]
    face = rot_y(np.pi / 2)
    est = flush_pose("brick_40x80x120", 0.0, 0.0, 0.3, face)
    true = flush_pose("brick_40x80x120", 0.004, -0.003, 0.32, face)
    out = orthogonal_squeeze(true, est, model, GRIPPER)
    up_est, yaw_est = flat_orientation(est.rotation)
    up_out, yaw_out = flat_orientation(out.rotation)
    up_true, _ = flat_orientation(true.rotation)
    assert str(up_out) == str(up_true)
    assert yaw_out == pytest.approx(yaw_est, abs=1e-12)
    assert out.translation[2] == pytest.approx(true.translation[2])


def test_squeeze_noise_bound():
    model = LIB["cube_60"]
    rng = np.random.default_rng(41)
    est = flush_pose("cube_60", 0.1, 0.1, 0.2)
    worst = 0.0
    for _ in range(1000):
        true = flush_pose(
            "cube_60", 0.1 + rng.uniform(-0.003, 0.003), 0.1 + rng.uniform(-0.003, 0.003), 0.2
        )
        out = orthogonal_squeeze(true, est, model, GRIPPER, actuation_noise=1e-4, rng=rng)
        worst = max(worst, np.abs(out.translation[:2] - est.translation[:2]).max())
    assert 0.0 < worst <= 1e-4


def test_squeeze_missed_beyond_capture():
    model = LIB["cube_80"]  # width 0.08, capture (0.14 - 0.08) / 2 = 0.03
    est = flush_pose("cube_80")
    true = flush_pose("cube_80", x=0.031)
    with pytest.raises(SqueezeMissedError, match="squeeze missed"):
        orthogonal_squeeze(true, est, model, GRIPPER)
    ok = orthogonal_squeeze(flush_pose("cube_80", x=0.029), est, model, GRIPPER)
    assert np.allclose(ok.translation[:2], est.translation[:2])


def test_calibrate_zeroes_all_six_components():
    model = LIB["cube_60"]
    rng = np.random.default_rng(42)
    for _ in range(200):
        est = flush_pose("cube_60", rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-3, 3))
        wobble = Pose(
            rot_z(rng.uniform(-0.1, 0.1)) @ rot_y(rng.uniform(-0.05, 0.05)) @ rot_x(rng.uniform(-0.05, 0.05)),
            rng.uniform(-0.005, 0.005, size=3),
        )
        true = compose(est, wobble)
        out = calibrate(true, est, model, 0.0, GRIPPER)
        est_flush = plane_settle(est, 0.0, model, strict=False)
        err = decompose_error(est_flush, out)
        assert err.max_abs_rotation < 1e-9
        assert err.max_abs_translation < 1e-9


def test_calibrate_idempotent():
    model = LIB["post_40x40x80"]
    est = flush_pose("post_40x40x80", 0.05, -0.08, 0.9)
    true = flush_pose("post_40x40x80", 0.052, -0.081, 0.93)
    once = calibrate(true, est, model, 0.0, GRIPPER)
    twice = calibrate(once, est, model, 0.0, GRIPPER)
    assert twice.almost_equal(once, tol=1e-12)


def test_calibrate_keeps_face_mismatch():
    # a grossly wrong estimate (wrong face up) cannot be fixed by squeezing:
    # in-plane alignment succeeds but the block stays on its actual face
    model = LIB["brick_40x80x120"]
    est = flush_pose("brick_40x80x120", 0.1, 0.0, 0.0)  # upright belief
    face = rot_y(np.pi / 2)
    true = flush_pose("brick_40x80x120", 0.1, 0.0, 0.0, face)  # actually on its side
    out = calibrate(true, est, model, 0.0, GRIPPER)
    up_out, _ = flat_orientation(out.rotation)
    up_true, _ = flat_orientation(true.rotation)
    assert str(up_out) == str(up_true)
    assert np.allclose(out.translation[:2], est.translation[:2])
