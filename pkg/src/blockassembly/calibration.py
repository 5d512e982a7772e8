"""Plane-settle and squeeze calibration: the error model that lets assembly
succeed from imperfect pose estimates.

Releasing a block onto the work plane zeroes its roll, pitch, and height
error. Two orthogonal gripper squeezes toward the estimated pose then zero
the in-plane translation and yaw error. What remains afterwards is only the
gripper's own actuation repeatability.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .blocks import BlockModel, extent_along, support_offset
from .collision import GripperModel
from .geometry import (
    Pose,
    compose,
    geodesic_angle,
    invert,
    reference_axis,
    rot_x,
    rot_y,
    rot_z,
)

SMALL_ANGLE_LIMIT = 0.2  # radians

# rotation taking each signed object axis to world +z (face-up canonical)
_FACE_UP = {
    "+z": np.eye(3),
    "-z": rot_x(math.pi),
    "+x": rot_y(-math.pi / 2),
    "-x": rot_y(math.pi / 2),
    "+y": rot_x(math.pi / 2),
    "-y": rot_x(-math.pi / 2),
}


class UnstableSettleError(ValueError):
    pass


class SqueezeMissedError(ValueError):
    pass


@dataclass(frozen=True)
class PoseError:
    """Six-component error between an estimate and the true pose.

    rot_xyz holds the (roll, pitch, yaw) of the relative rotation factored as
    Rz(yaw) Ry(pitch) Rx(roll); trans_xyz is the relative translation. Both
    live in the estimated pose's frame.
    """

    rot_xyz: np.ndarray
    trans_xyz: np.ndarray

    @property
    def max_abs_rotation(self) -> float:
        return float(np.abs(self.rot_xyz).max())

    @property
    def max_abs_translation(self) -> float:
        return float(np.abs(self.trans_xyz).max())


def decompose_error(estimated: Pose, true: Pose) -> PoseError:
    """Per-axis rotation and translation error of `true` seen from `estimated`."""
    rel = compose(invert(estimated), true)
    angle = geodesic_angle(np.eye(3), rel.rotation)
    if angle >= SMALL_ANGLE_LIMIT:
        warnings.warn(
            f"pose error angle {angle:.3f} rad is outside the small-angle regime",
            stacklevel=2,
        )
    r = rel.rotation
    roll = math.atan2(r[2, 1], r[2, 2])
    pitch = math.atan2(-r[2, 0], math.hypot(r[0, 0], r[1, 0]))
    yaw = math.atan2(r[1, 0], r[0, 0])
    return PoseError(np.array([roll, pitch, yaw]), rel.translation.copy())


def recompose(estimated: Pose, error: PoseError) -> Pose:
    roll, pitch, yaw = error.rot_xyz
    rel = Pose(rot_z(yaw) @ rot_y(pitch) @ rot_x(roll), error.trans_xyz)
    return compose(estimated, rel)


def flat_orientation(rotation: np.ndarray) -> tuple[SignedAxis, float]:
    """The up-most object axis and the world yaw around it.

    Factors rotation = Rz(yaw) Ry(p) Rx(r) face_up(axis); for a flush pose
    p = r = 0 and the factorization is exact.
    """
    up = reference_axis(Pose(rotation, np.zeros(3)))
    w = rotation @ _FACE_UP[str(up)].T
    yaw = math.atan2(w[1, 0], w[0, 0])
    return up, yaw


def settle_rotation(rotation: np.ndarray) -> tuple[np.ndarray, float]:
    """Flush rotation with the same up face and world yaw, plus the tilt fixed."""
    up, yaw = flat_orientation(rotation)
    flush = rot_z(yaw) @ _FACE_UP[str(up)]
    tilt = geodesic_angle(flush, rotation)
    return flush, tilt


def plane_settle(
    true_pose: Pose,
    plane_height: float,
    model: BlockModel,
    strict: bool = True,
) -> Pose:
    """Pose after releasing the block onto the plane.

    The nearest face drops flush: roll and pitch vanish, the height becomes
    the resting height, and x, y, yaw stay exactly what they were. With
    strict=True a tilt beyond the small-angle regime raises instead of
    silently snapping a long way.
    """
    flush, tilt = settle_rotation(true_pose.rotation)
    if strict and tilt > SMALL_ANGLE_LIMIT:
        raise UnstableSettleError(
            f"unstable settle: tilt {tilt:.3f} rad exceeds {SMALL_ANGLE_LIMIT}"
        )
    z = plane_height + support_offset(model, flush)
    return Pose(flush, np.array([true_pose.translation[0], true_pose.translation[1], z]))


def squeeze_capture_range(model: BlockModel, rotation: np.ndarray, axis: np.ndarray, gripper: GripperModel) -> float:
    """Largest in-plane offset a squeeze along `axis` can still capture."""
    width = extent_along(model, rotation, axis)
    return max(0.0, (gripper.max_opening - width) / 2.0)


def orthogonal_squeeze(
    true_pose: Pose,
    estimated: Pose,
    model: BlockModel,
    gripper: GripperModel,
    actuation_noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Pose:
    """Pose after squeezing the block toward the estimate along two in-plane axes.

    Each squeeze closes flat jaws on the block, centering one in-plane
    translation component on the estimate and co-aligning yaw. z, roll and
    pitch are untouched: the block never leaves the plane.
    """
    _, est_yaw = flat_orientation(estimated.rotation)
    true_up, _ = flat_orientation(true_pose.rotation)

    # squeeze axes: the estimate's two in-plane object axes, in world coords
    offset = true_pose.translation - estimated.translation
    for k in range(3):
        axis = estimated.rotation[:, k].copy()
        axis[2] = 0.0
        norm = np.linalg.norm(axis)
        if norm < 1e-9:
            continue  # this object axis points up; squeeze along the other two
        axis /= norm
        err = abs(float(offset[:2] @ axis[:2]))
        capture = squeeze_capture_range(model, true_pose.rotation, axis, gripper)
        if err > capture:
            raise SqueezeMissedError(
                f"squeeze missed: in-plane error {err * 1000:.1f} mm exceeds capture "
                f"{capture * 1000:.1f} mm"
            )

    if rng is None or actuation_noise == 0.0:
        jitter_xy = np.zeros(2)
        jitter_yaw = 0.0
    else:
        jitter_xy = rng.uniform(-actuation_noise, actuation_noise, size=2)
        in_plane = max(
            extent_along(model, true_pose.rotation, np.array([1.0, 0, 0])),
            extent_along(model, true_pose.rotation, np.array([0, 1.0, 0])),
        )
        jitter_yaw = rng.uniform(-actuation_noise, actuation_noise) / (in_plane / 2.0)

    rotation = rot_z(est_yaw + jitter_yaw) @ _FACE_UP[str(true_up)]
    translation = np.array(
        [
            estimated.translation[0] + jitter_xy[0],
            estimated.translation[1] + jitter_xy[1],
            true_pose.translation[2],
        ]
    )
    return Pose(rotation, translation)


def calibrate(
    true_pose: Pose,
    estimated: Pose,
    model: BlockModel,
    plane_height: float,
    gripper: GripperModel,
    actuation_noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Pose:
    """Plane settle followed by the two orthogonal squeezes.

    Afterwards the block physically sits at the plane-projected estimate, up
    to actuation noise; the estimate becomes the pose of record.
    """
    settled = plane_settle(true_pose, plane_height, model, strict=False)
    target = plane_settle(estimated, plane_height, model, strict=False)
    return orthogonal_squeeze(settled, target, model, gripper, actuation_noise, rng)
