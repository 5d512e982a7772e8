"""Oriented-bounding-box collision tests.

Everything the planner needs is box-vs-box: the 15 separating-axis candidates
(3 + 3 face normals, 9 edge cross products) decide overlap exactly for a pair
of OBBs. No meshes, no swept volumes; paths are checked by sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import Pose

# Cross-product axes with norm below this are skipped (parallel edges).
DEGENERATE_AXIS_TOL = 1e-9


@dataclass(frozen=True)
class Obb:
    """Oriented box: world center, half extents along its own axes, rotation."""

    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.array(self.center, dtype=float).reshape(3))
        he = np.array(self.half_extents, dtype=float).reshape(3)
        if (he <= 0).any():
            raise ValueError("half extents must be positive")
        object.__setattr__(self, "half_extents", he)
        object.__setattr__(self, "rotation", np.array(self.rotation, dtype=float).reshape(3, 3))

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.half_extents))

    def corners(self) -> np.ndarray:
        """The 8 world-frame corner points, (8, 3)."""
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=float,
        )
        return (signs * self.half_extents) @ self.rotation.T + self.center

    def transformed(self, pose: Pose) -> "Obb":
        return Obb(
            pose.rotation @ self.center + pose.translation,
            self.half_extents,
            pose.rotation @ self.rotation,
        )

    def translated(self, offset: np.ndarray) -> "Obb":
        return Obb(self.center + np.asarray(offset, dtype=float), self.half_extents, self.rotation)

    def contains_points(self, points: np.ndarray, slack: float = 0.0) -> np.ndarray:
        """Boolean mask of world points inside the box (inflated by slack per side)."""
        local = (np.asarray(points) - self.center) @ self.rotation
        return (np.abs(local) <= self.half_extents + slack).all(axis=1)


def _separations(a: Obb, b: Obb, inflate: float) -> np.ndarray:
    """Signed separation along each valid SAT axis; positive means disjoint there.

    Computed in a's frame. Axes: a's three, b's three, and the nine pairwise
    edge cross products (skipped when nearly parallel).
    """
    r = a.rotation.T @ b.rotation
    t = a.rotation.T @ (b.center - a.center)
    ea = a.half_extents + inflate
    eb = b.half_extents + inflate
    abs_r = np.abs(r) + 1e-15  # guards the arithmetic, not the axis skipping

    seps = []
    # a's face axes
    for i in range(3):
        seps.append(abs(t[i]) - (ea[i] + eb @ abs_r[i]))
    # b's face axes
    for j in range(3):
        seps.append(abs(t @ r[:, j]) - (ea @ abs_r[:, j] + eb[j]))
    # edge-edge cross products, axis = a_i x b_j expressed in a's frame
    for i in range(3):
        for j in range(3):
            axis = np.cross(np.eye(3)[i], r[:, j])
            norm = np.linalg.norm(axis)
            if norm < DEGENERATE_AXIS_TOL:
                continue
            axis /= norm
            ra = ea @ np.abs(axis)
            rb = eb @ np.abs(axis @ r)
            seps.append(abs(t @ axis) - (ra + rb))
    return np.array(seps)


def obb_intersect(a: Obb, b: Obb, margin: float = 0.0) -> bool:
    """True when the boxes, each inflated by margin/2, overlap or touch."""
    # cheap sphere cull first
    inflate = margin / 2.0
    gap = np.linalg.norm(b.center - a.center) - (a.bounding_radius + b.bounding_radius + margin)
    if gap > 0:
        return False
    return not (_separations(a, b, inflate) > 0).any()


def obb_penetration(a: Obb, b: Obb) -> float:
    """Penetration depth: 0 when disjoint or touching, else the smallest
    overlap over the candidate axes. For box pairs the minimum-translation
    direction is always one of the 15 axes, so this is exact."""
    if np.linalg.norm(b.center - a.center) > a.bounding_radius + b.bounding_radius:
        return 0.0
    seps = _separations(a, b, 0.0)
    if (seps > 0).any():
        return 0.0
    return float(-seps.max())


def obb_separation(a: Obb, b: Obb) -> float:
    """Signed separation: the gap when disjoint (positive), minus the
    penetration depth when overlapping. Exact for box pairs."""
    return float(_separations(a, b, 0.0).max())


def sweep_intersects(
    moving: Obb,
    obstacle: Obb,
    offsets: np.ndarray,
    margin: float = 0.0,
) -> bool:
    """Does `moving`, translated by any of the given offsets, hit `obstacle`?

    Equivalent to checking obb_intersect at every offset; one call per
    translated pose is avoided by reusing the fixed rotation part.
    """
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    inflate = margin / 2.0
    r = moving.rotation.T @ obstacle.rotation
    ea = moving.half_extents + inflate
    eb = obstacle.half_extents + inflate
    abs_r = np.abs(r)

    # candidate axes as rows, expressed in moving's frame, plus projected radii
    axes = [np.eye(3)[i] for i in range(3)]
    radii = [ea[i] + eb @ abs_r[i] for i in range(3)]
    for j in range(3):
        axes.append(r[:, j])
        radii.append(ea @ abs_r[:, j] + eb[j])
    for i in range(3):
        for j in range(3):
            axis = np.cross(np.eye(3)[i], r[:, j])
            norm = np.linalg.norm(axis)
            if norm < DEGENERATE_AXIS_TOL:
                continue
            axis = axis / norm
            axes.append(axis)
            radii.append(ea @ np.abs(axis) + eb @ np.abs(axis @ r))

    axes_m = np.array(axes)
    radii_m = np.array(radii)
    deltas = (obstacle.center - moving.center) - offsets  # (K, 3) world
    t_locals = deltas @ moving.rotation  # into moving's frame
    proj = np.abs(t_locals @ axes_m.T)  # (K, n_axes)
    separated = (proj > radii_m).any(axis=1)
    return bool((~separated).any())


@dataclass(frozen=True)
class GripperModel:
    """Parallel-jaw gripper reduced to its two finger boxes.

    The grasp frame: x is the closure axis, z the approach axis pointing at
    the object. Finger boxes sit centered at +-opening/2 along x, so they stay
    disjoint whenever opening exceeds twice the finger half thickness.
    """

    finger_half_extents: np.ndarray
    max_opening: float

    def __post_init__(self) -> None:
        he = np.array(self.finger_half_extents, dtype=float).reshape(3)
        if (he <= 0).any():
            raise ValueError("finger half extents must be positive")
        object.__setattr__(self, "finger_half_extents", he)
        if self.max_opening <= 0:
            raise ValueError("max opening must be positive")


def gripper_obbs(gripper: GripperModel, grasp_pose: Pose, opening: float) -> tuple[Obb, Obb]:
    """Finger boxes in the world frame for a grasp at the given opening."""
    if not 0.0 <= opening <= gripper.max_opening:
        raise ValueError(f"opening {opening} outside [0, {gripper.max_opening}]")
    half = opening / 2.0
    fingers = []
    for side in (-1.0, 1.0):
        center_local = np.array([side * half, 0.0, 0.0])
        fingers.append(
            Obb(
                grasp_pose.rotation @ center_local + grasp_pose.translation,
                gripper.finger_half_extents,
                grasp_pose.rotation,
            )
        )
    return fingers[0], fingers[1]


def scene_collides(
    moving: Iterable[Obb],
    obstacles: Sequence[Obb],
    margin: float = 0.0,
) -> bool:
    """Any moving box against any obstacle box, at the given margin."""
    for m in moving:
        for o in obstacles:
            if obb_intersect(m, o, margin):
                return True
    return False
