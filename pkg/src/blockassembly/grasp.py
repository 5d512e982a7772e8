"""Grasp candidates: 36 pre-defined gripper poses per block and their filtering.

Six face approaches, two orthogonal closure planes each, three positions per
plane (centered plus two offsets along the remaining free axis). The grasp
frame follows the shared convention: local x closes, local z approaches and
points at the object, so the gripper's z axis is anti-parallel to the
approached face normal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .blocks import BlockModel, extent_along
from .collision import GripperModel, Obb, gripper_obbs, scene_collides
from .geometry import SIGNED_AXES, Pose, SignedAxis, compose, reference_axis

OFFSET_FRACTION = 0.25
OPENING_CLEARANCE = 0.004

ReachPredicate = Callable[[Pose], bool]


@dataclass(frozen=True)
class GraspCandidate:
    approach: SignedAxis  # outward normal of the approached face, object frame
    closure_axis: int  # object axis index the fingers close along
    offset_index: int  # -1, 0, +1 along the free axis
    gripper_pose_obj: Pose  # gripper frame in the object frame

    def world_pose(self, block_pose: Pose) -> Pose:
        return compose(block_pose, self.gripper_pose_obj)


def enumerate_candidates(model: BlockModel, offset_distance: float | None = None) -> list[GraspCandidate]:
    """All 36 grasp candidates for a block.

    offset_distance of None picks 0.25x the block extent along each free axis;
    an explicit value (meters, >= 0) applies uniformly.
    """
    if offset_distance is not None and offset_distance < 0:
        raise ValueError("offset_distance must be nonnegative")
    out = []
    for approach in SIGNED_AXES:
        a_vec = approach.vector
        for closure_axis in range(3):
            if closure_axis == approach.axis:
                continue
            c_vec = np.zeros(3)
            c_vec[closure_axis] = 1.0
            f_vec = np.cross(a_vec, c_vec)  # free axis: offsets slide along it
            rotation = np.column_stack([c_vec, np.cross(-a_vec, c_vec), -a_vec])
            if offset_distance is None:
                dist = OFFSET_FRACTION * extent_along(model, np.eye(3), f_vec)
            else:
                dist = offset_distance
            for offset_index in (-1, 0, 1):
                out.append(
                    GraspCandidate(
                        approach=approach,
                        closure_axis=closure_axis,
                        offset_index=offset_index,
                        gripper_pose_obj=Pose(rotation, offset_index * dist * f_vec),
                    )
                )
    assert len(out) == 36
    return out


def grasp_opening(model: BlockModel, candidate: GraspCandidate, gripper: GripperModel) -> float | None:
    """Pre-close opening for this candidate, or None when the block is too wide."""
    c_vec = np.zeros(3)
    c_vec[candidate.closure_axis] = 1.0
    width = extent_along(model, np.eye(3), c_vec)
    opening = width + OPENING_CLEARANCE
    if opening > gripper.max_opening:
        return None
    return opening


def box_reach_predicate(
    xy_half: float = 0.55,
    z_range: tuple[float, float] = (-0.05, 0.70),
    max_tilt_deg: float = 100.0,
) -> ReachPredicate:
    """Workspace model: a box of reachable positions plus a wrist tilt limit.

    Tilt is the angle between the gripper's approach axis and straight down;
    0 means a vertical top-down grasp, 90 a horizontal one.
    """
    cos_limit = np.cos(np.radians(max_tilt_deg))

    def reach(world_pose: Pose) -> bool:
        x, y, z = world_pose.translation
        if abs(x) > xy_half or abs(y) > xy_half or not z_range[0] <= z <= z_range[1]:
            return False
        down = -world_pose.rotation[2, 2]  # approach axis dotted with -e_z
        return down >= cos_limit

    return reach


def filter_feasible(
    model: BlockModel,
    block_pose: Pose,
    candidates: Sequence[GraspCandidate],
    obstacles: Sequence[Obb],
    gripper: GripperModel,
    reach: ReachPredicate | None = None,
    margin: float = 0.0005,
) -> list[GraspCandidate]:
    """Candidates whose fingers fit the block, clear the scene, and are reachable."""
    kept = []
    for cand in candidates:
        opening = grasp_opening(model, cand, gripper)
        if opening is None:
            continue
        world = cand.world_pose(block_pose)
        if reach is not None and not reach(world):
            continue
        fingers = gripper_obbs(gripper, world, opening)
        if obstacles and scene_collides(fingers, obstacles, margin):
            continue
        kept.append(cand)
    return kept


def select_pick_grasp(
    model: BlockModel,
    block_pose: Pose,
    obstacles: Sequence[Obb],
    gripper: GripperModel,
    reach: ReachPredicate | None = None,
    margin: float = 0.0005,
) -> GraspCandidate | None:
    """Best feasible descending grasp on the block's upward face.

    Candidates approaching the reference-axis face (so the gripper descends
    onto the block) are ranked center-first, then by how horizontal the world
    closure axis is. Returns None when nothing survives the filter.
    """
    ref = reference_axis(block_pose)
    candidates = [c for c in enumerate_candidates(model) if c.approach == ref]

    def rank(cand: GraspCandidate):
        world = cand.world_pose(block_pose)
        closure_vertical = abs(world.rotation[2, 0])  # world z component of closure axis
        return (abs(cand.offset_index), closure_vertical)

    candidates.sort(key=rank)
    feasible = filter_feasible(model, block_pose, candidates, obstacles, gripper, reach, margin)
    return feasible[0] if feasible else None
