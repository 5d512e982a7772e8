"""Reorientation planning and assembly compilation.

A block can reach any symmetry-equivalent target orientation with at most two
90-degree rotations about a horizontal base axis plus yaw alignment. The
planner picks the cheapest equivalent target, derives the exact rotation
actions, and compiles per-block step plans with grasp and insertion checks.

Horizontal-rotation semantics: the block is placed at the rotation workspace
with an extra pre-yaw, regrasped from the side, and turned about the base x
axis, so one action changes the orientation R to rot_x(angle) @ rot_z(pre_yaw) @ R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .blocks import BlockInstance, BlockModel, block_obbs, support_offset
from .calibration import plane_settle
from .collision import Obb, obb_penetration, sweep_intersects
from .config import AssemblyConfig
from .geometry import (
    Pose,
    SymmetryGroup,
    geodesic_angle,
    pose_to_lists,
    reference_axis,
    rot_x,
    rot_z,
    symmetry_equivalents,
)
from .grasp import GraspCandidate, box_reach_predicate, select_pick_grasp
from .structure import StructurePlan, resolve_world_poses

ROTATION_TOL = 1e-9


class PlanningError(RuntimeError):
    pass


@dataclass(frozen=True)
class PrimitiveAction:
    """One executable step of a block's plan.

    kind 'rotate': pre_yaw then a 90/180 degree turn about the base x axis at
    the rotation workspace. kind 'yaw': in-place yaw alignment. kind
    'calibrate': settle plus squeeze. kind 'insert': final approach onto the
    target pose. kind 'pick_place': plain transfer (reserved for traces).
    """

    kind: str
    angle: float = 0.0
    pre_yaw: float = 0.0
    axis: str = "x"
    target: Pose | None = None


@dataclass(frozen=True)
class BlockStepPlan:
    entry_index: int
    scene_index: int
    model_id: str
    actions: tuple[PrimitiveAction, ...]
    canonical_target: Pose
    grasp: GraspCandidate | None
    failure: str | None = None

    @property
    def rotation_count(self) -> int:
        return sum(1 for a in self.actions if a.kind == "rotate")


def rotations_needed(current: Pose, target: Pose) -> int:
    """0, 1, or 2 horizontal rotations by reference-axis bookkeeping."""
    u_now = reference_axis(current)
    u_goal = reference_axis(target)
    dot = int(round(float(u_now.vector @ u_goal.vector)))
    return {1: 0, 0: 1, -1: 2}[dot]


def _apply_rotation_actions(rotation: np.ndarray, actions: Sequence[PrimitiveAction]) -> np.ndarray:
    out = rotation
    for act in actions:
        if act.kind == "rotate":
            out = rot_x(math.radians(act.angle)) @ rot_z(act.pre_yaw) @ out
        elif act.kind == "yaw":
            out = rot_z(act.angle) @ out
    return out


def _orientation_actions(rel: np.ndarray, allow_flip: bool) -> list[PrimitiveAction]:
    """Rotation/yaw actions realizing the world-frame relative rotation `rel`.

    Tries the cheapest decomposition first and verifies each candidate by
    replay, falling through to the always-valid two-rotation solution.
    """
    candidates: list[list[PrimitiveAction]] = []
    r22 = rel[2, 2]

    if r22 > 1.0 - 1e-12:
        yaw = math.atan2(rel[1, 0], rel[0, 0])
        candidates.append([PrimitiveAction("yaw", angle=yaw)])

    if allow_flip and r22 < -1.0 + 1e-12:
        # rel = rot_z(yaw) @ rot_x(pi)
        q = rel @ rot_x(-math.pi)
        yaw = math.atan2(q[1, 0], q[0, 0])
        candidates.append(
            [
                PrimitiveAction("rotate", angle=180.0),
                PrimitiveAction("yaw", angle=yaw),
            ]
        )

    if abs(r22) < 1e-12:
        # rel = rot_z(alpha) @ rot_x(pi/2) @ rot_z(gamma)
        alpha = math.atan2(rel[0, 2], -rel[1, 2])
        gamma = math.atan2(rel[2, 0], rel[2, 1])
        candidates.append(
            [
                PrimitiveAction("rotate", angle=90.0, pre_yaw=gamma),
                PrimitiveAction("yaw", angle=alpha),
            ]
        )

    # generic: rel = rot_z(a) rot_x(90) rot_z(b) rot_x(90) rot_z(c), solved via
    # the identity rot_x(90) rot_z(b) rot_x(90) = rot_y(-b) rot_x(180):
    # rel @ rot_x(180) = rot_z(a) rot_y(-b) rot_z(-c), a z-y-z factorization
    q = rel @ rot_x(math.pi)
    sin_beta = math.hypot(q[0, 2], q[1, 2])
    if sin_beta < 1e-12:
        phi2 = 0.0 if q[2, 2] > 0 else math.pi
        phi3 = 0.0
        sign = 1.0 if q[2, 2] > 0 else -1.0
        phi1 = math.atan2(sign * q[1, 0], sign * q[0, 0])
    else:
        phi1 = math.atan2(q[1, 2], q[0, 2])
        phi2 = math.atan2(sin_beta, q[2, 2])
        phi3 = math.atan2(q[2, 1], -q[2, 0])
    candidates.append(
        [
            PrimitiveAction("rotate", angle=90.0, pre_yaw=-phi3),
            PrimitiveAction("rotate", angle=90.0, pre_yaw=-phi2),
            PrimitiveAction("yaw", angle=phi1),
        ]
    )

    for actions in candidates:
        replay = _apply_rotation_actions(np.eye(3), actions)
        if np.abs(replay - rel).max() < 1e-10:
            return actions
    raise PlanningError("no rotation decomposition reproduced the relative rotation")


def residual_yaw(current: Pose, target: Pose, allow_flip: bool = True) -> float:
    """The final yaw-alignment angle the reorientation would need."""
    rel = target.rotation @ current.rotation.T
    actions = _orientation_actions(rel, allow_flip)
    return actions[-1].angle if actions[-1].kind == "yaw" else 0.0


def choose_canonical_target(estimated: Pose, target: Pose, sym: SymmetryGroup, allow_flip: bool = True) -> Pose:
    """The symmetry-equivalent of `target` cheapest to reach from `estimated`.

    Lexicographic cost: horizontal rotation count, then the final yaw
    magnitude, then geodesic distance; exact ties keep symmetry list order.
    """
    best = None
    best_cost = None
    for eq in symmetry_equivalents(target, sym):
        cost = (
            rotations_needed(estimated, eq),
            abs(residual_yaw(estimated, eq, allow_flip)),
            geodesic_angle(estimated.rotation, eq.rotation),
        )
        if best_cost is None or cost < best_cost:
            best, best_cost = eq, cost
    return best


def plan_reorientation(current: Pose, canonical_target: Pose, allow_flip: bool = True) -> list[PrimitiveAction]:
    """Horizontal rotations plus yaw taking current's orientation to the target's.

    Always at most two 'rotate' actions; replaying the actions on the current
    rotation reproduces the target rotation within 1e-9.
    """
    rel = canonical_target.rotation @ current.rotation.T
    actions = _orientation_actions(rel, allow_flip)
    replay = _apply_rotation_actions(current.rotation, actions)
    if np.abs(replay - canonical_target.rotation).max() > ROTATION_TOL:
        raise PlanningError("reorientation replay mismatch")
    return actions


def insert_corridor_clear(
    model: BlockModel,
    target: Pose,
    placed_obbs: Sequence[Obb],
    approach_distance: float,
    margin: float,
) -> bool:
    """Can the block descend onto its target along the reference-axis line?

    The swept poses stop 2x margin short of the seat: the final flush contact
    is legitimate and is judged by penetration elsewhere, not by margin.
    """
    direction = target.rotation @ reference_axis(target).vector
    stops = np.linspace(approach_distance, 2.0 * margin, 12)
    offsets = stops[:, None] * direction[None, :]
    for obb in block_obbs(model, target):
        for obstacle in placed_obbs:
            if sweep_intersects(obb, obstacle, offsets, margin):
                return False
            # the seat itself: flush contact is fine, overlap is not
            if obb_penetration(obb, obstacle) > 1e-6:
                return False
    return True


def candidate_blocks(
    entry_model: str,
    scene: Sequence[BlockInstance],
    estimates: Sequence[Pose],
    target: Pose,
    taken: set[int],
) -> list[int]:
    """Available same-model scene blocks, nearest to the target first."""
    order = []
    for i, inst in enumerate(scene):
        if i in taken or inst.model_id != entry_model:
            continue
        order.append((float(np.linalg.norm(estimates[i].translation - target.translation)), i))
    order.sort()
    return [i for _, i in order]


def compile_assembly(
    plan: StructurePlan,
    scene: Sequence[BlockInstance],
    estimates: Sequence[Pose],
    library: dict[str, BlockModel],
    config: AssemblyConfig,
    strict: bool = True,
) -> list[BlockStepPlan]:
    """Per-block step plans for assembling `plan` from the perceived scene.

    Estimates are plane-projected first: every scene block is assumed to rest
    on the work plane, so a noisy estimate is snapped flush before planning.
    With strict=True any ungraspable block or blocked insertion raises; the
    simulation harness instead compiles with strict=False and carries the
    failure on the step plan.
    """
    if len(scene) != len(estimates):
        raise ValueError("one estimate per scene block required")
    for inst in scene:
        if inst.model_id not in library:
            raise PlanningError(f"unknown model in scene: {inst.model_id!r}")

    work = [
        plane_settle(est, 0.0, library[inst.model_id], strict=False)
        for inst, est in zip(scene, estimates)
    ]
    anchor_model = library[plan.entries[plan.sequence[0]].model_id]
    anchor = config.anchor_pose(support_offset(anchor_model, rot_z(config.anchor_yaw)))
    targets = resolve_world_poses(plan, anchor)

    gripper = config.gripper()
    reach = box_reach_predicate(
        config.reach_xy_half,
        (config.reach_z_min, config.reach_z_max),
        config.max_tilt_deg,
    )

    steps: list[BlockStepPlan] = []
    placed_obbs: list[Obb] = []
    taken: set[int] = set()
    for entry_index in plan.sequence:
        entry = plan.entries[entry_index]
        candidates = candidate_blocks(entry.model_id, scene, work, targets[entry_index], taken)
        if not candidates:
            raise PlanningError(
                f"no available block of model {entry.model_id!r} for entry {entry_index}"
            )

        # nearest block whose pick grasp clears the not-yet-moved neighbours;
        # blocks wedged behind later picks get deferred to a later entry
        scene_index, grasp = candidates[0], None
        for cand in candidates:
            obstacles = list(placed_obbs)
            for i, inst in enumerate(scene):
                if i == cand or i in taken:
                    continue
                obstacles.extend(block_obbs(library[inst.model_id], work[i]))
            cand_grasp = select_pick_grasp(
                library[entry.model_id], work[cand], obstacles, gripper, reach, config.collision_margin
            )
            if cand_grasp is not None:
                scene_index, grasp = cand, cand_grasp
                break

        model = library[scene[scene_index].model_id]
        current = work[scene_index]
        canonical = choose_canonical_target(current, targets[entry_index], model.symmetry, config.allow_flip)

        failure = None if grasp is not None else "ungraspable"
        actions = plan_reorientation(current, canonical, config.allow_flip)
        if actions[-1].kind == "yaw" and abs(actions[-1].angle) <= 1e-12 and len(actions) == 1:
            actions = []

        if failure is None and not insert_corridor_clear(
            model, canonical, placed_obbs, config.approach_distance, config.collision_margin
        ):
            failure = "blocked insertion"

        if config.calibration_enabled:
            actions = [*actions, PrimitiveAction("calibrate")]
        actions = [*actions, PrimitiveAction("insert", target=canonical)]

        if failure is not None and strict:
            raise PlanningError(
                f"{failure}: entry {entry_index} ({model.id}, scene block {scene_index})"
            )

        steps.append(
            BlockStepPlan(
                entry_index=entry_index,
                scene_index=scene_index,
                model_id=model.id,
                actions=tuple(actions),
                canonical_target=canonical,
                grasp=grasp,
                failure=failure,
            )
        )
        placed_obbs.extend(block_obbs(model, canonical))
        taken.add(scene_index)
    return steps


def step_plan_to_dict(step: BlockStepPlan) -> dict:
    actions = []
    for a in step.actions:
        rec: dict = {"kind": a.kind}
        if a.kind == "rotate":
            rec.update(axis=a.axis, angle=a.angle, pre_yaw=a.pre_yaw)
        elif a.kind == "yaw":
            rec.update(angle=a.angle)
        elif a.kind == "insert":
            rec.update(pose_to_lists(a.target))
        actions.append(rec)
    out = {
        "entry": step.entry_index,
        "scene_block": step.scene_index,
        "model": step.model_id,
        "target": pose_to_lists(step.canonical_target),
        "actions": actions,
    }
    if step.grasp is not None:
        out["grasp"] = {
            "approach": str(step.grasp.approach),
            "closure_axis": int(step.grasp.closure_axis),
            "offset_index": int(step.grasp.offset_index),
        }
    if step.failure is not None:
        out["failure"] = step.failure
    return out
