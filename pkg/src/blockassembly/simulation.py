"""Seeded Monte Carlo harness for the full assembly pipeline.

Scenes are scattered on the work plane, a noisy perception oracle replaces
the camera stack, and compiled plans execute against the simulated true
state. The true pose is carried through every grasp as a rigid discrepancy:
the robot moves the pose it believes in, the block follows with its error
attached, and only plane contact and squeezes can shrink that error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .blocks import (
    BlockInstance,
    BlockModel,
    block_obbs,
    library_index,
    standard_library,
    support_offset,
)
from .calibration import SqueezeMissedError, calibrate, plane_settle
from .collision import obb_intersect, obb_penetration
from .config import AssemblyConfig
from .geometry import (
    Pose,
    compose,
    invert,
    random_rotation,
    reference_axis,
    rot_x,
    rot_y,
    rot_z,
    rotation_about,
)
from .metrics import ncm_ndeg
from .planner import PlanningError, compile_assembly
from .structure import StructurePlan, resolve_world_poses

# resting orientations: each face of a cuboid flat on the plane
FACE_UP_ROTATIONS = (
    np.eye(3),
    rot_x(math.pi),
    rot_y(-math.pi / 2),
    rot_y(math.pi / 2),
    rot_x(math.pi / 2),
    rot_x(-math.pi / 2),
)


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Perception error model: small Gaussian errors plus occasional gross ones.

    A gross error replaces the orientation with a uniformly random rotation
    and offsets the translation mostly in depth, up to 5 cm by default; it
    models a severely occluded or ambiguous view.
    """

    rot_sigma: float = 0.0
    trans_sigma: float = 0.0
    gross_error_prob: float = 0.0
    detection_prob: float = 1.0
    gross_xy_sigma: float = 0.005
    gross_z_min: float = 0.015
    gross_z_max: float = 0.05

    def __post_init__(self):
        if self.rot_sigma < 0 or self.trans_sigma < 0 or self.gross_xy_sigma < 0:
            raise ValueError("noise sigmas must be nonnegative")
        for p in (self.gross_error_prob, self.detection_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if not 0.0 <= self.gross_z_min <= self.gross_z_max:
            raise ValueError("gross depth range must satisfy 0 <= min <= max")


def noise_from_config(config: AssemblyConfig) -> NoiseModel:
    return NoiseModel(
        rot_sigma=config.rot_sigma,
        trans_sigma=config.trans_sigma,
        gross_error_prob=config.gross_error_prob,
        detection_prob=config.detection_prob,
        gross_xy_sigma=config.gross_xy_sigma,
        gross_z_min=config.gross_z_min,
        gross_z_max=config.gross_z_max,
    )


def _unit_vector(rng: np.random.Generator) -> np.ndarray:
    while True:
        v = rng.normal(size=3)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return v / norm


def _perturb(pose: Pose, noise: NoiseModel, rng: np.random.Generator) -> Pose:
    if rng.uniform() < noise.gross_error_prob:
        rotation = random_rotation(rng)
        offset = np.array(
            [
                rng.normal(0.0, noise.gross_xy_sigma),
                rng.normal(0.0, noise.gross_xy_sigma),
                (1.0 if rng.uniform() < 0.5 else -1.0)
                * rng.uniform(noise.gross_z_min, noise.gross_z_max),
            ]
        )
        return Pose(rotation, pose.translation + offset)
    axis = _unit_vector(rng)
    angle = abs(rng.normal(0.0, noise.rot_sigma))
    rotation = rotation_about(axis, angle) @ pose.rotation
    offset = rng.normal(0.0, noise.trans_sigma, size=3)
    return Pose(rotation, pose.translation + offset)


def perceive(
    scene: Sequence[BlockInstance],
    noise: NoiseModel,
    seed,
    camera: Pose | None = None,
) -> list[tuple[bool, Pose | None]]:
    """Detection flag and noisy pose estimate per scene block.

    With a camera pose given, noise is applied to the camera-frame pose and
    the estimate recomposed through the extrinsics, mirroring a camera-frame
    pose estimator; results are identical in distribution either way.
    """
    rng = np.random.default_rng(seed)
    out: list[tuple[bool, Pose | None]] = []
    for inst in scene:
        if rng.uniform() >= noise.detection_prob:
            out.append((False, None))
            continue
        true = inst.pose if camera is None else compose(invert(camera), inst.pose)
        estimate = _perturb(true, noise, rng)
        if camera is not None:
            estimate = compose(camera, estimate)
        out.append((True, estimate))
    return out


def generate_scene(
    models: Sequence[BlockModel],
    bounds: tuple[float, float, float, float],
    seed,
    clearance: float = 0.002,
    max_attempts: int = 1000,
) -> list[BlockInstance]:
    """Blocks dropped flat at uniform positions, faces, and yaws, kept apart.

    `bounds` is (x_min, x_max, y_min, y_max) for the block centers. Placement
    is rejection-sampled until every pair clears `clearance`.
    """
    x_min, x_max, y_min, y_max = bounds
    if x_min >= x_max or y_min >= y_max:
        raise ValueError("empty scene bounds")
    rng = np.random.default_rng(seed)
    placed: list[BlockInstance] = []
    placed_obbs = []
    for model in models:
        for _ in range(max_attempts):
            face = FACE_UP_ROTATIONS[rng.integers(6)]
            rotation = rot_z(rng.uniform(-math.pi, math.pi)) @ face
            center = np.array(
                [
                    rng.uniform(x_min, x_max),
                    rng.uniform(y_min, y_max),
                    support_offset(model, rotation),
                ]
            )
            pose = Pose(rotation, center)
            obbs = block_obbs(model, pose)
            if any(
                obb_intersect(a, b, margin=clearance) for a in obbs for b in placed_obbs
            ):
                continue
            placed.append(BlockInstance(model.id, pose))
            placed_obbs.extend(obbs)
            break
        else:
            raise SimulationError("scene too crowded")
    return placed


@dataclass(frozen=True)
class StepRecord:
    entry_index: int
    model_id: str
    scene_index: int
    outcome: str
    rotations: int
    calibrated: bool
    gap: float | None
    depth: float | None
    success: bool
    final_pose: Pose | None


@dataclass(frozen=True)
class TrialReport:
    structure: str
    seed: int
    block_count: int
    detected: int
    steps: tuple[StepRecord, ...]
    success: bool
    wrecked: bool


def _insertion_gap(model: BlockModel, final: Pose, intended: Pose) -> float:
    """Mean in-plane surface displacement, best over the symmetry group."""
    axis = intended.rotation @ reference_axis(intended).vector
    intended_points = intended.transform_points(model.surface_points)
    best = np.inf
    for sym in model.symmetry.rotations:
        posed = Pose(final.rotation @ sym, final.translation)
        disp = posed.transform_points(model.surface_points) - intended_points
        disp -= np.outer(disp @ axis, axis)
        best = min(best, float(np.linalg.norm(disp, axis=1).mean()))
    return best


def _collision_depth(moving_obbs, placed_obbs) -> float:
    depth = 0.0
    for obb in moving_obbs:
        depth = max(depth, max(0.0, -float(obb.corners()[:, 2].min())))
        for other in placed_obbs:
            depth = max(depth, obb_penetration(obb, other))
    return depth


def _staged(believed: Pose, rotation: np.ndarray, model: BlockModel, config: AssemblyConfig) -> Pose:
    x, y = config.workspace_xy
    return Pose(rotation, np.array([x, y, support_offset(model, rotation)]))


def run_trial(
    plan: StructurePlan,
    scene: Sequence[BlockInstance],
    noise: NoiseModel,
    config: AssemblyConfig,
    seed: int,
    library: dict[str, BlockModel] | None = None,
) -> TrialReport:
    """One compiled-and-executed assembly attempt against simulated truth.

    Estimates come from `perceive`; the executed true state diverges from the
    believed state by the grasp-time discrepancy, shrinks under settling and
    squeezing, and is judged at insertion by in-plane gap and collision depth
    against the already-placed blocks. A collision deeper than the wreck
    depth fails every remaining step.
    """
    if library is None:
        library = library_index(standard_library())
    perception = perceive(scene, noise, [seed, 0], camera=config.camera_pose())
    detected_indices = [i for i, (hit, _) in enumerate(perception) if hit]
    estimates = [perception[i][1] for i in detected_indices]
    visible = [scene[i] for i in detected_indices]

    failed_all = None
    try:
        steps = compile_assembly(plan, visible, estimates, library, config, strict=False)
    except PlanningError as exc:
        failed_all = str(exc)
        steps = []

    if failed_all is not None:
        records = tuple(
            StepRecord(i, plan.entries[i].model_id, -1, "unassigned", 0, False, None, None, False, None)
            for i in plan.sequence
        )
        return TrialReport(plan.name, seed, len(scene), len(detected_indices), records, False, False)

    rng = np.random.default_rng([seed, 1])
    gripper = config.gripper()
    true_poses = {i: inst.pose for i, inst in enumerate(scene)}
    placed_obbs = []
    records: list[StepRecord] = []
    wrecked = False
    for step in steps:
        scene_index = detected_indices[step.scene_index]
        model = library[step.model_id]
        rotations = step.rotation_count
        if wrecked:
            records.append(
                StepRecord(step.entry_index, step.model_id, scene_index, "wrecked",
                           rotations, False, None, None, False, None)
            )
            continue
        if step.failure is not None:
            records.append(
                StepRecord(step.entry_index, step.model_id, scene_index, step.failure,
                           rotations, False, None, None, False, None)
            )
            continue

        believed = plane_settle(estimates[step.scene_index], 0.0, model, strict=False)
        true = true_poses[scene_index]
        in_plane = float(np.linalg.norm((true.translation - believed.translation)[:2]))
        if in_plane > config.capture_fraction * model.diameter:
            records.append(
                StepRecord(step.entry_index, step.model_id, scene_index, "grasp",
                           rotations, False, None, None, False, None)
            )
            continue

        discrepancy = compose(invert(believed), true)
        calibrated = False
        for action in step.actions:
            if action.kind == "rotate":
                # place with the pre-yaw applied, settle, then turn and settle again
                believed = _staged(believed, rot_z(action.pre_yaw) @ believed.rotation, model, config)
                true = plane_settle(compose(believed, discrepancy), 0.0, model, strict=False)
                discrepancy = compose(invert(believed), true)
                turn = rot_x(math.radians(action.angle)) @ believed.rotation
                believed = _staged(believed, turn, model, config)
                true = plane_settle(compose(believed, discrepancy), 0.0, model, strict=False)
                discrepancy = compose(invert(believed), true)
            elif action.kind == "yaw":
                believed = Pose(rot_z(action.angle) @ believed.rotation, believed.translation)
            elif action.kind == "calibrate":
                true = compose(believed, discrepancy)
                try:
                    true = calibrate(true, believed, model, 0.0, gripper,
                                     config.actuation_noise, rng)
                    calibrated = True
                except SqueezeMissedError:
                    true = plane_settle(true, 0.0, model, strict=False)
                discrepancy = compose(invert(believed), true)
            elif action.kind == "insert":
                believed = step.canonical_target

        final = compose(believed, discrepancy)
        true_poses[scene_index] = final
        gap = _insertion_gap(model, final, step.canonical_target)
        final_obbs = block_obbs(model, final)
        depth = _collision_depth(final_obbs, placed_obbs)
        placed_obbs.extend(final_obbs)
        success = gap < config.assembly_tolerance and depth < config.assembly_tolerance
        outcome = "ok" if success else ("collision" if depth >= config.assembly_tolerance else "gap")
        if depth > config.wreck_depth:
            wrecked = True
        records.append(
            StepRecord(step.entry_index, step.model_id, scene_index, outcome,
                       rotations, calibrated, gap, depth, success, final)
        )

    success = all(r.success for r in records) and len(records) == len(plan.entries)
    return TrialReport(plan.name, seed, len(scene), len(detected_indices), tuple(records), success, wrecked)


def scene_bounds(config: AssemblyConfig) -> tuple[float, float, float, float]:
    x, y = config.workspace_xy
    h = config.scene_half_extent
    return (x - h, x + h, y - h, y + h)


@dataclass(frozen=True)
class StructureStats:
    structure: str
    blocks: int
    trials: int
    detection_rate: float
    step_rate: float
    trial_rate: float


@dataclass(frozen=True)
class BatchStats:
    rows: tuple[StructureStats, ...]
    mean: StructureStats
    reports: tuple[TrialReport, ...]

    def to_csv(self) -> str:
        lines = ["structure,blocks,trials,detection,steps,trials_ok"]
        for row in (*self.rows, self.mean):
            lines.append(
                f"{row.structure},{row.blocks},{row.trials},"
                f"{row.detection_rate:.4f},{row.step_rate:.4f},{row.trial_rate:.4f}"
            )
        return "\n".join(lines) + "\n"


def _structure_stats(plan_name: str, blocks: int, reports: Sequence[TrialReport]) -> StructureStats:
    detected = sum(r.detected for r in reports)
    total = sum(r.block_count for r in reports)
    steps_ok = sum(sum(1 for s in r.steps if s.success) for r in reports)
    steps_all = sum(len(r.steps) for r in reports)
    trials_ok = sum(1 for r in reports if r.success)
    return StructureStats(
        structure=plan_name,
        blocks=blocks,
        trials=len(reports),
        detection_rate=detected / total if total else 0.0,
        step_rate=steps_ok / steps_all if steps_all else 0.0,
        trial_rate=trials_ok / len(reports) if reports else 0.0,
    )


def _seeded_trial(task) -> TrialReport:
    plan, seed, noise, config, library = task
    models = [library[e.model_id] for e in plan.entries]
    scene = generate_scene(models, scene_bounds(config), [seed, 2],
                           config.scene_clearance, config.scene_max_attempts)
    return run_trial(plan, scene, noise, config, seed, library)


def run_batch(
    plans: Sequence[StructurePlan],
    n_trials: int,
    noise: NoiseModel,
    config: AssemblyConfig,
    base_seed: int = 0,
    library: dict[str, BlockModel] | None = None,
    jobs: int = 1,
) -> BatchStats:
    """n_trials fresh scene+trial runs per structure, seeds base..base+n-1.

    Trials are independent, so jobs > 1 fans them out over processes; results
    are aggregated in seed order either way and stay bit-identical.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if library is None:
        library = library_index(standard_library())
    tasks = [
        (plan, base_seed + k, noise, config, library)
        for plan in plans
        for k in range(n_trials)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports_flat = list(pool.map(_seeded_trial, tasks, chunksize=4))
    else:
        reports_flat = [_seeded_trial(t) for t in tasks]

    rows = []
    all_reports: list[TrialReport] = []
    for i, plan in enumerate(plans):
        reports = reports_flat[i * n_trials : (i + 1) * n_trials]
        rows.append(_structure_stats(plan.name, len(plan.entries), reports))
        all_reports.extend(reports)
    mean = StructureStats(
        structure="mean",
        blocks=sum(r.blocks for r in rows),
        trials=sum(r.trials for r in rows),
        detection_rate=float(np.mean([r.detection_rate for r in rows])),
        step_rate=float(np.mean([r.step_rate for r in rows])),
        trial_rate=float(np.mean([r.trial_rate for r in rows])),
    )
    return BatchStats(tuple(rows), mean, tuple(all_reports))


def step_record_to_dict(record: StepRecord) -> dict:
    from .geometry import pose_to_lists

    out = {
        "entry": record.entry_index,
        "model": record.model_id,
        "scene_block": record.scene_index,
        "outcome": record.outcome,
        "rotations": record.rotations,
        "calibrated": record.calibrated,
        "gap": record.gap,
        "depth": record.depth,
        "success": record.success,
    }
    if record.final_pose is not None:
        out["final_pose"] = pose_to_lists(record.final_pose)
    return out


def trial_report_to_dict(report: TrialReport) -> dict:
    return {
        "structure": report.structure,
        "seed": report.seed,
        "blocks": report.block_count,
        "detected": report.detected,
        "success": report.success,
        "wrecked": report.wrecked,
        "steps": [step_record_to_dict(s) for s in report.steps],
    }


def batch_to_dict(stats: BatchStats) -> dict:
    def row(r: StructureStats) -> dict:
        return {
            "structure": r.structure,
            "blocks": r.blocks,
            "trials": r.trials,
            "detection_rate": r.detection_rate,
            "step_rate": r.step_rate,
            "trial_rate": r.trial_rate,
        }

    return {
        "format_version": 1,
        "rows": [row(r) for r in stats.rows],
        "mean": row(stats.mean),
        "reports": [trial_report_to_dict(r) for r in stats.reports],
    }


def sample_recalls(
    models: Sequence[BlockModel],
    noise: NoiseModel,
    n_samples: int,
    seed,
    half_extent: float = 0.15,
) -> tuple[float, float]:
    """(2 cm recall, 5deg5cm recall) of the perception oracle over random poses.

    Each sample draws from its own seed substream, so changing one noise
    parameter never reshuffles the randomness of other samples; recall is
    then exactly monotone in each parameter under a fixed seed.
    """
    streams = np.random.SeedSequence(seed).spawn(n_samples)
    hits_2cm = 0
    hits_5d5c = 0
    for k in range(n_samples):
        rng = np.random.default_rng(streams[k])
        model = models[k % len(models)]
        face = FACE_UP_ROTATIONS[rng.integers(6)]
        rotation = rot_z(rng.uniform(-math.pi, math.pi)) @ face
        center = np.array(
            [
                rng.uniform(-half_extent, half_extent),
                rng.uniform(-half_extent, half_extent),
                support_offset(model, rotation),
            ]
        )
        true = Pose(rotation, center)
        estimate = _perturb(true, noise, rng)
        if float(np.linalg.norm(estimate.translation - true.translation)) < 0.02:
            hits_2cm += 1
        if ncm_ndeg(estimate, true, model.symmetry, 5.0, 5.0):
            hits_5d5c += 1
    return hits_2cm / n_samples, hits_5d5c / n_samples


def calibrate_noise(
    models: Sequence[BlockModel] | None = None,
    n_samples: int = 10_000,
    seed: int = 2024,
    target_2cm: float = 0.907,
    target_5d5c: float = 0.776,
    tol_2cm: float = 0.005,
    tol_5d5c: float = 0.008,
    fine_sigma: float = 0.0025,
) -> NoiseModel:
    """Fit the noise model to the perception recall targets by bisection.

    The fine translation noise is a couple of millimetres at desk scale, far
    below the 2 cm threshold, so the 2 cm recall identifies the gross-error
    rate rather than the fine sigma: stage one bisects gross_error_prob
    against the 2 cm target. Stage two bisects rot_sigma against the 5deg5cm
    target. Evaluations share one seed, making each stage exactly monotone;
    bisection stops inside the sampling tolerance of its target.
    """
    if models is None:
        models = standard_library()

    lo, hi = 0.0, 0.5
    gross_prob = 0.0
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        rate, _ = sample_recalls(
            models, NoiseModel(0.0, fine_sigma, gross_error_prob=mid), n_samples, seed
        )
        gross_prob = mid
        if abs(rate - target_2cm) <= tol_2cm:
            break
        if rate > target_2cm:
            lo = mid
        else:
            hi = mid

    lo, hi = 0.0, 0.5
    rot_sigma = 0.0
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        _, rate = sample_recalls(
            models, NoiseModel(mid, fine_sigma, gross_error_prob=gross_prob), n_samples, seed
        )
        rot_sigma = mid
        if abs(rate - target_5d5c) <= tol_5d5c:
            break
        if rate > target_5d5c:
            lo = mid
        else:
            hi = mid

    return NoiseModel(rot_sigma, fine_sigma, gross_error_prob=gross_prob)
