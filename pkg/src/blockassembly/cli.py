"""Command line front end.

Subcommands chain the library end to end: `validate` checks a structure plan,
`plan` compiles an action trace for a scene file, `simulate` runs Monte Carlo
assembly batches, `metrics` scores pose records, and `export-scene` writes a
plain triangle mesh of a scene or trace step for external viewers.

Exit codes: 0 success, 1 domain failure (infeasible plan, failed lookup,
out-of-range step), 2 malformed input or I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .blocks import (
    BlockInstance,
    block_obbs,
    library_index,
    scene_from_dict,
    scene_to_dict,
    standard_library,
)
from .calibration import plane_settle
from .collision import GripperModel, Obb, gripper_obbs
from .config import AssemblyConfig, config_from_dict
from .geometry import Pose, pose_from_lists, pose_to_lists
from .grasp import grasp_opening
from .metrics import PoseRecord, build_recall_table
from .planner import PlanningError, compile_assembly, step_plan_to_dict
from .simulation import SimulationError, batch_to_dict, noise_from_config, run_batch
from .structure import BUNDLED_PLAN_NAMES, StructurePlan, bundled_plan, plan_from_dict, validate_plan

# the 12 triangles of a box over the corner order of Obb.corners()
BOX_TRIANGLES = (
    (4, 6, 7), (4, 7, 5), (0, 1, 3), (0, 3, 2),
    (2, 3, 7), (2, 7, 6), (0, 4, 5), (0, 5, 1),
    (1, 5, 7), (1, 7, 3), (0, 2, 6), (0, 6, 4),
)


class InputError(Exception):
    """Unreadable or malformed input file; maps to exit code 2."""


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object")
    version = doc.get("format_version", 1)
    if version != 1:
        raise InputError(f"{path}: unsupported format_version {version!r}")
    return doc


def _load_plan(value: str) -> StructurePlan:
    """A plan file path, or the name of a bundled plan."""
    if not Path(value).exists() and value in BUNDLED_PLAN_NAMES:
        return bundled_plan(value)
    doc = _read_json(value)
    try:
        return plan_from_dict(doc)
    except ValueError as exc:
        raise InputError(f"{value}: {exc}") from exc


def _load_scene(path: str) -> list[BlockInstance]:
    try:
        return scene_from_dict(_read_json(path))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_config(path: str | None) -> AssemblyConfig:
    if path is None:
        return AssemblyConfig()
    try:
        return config_from_dict(_read_json(path))
    except (ValueError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def cmd_validate(args) -> int:
    plan = _load_plan(args.plan)
    report = validate_plan(plan, library_index(standard_library()))
    if report.ok:
        print(f"{plan.name}: ok ({len(plan.entries)} blocks)")
        return 0
    for finding in report.findings:
        print(f"{plan.name}: {finding}")
    return 1


def cmd_plan(args) -> int:
    plan = _load_plan(args.plan)
    scene = _load_scene(args.scene)
    config = _load_config(args.config)
    if args.no_calibration:
        config = replace(config, calibration_enabled=False)
    library = library_index(standard_library())
    estimates = [inst.pose for inst in scene]

    try:
        steps = compile_assembly(plan, scene, estimates, library, config, strict=False)
    except PlanningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    gripper = config.gripper()
    step_docs = []
    for step in steps:
        doc = step_plan_to_dict(step)
        if step.grasp is not None:
            model = library[step.model_id]
            work = plane_settle(estimates[step.scene_index], 0.0, model, strict=False)
            opening = grasp_opening(model, step.grasp, gripper)
            doc["grasp"]["pose"] = pose_to_lists(step.grasp.world_pose(work))
            doc["grasp"]["opening"] = opening
        step_docs.append(doc)

    trace = {
        "format_version": 1,
        "structure": plan.name,
        "gripper": {
            "finger_half_extents": list(config.finger_half_extents),
            "max_opening": config.max_opening,
        },
        "scene": scene_to_dict(scene)["blocks"],
        "steps": step_docs,
    }
    if args.out:
        try:
            Path(args.out).write_text(json.dumps(trace, indent=1) + "\n")
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return 2

    failures = [s for s in steps if s.failure is not None]
    for step in failures:
        print(
            f"{plan.name}: {step.failure}: entry {step.entry_index}"
            f" ({step.model_id}, scene block {step.scene_index})",
            file=sys.stderr,
        )
    if failures:
        return 1
    rotations = sum(s.rotation_count for s in steps)
    print(f"{plan.name}: {len(steps)} blocks, {rotations} rotations"
          + (f", trace written to {args.out}" if args.out else ""))
    return 0


def cmd_simulate(args) -> int:
    if args.trials < 1:
        print("error: --trials must be at least 1", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    plans = [_load_plan(p) for p in args.plans]
    config = _load_config(args.config)
    if args.no_calibration:
        config = replace(config, calibration_enabled=False)

    try:
        stats = run_batch(plans, args.trials, noise_from_config(config), config,
                          base_seed=args.seed, jobs=args.jobs)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(stats.to_csv())
        (out / "report.json").write_text(json.dumps(batch_to_dict(stats), indent=1) + "\n")
    except OSError as exc:
        print(f"error: cannot write reports: {exc}", file=sys.stderr)
        return 2
    print(stats.to_csv(), end="")
    return 0


def cmd_metrics(args) -> int:
    doc = _read_json(args.records)
    raw = doc.get("records")
    if not isinstance(raw, list):
        raise InputError(f"{args.records}: expected a 'records' list")
    try:
        records = [
            PoseRecord(str(r["object"]), pose_from_lists(r["estimated"]),
                       pose_from_lists(r["ground_truth"]))
            for r in raw
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.records}: malformed record: {exc}") from exc
    if not records:
        print("error: no records", file=sys.stderr)
        return 1
    try:
        table = build_recall_table(records, library_index(standard_library()))
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 1
    print(table.to_text(), end="")
    if args.out:
        try:
            Path(args.out).write_text(table.to_csv())
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return 2
    return 0


def _mesh_text(groups: list[tuple[str, list[Obb]]]) -> str:
    lines = []
    base = 1
    for name, boxes in groups:
        lines.append(f"g {name}")
        for box in boxes:
            for corner in box.corners():
                lines.append("v " + " ".join(f"{v:.6f}" for v in corner))
            for tri in BOX_TRIANGLES:
                lines.append("f " + " ".join(str(base + i) for i in tri))
            base += 8
    return "\n".join(lines) + "\n"


def _trace_groups(doc: dict, step: int, library) -> list[tuple[str, list[Obb]]]:
    blocks = [(str(b["model"]), pose_from_lists(b)) for b in doc["scene"]]
    steps = doc["steps"]
    poses = [pose for _, pose in blocks]
    for done in steps[:step]:
        if "failure" not in done:
            poses[int(done["scene_block"])] = pose_from_lists(done["target"])

    groups = [
        (f"block_{i:02d}_{model}", block_obbs(library[model], poses[i]))
        for i, (model, _) in enumerate(blocks)
    ]
    if step < len(steps):
        grasp = steps[step].get("grasp", {})
        hand = doc.get("gripper")
        if "pose" in grasp and grasp.get("opening") is not None and hand:
            gripper = GripperModel(hand["finger_half_extents"], hand["max_opening"])
            fingers = gripper_obbs(gripper, pose_from_lists(grasp["pose"]), grasp["opening"])
            groups.append(("gripper", list(fingers)))
    return groups


def cmd_export_scene(args) -> int:
    doc = _read_json(args.input)
    library = library_index(standard_library())

    if args.at == "final":
        step = None
    else:
        try:
            step = int(args.at)
        except ValueError:
            print(f"error: --at must be an integer or 'final', got {args.at!r}",
                  file=sys.stderr)
            return 2

    if "steps" in doc:
        last = len(doc["steps"])
        if step is None:
            step = last
        if not 0 <= step <= last:
            print(f"error: step {step} out of range 0..{last}", file=sys.stderr)
            return 1
        try:
            groups = _trace_groups(doc, step, library)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.input}: malformed trace: {exc}") from exc
    elif "blocks" in doc:
        if step not in (0, None):
            print(f"error: step {step} out of range for a plain scene", file=sys.stderr)
            return 1
        try:
            scene = scene_from_dict(doc)
        except ValueError as exc:
            raise InputError(f"{args.input}: {exc}") from exc
        unknown = sorted({b.model_id for b in scene} - set(library))
        if unknown:
            print(f"error: unknown models in scene: {', '.join(unknown)}", file=sys.stderr)
            return 1
        groups = [
            (f"block_{i:02d}_{inst.model_id}", block_obbs(library[inst.model_id], inst.pose))
            for i, inst in enumerate(scene)
        ]
    else:
        raise InputError(f"{args.input}: neither a scene ('blocks') nor a trace ('steps')")

    text = _mesh_text(groups)
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return 2
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockassembly",
        description="Plan, simulate, and score block assembly from 6D pose estimates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a structure plan for static defects")
    p.add_argument("plan", help="plan file or bundled plan name")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="compile a per-block action trace for a scene")
    p.add_argument("plan", help="plan file or bundled plan name")
    p.add_argument("scene", help="scene file")
    p.add_argument("--config", help="config file (defaults apply otherwise)")
    p.add_argument("--out", help="write the action trace JSON here")
    p.add_argument("--no-calibration", action="store_true",
                   help="plan without calibrate actions")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run Monte Carlo assembly batches")
    p.add_argument("plans", nargs="+", help="plan files or bundled plan names")
    p.add_argument("--trials", type=int, default=15, help="trials per structure")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--config", help="config file")
    p.add_argument("--out", default=".", help="directory for report.csv/report.json")
    p.add_argument("--no-calibration", action="store_true",
                   help="simulate without the calibration step")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="score a pose record file")
    p.add_argument("records", help="records file")
    p.add_argument("--out", help="also write the table as CSV here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("export-scene", help="write a scene or trace step as a mesh")
    p.add_argument("input", help="scene or trace file")
    p.add_argument("--at", default="0", help="step index or 'final' (traces only)")
    p.add_argument("--out", help="mesh file (stdout otherwise)")
    p.set_defaults(func=cmd_export_scene)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
