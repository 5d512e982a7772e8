"""Target structures: relative block poses, assembly order, plan validation.

A structure plan is anchored to its first block: entry 0 carries the identity
relative pose and every other entry is expressed in that block's frame.
Placing the structure in the world takes exactly one anchor pose.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .blocks import BlockModel, block_obbs, support_offset
from .collision import obb_penetration, obb_separation
from .geometry import Pose, compose, pose_from_lists, pose_to_lists

CONTACT_TOL = 1e-6
SUPPORT_TOL = 1e-4


@dataclass(frozen=True)
class PlanEntry:
    model_id: str
    relative_pose: Pose


@dataclass(frozen=True)
class StructurePlan:
    """Blocks of one structure with their anchor-relative poses and build order."""

    name: str
    entries: tuple[PlanEntry, ...]
    sequence: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.findings


def resolve_world_poses(plan: StructurePlan, anchor: Pose) -> list[Pose]:
    """World pose of every entry once the anchor block is placed at `anchor`."""
    return [compose(anchor, entry.relative_pose) for entry in plan.entries]


def _sequence_findings(plan: StructurePlan) -> list[str]:
    n = len(plan.entries)
    seq = plan.sequence
    if sorted(seq) != list(range(n)):
        return [f"invalid sequence: expected a permutation of 0..{n - 1}, got {list(seq)}"]
    if seq and seq[0] != 0:
        return [f"invalid sequence: the anchor (entry 0) must be placed first, got entry {seq[0]}"]
    return []


def validate_plan(plan: StructurePlan, library: dict[str, BlockModel]) -> ValidationReport:
    """Static feasibility findings: ids, anchor, sequence, overlap, support."""
    findings: list[str] = []
    if not plan.entries:
        return ValidationReport(("plan has no entries",))

    for i, entry in enumerate(plan.entries):
        if entry.model_id not in library:
            findings.append(f"unknown model: entry {i} references {entry.model_id!r}")
    if findings:
        return ValidationReport(tuple(findings))

    anchor_rel = plan.entries[0].relative_pose
    if not anchor_rel.almost_equal(Pose.identity(), tol=1e-9):
        findings.append("entry 0 must sit at the identity relative pose")

    seq_findings = _sequence_findings(plan)
    findings.extend(seq_findings)

    # place the structure on the ground plane: anchor at its resting height
    anchor_model = library[plan.entries[0].model_id]
    anchor = Pose(np.eye(3), np.array([0.0, 0.0, support_offset(anchor_model, np.eye(3))]))
    poses = resolve_world_poses(plan, anchor)
    obbs = [block_obbs(library[e.model_id], p) for e, p in zip(plan.entries, poses)]

    for i in range(len(obbs)):
        for j in range(i + 1, len(obbs)):
            depth = max(obb_penetration(a, b) for a in obbs[i] for b in obbs[j])
            if depth > CONTACT_TOL:
                findings.append(
                    f"interpenetration: entries {i} and {j} overlap by {depth:.6f} m"
                )

    if not seq_findings:
        findings.extend(_support_findings(plan, obbs))
    return ValidationReport(tuple(findings))


def _support_findings(plan: StructurePlan, obbs) -> list[str]:
    def z_low(boxes) -> float:
        return min(float(b.center[2] - np.abs(b.rotation[2]) @ b.half_extents) for b in boxes)

    def z_high(box) -> float:
        return float(box.center[2] + np.abs(box.rotation[2]) @ box.half_extents)

    findings = []
    placed: list[int] = []
    for idx in plan.sequence:
        bottom = z_low(obbs[idx])
        supported = abs(bottom) <= SUPPORT_TOL  # ground plane
        if not supported:
            for j in placed:
                for a in obbs[idx]:
                    for b in obbs[j]:
                        if (
                            obb_separation(a, b) <= SUPPORT_TOL
                            and abs(z_high(b) - bottom) <= SUPPORT_TOL
                        ):
                            supported = True
            if not supported:
                findings.append(f"unsupported block: entry {idx}")
        placed.append(idx)
    return findings


def plan_to_dict(plan: StructurePlan) -> dict:
    return {
        "format_version": 1,
        "name": plan.name,
        "entries": [
            {"model": e.model_id, **pose_to_lists(e.relative_pose)} for e in plan.entries
        ],
        "sequence": list(plan.sequence),
    }


def plan_from_dict(doc: dict) -> StructurePlan:
    try:
        entries = tuple(
            PlanEntry(
                model_id=str(e["model"]),
                relative_pose=pose_from_lists(e),
            )
            for e in doc["entries"]
        )
        sequence = tuple(int(i) for i in doc["sequence"])
        name = str(doc["name"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed structure plan: {exc}") from exc
    return StructurePlan(name=name, entries=entries, sequence=sequence)


def load_plan(path) -> StructurePlan:
    with open(path) as fh:
        return plan_from_dict(json.load(fh))


def save_plan(plan: StructurePlan, path) -> None:
    with open(path, "w") as fh:
        json.dump(plan_to_dict(plan), fh, indent=1)
        fh.write("\n")


BUNDLED_PLAN_NAMES = ("tower_four", "bridge_six", "terrace_eight", "gate_eight")


def bundled_plan(name: str) -> StructurePlan:
    """One of the four built-in example structures."""
    if name not in BUNDLED_PLAN_NAMES:
        raise KeyError(f"no bundled plan named {name!r}; have {BUNDLED_PLAN_NAMES}")
    text = resources.files("blockassembly").joinpath(f"data/plans/{name}.json").read_text()
    return plan_from_dict(json.loads(text))
