import json

import numpy as np
import pytest

from blockassembly.blocks import library_index, standard_library
from blockassembly.geometry import Pose, compose, invert, random_rotation, rot_z
from blockassembly.structure import (
    BUNDLED_PLAN_NAMES,
    PlanEntry,
    StructurePlan,
    bundled_plan,
    load_plan,
    plan_from_dict,
    plan_to_dict,
    resolve_world_poses,
    save_plan,
    validate_plan,
)

LIB = library_index(standard_library())


def _cube_tower(n: int, model: str = "cube_60", step: float = 0.06) -> StructurePlan:
    entries = tuple(
        PlanEntry(model, Pose(np.eye(3), np.array([0.0, 0.0, k * step]))) for k in range(n)
    )
    return StructurePlan("tower", entries, tuple(range(n)))


def test_resolve_identity_anchor():
    plan = _cube_tower(3)
    poses = resolve_world_poses(plan, Pose.identity())
    for pose, entry in zip(poses, plan.entries):
        assert pose.almost_equal(entry.relative_pose)


def test_resolve_translation_anchor():
    plan = _cube_tower(3)
    t = np.array([0.2, -0.1, 0.05])
    poses = resolve_world_poses(plan, Pose(np.eye(3), t))
    for pose, entry in zip(poses, plan.entries):
        assert np.allclose(pose.translation, entry.relative_pose.translation + t)


def test_resolve_preserves_pairwise_relations():
    plan = bundled_plan("bridge_six")
    base = resolve_world_poses(plan, Pose.identity())
    rng = np.random.default_rng(30)
    for _ in range(100):
        anchor = Pose(random_rotation(rng), rng.uniform(-0.5, 0.5, size=3))
        poses = resolve_world_poses(plan, anchor)
        for i in range(len(poses)):
            for j in range(i + 1, len(poses)):
                before = compose(invert(base[i]), base[j])
                after = compose(invert(poses[i]), poses[j])
                assert np.abs(after.rotation - before.rotation).max() < 1e-10
                assert np.abs(after.translation - before.translation).max() < 1e-10


def test_yaw_anchor_keeps_relations():
    plan = bundled_plan("tower_four")
    poses = resolve_world_poses(plan, Pose(rot_z(np.pi / 2), np.zeros(3)))
    rel = compose(invert(poses[0]), poses[1])
    assert rel.almost_equal(plan.entries[1].relative_pose, tol=1e-12)


def test_single_anchor_block_is_valid():
    plan = _cube_tower(1)
    assert validate_plan(plan, LIB).ok


def test_coincident_blocks_flagged():
    entries = (
        PlanEntry("cube_60", Pose.identity()),
        PlanEntry("cube_60", Pose.identity()),
    )
    plan = StructurePlan("bad", entries, (0, 1))
    report = validate_plan(plan, LIB)
    assert any("interpenetration" in f for f in report.findings)


def test_tower_bottom_up_valid_top_down_unsupported():
    plan = _cube_tower(4)
    assert validate_plan(plan, LIB).ok
    flipped = StructurePlan(plan.name, plan.entries, (0, 3, 2, 1))
    report = validate_plan(flipped, LIB)
    unsupported = [f for f in report.findings if "unsupported" in f]
    # entry 3 goes right after the anchor, floating two levels up; entry 2 then
    # hangs below it (contact is on its top face, not its bottom)
    assert "unsupported block: entry 3" in unsupported[0]
    assert any("entry 2" in f for f in unsupported)


def test_floating_block_flagged():
    entries = (
        PlanEntry("cube_60", Pose.identity()),
        PlanEntry("cube_60", Pose(np.eye(3), np.array([0.0, 0.0, 0.0601]))),
    )
    plan = StructurePlan("floater", entries, (0, 1))
    report = validate_plan(plan, LIB)
    assert any("unsupported block: entry 1" in f for f in report.findings)


def test_unknown_model_flagged():
    plan = StructurePlan("odd", (PlanEntry("mystery", Pose.identity()),), (0,))
    report = validate_plan(plan, LIB)
    assert any("unknown model" in f for f in report.findings)


def test_anchor_must_be_identity():
    entries = (
        PlanEntry("cube_60", Pose(np.eye(3), np.array([0.01, 0.0, 0.0]))),
        PlanEntry("cube_60", Pose(np.eye(3), np.array([0.0, 0.0, 0.06]))),
    )
    plan = StructurePlan("shifted", entries, (0, 1))
    report = validate_plan(plan, LIB)
    assert any("identity" in f for f in report.findings)


def test_sequence_defects_flagged():
    plan = _cube_tower(3)
    for bad_seq in ((0, 1), (0, 1, 1), (0, 1, 5), (1, 0, 2)):
        report = validate_plan(StructurePlan("t", plan.entries, bad_seq), LIB)
        assert any("sequence" in f for f in report.findings), bad_seq


def test_validation_deterministic():
    entries = (
        PlanEntry("cube_60", Pose.identity()),
        PlanEntry("cube_60", Pose(np.eye(3), np.array([0.0, 0.0, 0.2]))),
        PlanEntry("cube_60", Pose(np.eye(3), np.array([0.02, 0.0, 0.0]))),
    )
    plan = StructurePlan("messy", entries, (0, 1, 2))
    first = validate_plan(plan, LIB)
    for _ in range(3):
        assert validate_plan(plan, LIB).findings == first.findings


def test_bundled_plans_valid_with_expected_sizes():
    sizes = {"tower_four": 4, "bridge_six": 6, "terrace_eight": 8, "gate_eight": 8}
    assert set(BUNDLED_PLAN_NAMES) == set(sizes)
    for name, n in sizes.items():
        plan = bundled_plan(name)
        assert len(plan) == n
        assert plan.entries[0].relative_pose.almost_equal(Pose.identity())
        report = validate_plan(plan, LIB)
        assert report.ok, (name, report.findings)


def test_bundled_plan_unknown_name():
    with pytest.raises(KeyError):
        bundled_plan("skyscraper")


def test_plan_file_round_trip(tmp_path):
    plan = bundled_plan("gate_eight")
    path = tmp_path / "plan.json"
    save_plan(plan, path)
    loaded = load_plan(path)
    assert loaded.name == plan.name
    assert loaded.sequence == plan.sequence
    for a, b in zip(loaded.entries, plan.entries):
        assert a.model_id == b.model_id
        assert a.relative_pose.almost_equal(b.relative_pose, tol=1e-15)
    doc = json.loads(path.read_text())
    assert doc["format_version"] == 1


def test_plan_from_dict_rejects_malformed():
    with pytest.raises(ValueError):
        plan_from_dict({"name": "x", "entries": [{"model": "cube_60"}], "sequence": [0]})
    with pytest.raises(ValueError):
        plan_from_dict({"entries": [], "sequence": []})


def test_plan_dict_round_trip():
    plan = bundled_plan("terrace_eight")
    clone = plan_from_dict(plan_to_dict(plan))
    assert clone.name == plan.name
    assert clone.sequence == plan.sequence
    for a, b in zip(clone.entries, plan.entries):
        assert a.model_id == b.model_id
        assert a.relative_pose.almost_equal(b.relative_pose, tol=1e-15)
