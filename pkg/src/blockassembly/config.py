"""Run configuration: gripper, workspace, planning margins, noise model.

One flat JSON document drives planning and simulation so experiment setups
are reproducible from a single file. Unknown keys are rejected rather than
ignored: a typo in a tuning knob should fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .collision import GripperModel
from .geometry import Pose, rot_z


@dataclass
class AssemblyConfig:
    # gripper collision proxy
    finger_half_extents: tuple[float, float, float] = (0.0075, 0.0125, 0.025)
    max_opening: float = 0.140

    # reachable workspace and wrist tilt limit
    reach_xy_half: float = 0.60
    reach_z_min: float = -0.05
    reach_z_max: float = 0.70
    max_tilt_deg: float = 100.0

    # planning
    collision_margin: float = 0.0005
    approach_distance: float = 0.050
    allow_flip: bool = True
    workspace_xy: tuple[float, float] = (0.0, -0.38)
    anchor_xy: tuple[float, float] = (0.0, 0.38)
    anchor_yaw: float = 0.0

    # calibration
    calibration_enabled: bool = True
    actuation_noise: float = 5e-5

    # simulation: success criteria and grasp capture
    assembly_tolerance: float = 0.001
    wreck_depth: float = 0.001
    capture_fraction: float = 0.10

    # scene generation: 0.3 m square scatter region inside the reach box
    scene_half_extent: float = 0.15
    scene_clearance: float = 0.002
    scene_max_attempts: int = 1000

    # perception noise; sigmas and gross rate fitted to the recall targets
    # by calibrate_noise in the simulation module
    trans_sigma: float = 0.0025
    rot_sigma: float = 0.05859375
    gross_error_prob: float = 0.1015625
    gross_xy_sigma: float = 0.005
    gross_z_min: float = 0.015
    gross_z_max: float = 0.050
    detection_prob: float = 1.0

    # optional camera extrinsic: estimates are produced in this frame and
    # converted back, exercising the full transform chain
    camera_rotation: tuple[float, ...] | None = None
    camera_translation: tuple[float, float, float] | None = None

    def gripper(self) -> GripperModel:
        return GripperModel(np.array(self.finger_half_extents), self.max_opening)

    def camera_pose(self) -> Pose | None:
        if self.camera_rotation is None and self.camera_translation is None:
            return None
        rotation = (
            np.array(self.camera_rotation, dtype=float).reshape(3, 3)
            if self.camera_rotation is not None
            else np.eye(3)
        )
        translation = (
            np.array(self.camera_translation, dtype=float)
            if self.camera_translation is not None
            else np.zeros(3)
        )
        return Pose(rotation, translation)

    def anchor_pose(self, anchor_height: float) -> Pose:
        x, y = self.anchor_xy
        return Pose(rot_z(self.anchor_yaw), np.array([x, y, anchor_height]))

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key, value in doc.items():
            if isinstance(value, tuple):
                doc[key] = list(value)
        return doc


def config_from_dict(doc: dict) -> AssemblyConfig:
    known = {f.name: f for f in fields(AssemblyConfig)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        if isinstance(value, list):
            value = tuple(float(v) for v in value)
        kwargs[key] = value
    cfg = AssemblyConfig(**kwargs)
    _check(cfg)
    return cfg


def _check(cfg: AssemblyConfig) -> None:
    if cfg.max_opening <= 0 or any(v <= 0 for v in cfg.finger_half_extents):
        raise ValueError("gripper dimensions must be positive")
    if cfg.collision_margin < 0 or cfg.approach_distance <= 0:
        raise ValueError("margins and approach distance must be nonnegative")
    if not 0.0 <= cfg.gross_error_prob <= 1.0:
        raise ValueError("gross_error_prob must be a probability")
    if not 0.0 <= cfg.detection_prob <= 1.0:
        raise ValueError("detection_prob must be a probability")
    if cfg.gross_z_min > cfg.gross_z_max:
        raise ValueError("gross_z_min must not exceed gross_z_max")
    if cfg.camera_rotation is not None and len(cfg.camera_rotation) != 9:
        raise ValueError("camera_rotation needs 9 entries (row-major)")


def load_config(path) -> AssemblyConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: AssemblyConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1)
        fh.write("\n")
