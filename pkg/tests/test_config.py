import numpy as np
import pytest

from blockassembly.config import (
    AssemblyConfig,
    config_from_dict,
    load_config,
    save_config,
)
from blockassembly.geometry import rot_z


def test_defaults_round_trip():
    config = AssemblyConfig()
    assert config_from_dict(config.to_dict()) == config


def test_omitted_fields_take_defaults():
    config = config_from_dict({"collision_margin": 0.001})
    assert config.collision_margin == 0.001
    assert config.max_opening == AssemblyConfig().max_opening
    assert config.calibration_enabled


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown config keys"):
        config_from_dict({"graper_width": 0.1})


def test_invalid_values_rejected():
    with pytest.raises(ValueError):
        config_from_dict({"max_opening": -1.0})
    with pytest.raises(ValueError):
        config_from_dict({"gross_error_prob": 2.0})
    with pytest.raises(ValueError):
        config_from_dict({"gross_z_min": 0.08, "gross_z_max": 0.05})
    with pytest.raises(ValueError):
        config_from_dict({"camera_rotation": [1.0, 0.0, 0.0]})


def test_save_load_round_trip(tmp_path):
    config = AssemblyConfig(collision_margin=0.002, trans_sigma=0.004)
    path = tmp_path / "config.json"
    save_config(config, path)
    assert load_config(path) == config


def test_gripper_model_fields():
    config = AssemblyConfig()
    gripper = config.gripper()
    assert np.allclose(gripper.finger_half_extents, config.finger_half_extents)
    assert gripper.max_opening == config.max_opening


def test_camera_pose_defaults_and_override():
    assert AssemblyConfig(camera_rotation=None, camera_translation=None).camera_pose() is None
    cam = AssemblyConfig(camera_translation=(0.1, 0.2, 0.9)).camera_pose()
    assert np.allclose(cam.rotation, np.eye(3))
    assert np.allclose(cam.translation, [0.1, 0.2, 0.9])
    rot = rot_z(0.5)
    cam = AssemblyConfig(camera_rotation=tuple(rot.reshape(9))).camera_pose()
    assert np.allclose(cam.rotation, rot)


def test_anchor_pose_uses_yaw_and_height():
    config = AssemblyConfig(anchor_yaw=0.3)
    anchor = config.anchor_pose(0.045)
    assert np.allclose(anchor.rotation, rot_z(0.3))
    assert np.allclose(anchor.translation, [*config.anchor_xy, 0.045])
