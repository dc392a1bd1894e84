import json
import os

import pytest
import yaml

from common.errors import ConfigError
from config.reader import load_config, load_scene_inputs


def test_defaults():
    config = load_config()
    assert config.epsilons == [0.1, 0.4]
    assert config.kind == "peak"
    assert config.n_calib == 200
    assert config.image_size == (640, 480)
    assert config.solver.solver_args() == {"max_iters": 100, "tol": 1e-8, "step": 0.98}
    assert config.relaxation_order == 1
    model, intrinsics = load_scene_inputs(config)
    assert model.num_keypoints == 8
    assert intrinsics.p[0, 0] == pytest.approx(572.4114)


def test_nested_override_keeps_siblings():
    config = load_config(overrides={"noise": {"sigma_det": 0.5}, "seed": None})
    assert config.noise.sigma_det == 0.5
    assert config.noise.sigma_blob == 3.0
    assert config.seed == 0


def test_user_file_and_relative_paths(tmp_path, model):
    model_path = os.path.join(tmp_path, "box.json")
    with open(model_path, "w", encoding="utf-8") as f:
        json.dump({"object_id": "box", "keypoints_3d": model.keypoints3d.tolist()}, f)
    config_path = os.path.join(tmp_path, "exp.yaml")
    with open(config_path, "w", encoding="utf-8") as f:
        yaml.safe_dump({"object_model": "box.json", "n_calib": 99, "kind": "cov"}, f)
    config = load_config(config_path)
    assert config.object_model == model_path
    assert config.n_calib == 99
    assert config.kind == "cov"
    assert load_scene_inputs(config)[0].object_id == "box"


@pytest.mark.parametrize("overrides", [
    {"n_calib": 50, "epsilons": [0.01]},
    {"lambdas": [1.5]},
    {"kind": "median"},
    {"min_distance": 2.0, "max_distance": 1.0},
    {"noise": {"p_out": 2.0}},
    {"relaxation_order": 3},
])
def test_invalid_values(overrides):
    with pytest.raises(ConfigError):
        load_config(overrides=overrides)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(os.path.join(tmp_path, "missing.yaml"))
    bad = os.path.join(tmp_path, "list.yaml")
    with open(bad, "w", encoding="utf-8") as f:
        f.write("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_missing_object_model(tmp_path):
    config = load_config(overrides={"object_model": os.path.join(tmp_path, "nope.json")})
    with pytest.raises(ConfigError):
        load_scene_inputs(config)
