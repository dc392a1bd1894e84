import json
import os

import numpy as np
import pytest
import yaml

from command.cli import EXIT_OK, EXIT_PURSE_EMPTY, EXIT_RUNTIME, EXIT_USAGE, main
from conformal import CalibrationRecord, NonconformityConfig, PredictionSet
from geom3d import Pose, Rotation3, project_points
from purse import build_purse


@pytest.fixture
def config_file(tmp_path):
    path = os.path.join(tmp_path, "small.yaml")
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump({"n_calib": 20, "n_scenes": 2, "epsilons": [0.4], "trials": 100, "witness_trials": 50}, f)
    return path


@pytest.fixture
def out(tmp_path):
    return os.path.join(tmp_path, "out")


def _read(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def test_synth_writes_scenes(config_file, out):
    assert main(["synth", "--config", config_file, "--out", out, "--count", "2", "--start", "5"]) == EXIT_OK
    for scene_id in (5, 6):
        assert os.path.exists(os.path.join(out, f"scene_{scene_id:06d}.pkhm"))
        meta = _read(os.path.join(out, f"scene_{scene_id:06d}.json"))
        assert meta["scene_id"] == scene_id
        assert len(meta["labels"]) == 8
    assert os.path.exists(os.path.join(out, "scenes.csv"))


def test_calibrate_from_scene_dir(config_file, out, tmp_path):
    scenes = os.path.join(tmp_path, "scenes")
    assert main(["synth", "--config", config_file, "--out", scenes, "--count", "3"]) == EXIT_OK
    assert main(["calibrate", "--config", config_file, "--out", out, "--scenes", scenes]) == EXIT_OK
    record = CalibrationRecord.load(os.path.join(out, "calibration.json"))
    assert record.n == 3


def test_full_chain(config_file, out, capsys):
    base = ["--config", config_file, "--out", out]
    assert main(["calibrate", *base]) == EXIT_OK
    calibration = os.path.join(out, "calibration.json")
    assert CalibrationRecord.load(calibration).n == 20

    assert main(["predict-sets", *base, "--calibration", calibration, "--scene-id", "30"]) == EXIT_OK
    pred = os.path.join(out, "prediction_set.json")
    assert _read(pred)["epsilon"] == 0.4

    assert main(["purse", *base, "--prediction-set", pred]) == EXIT_OK
    purse = os.path.join(out, "purse.json")
    assert "source" in _read(purse)

    assert main(["ransag", *base, "--purse", purse]) == EXIT_OK
    assert _read(os.path.join(out, "ransag.json"))["trials"] == 100

    capsys.readouterr()
    code = main(["bound", *base, "--purse", purse, "--pose", os.path.join(out, "pose.json"), "--lambda", "1"])
    assert code == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["status"] == "Bounded"
    assert 0.0 <= printed["angle_deg"] <= 180.0
    assert _read(os.path.join(out, "bound.json"))["status"] == "Bounded"
    assert _read(os.path.join(out, "bound.json"))["order"] == 1


def test_bound_on_empty_purse(cuboid_model, intrinsics, out, tmp_path, capsys):
    gt = Pose(Rotation3.from_rotvec([0.1, 0.0, 0.2]), np.array([0.0, 0.0, 0.8]))
    centers = project_points(gt, intrinsics, cuboid_model.keypoints3d)
    pred = PredictionSet(centers, np.tile(np.eye(2) / 9.0, (8, 1, 1)), 0.1, 1.0)
    purse_path = os.path.join(tmp_path, "purse.json")
    build_purse(pred, intrinsics, cuboid_model, trans_bound=0.0005).save(purse_path)
    pose_path = os.path.join(tmp_path, "pose.json")
    with open(pose_path, "w", encoding="utf-8") as f:
        json.dump(gt.to_dict(), f)

    code = main(["bound", "--out", out, "--purse", purse_path, "--pose", pose_path, "--witness-trials", "0"])
    assert code == EXIT_PURSE_EMPTY
    assert json.loads(capsys.readouterr().out)["status"] == "PurseEmpty"


def test_invalid_config(tmp_path, out, capsys):
    bad = os.path.join(tmp_path, "bad.yaml")
    with open(bad, "w", encoding="utf-8") as f:
        yaml.safe_dump({"lambdas": [2.0]}, f)
    assert main(["synth", "--config", bad, "--out", out]) == EXIT_USAGE
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ConfigError"


def test_missing_option(out):
    assert main(["purse", "--out", out]) == EXIT_USAGE


def test_bad_detection_file(config_file, out, tmp_path):
    record = CalibrationRecord.from_scores(np.linspace(1.0, 0.1, 20), NonconformityConfig())
    calibration = os.path.join(tmp_path, "calibration.json")
    record.save(calibration)
    detection = os.path.join(tmp_path, "junk.pkhm")
    with open(detection, "wb") as f:
        f.write(b"garbage!" + bytes(32))
    code = main(["predict-sets", "--config", config_file, "--out", out, "--calibration", calibration,
                 "--detection", detection])
    assert code == EXIT_USAGE


def test_runtime_error(config_file, out, tmp_path, capsys):
    record = CalibrationRecord.from_scores([0.5, 0.2], NonconformityConfig())
    calibration = os.path.join(tmp_path, "calibration.json")
    record.save(calibration)
    code = main(["predict-sets", "--config", config_file, "--out", out, "--calibration", calibration,
                 "--scene-id", "0", "--epsilon", "0.1"])
    assert code == EXIT_RUNTIME
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "EpsilonOutOfRange"


def test_ransag_needs_purse_source(out, tmp_path):
    purse_path = os.path.join(tmp_path, "bare.json")
    with open(purse_path, "w", encoding="utf-8") as f:
        json.dump({"A": [], "b": [], "trans_bound": 1.0}, f)
    assert main(["ransag", "--out", out, "--purse", purse_path]) == EXIT_USAGE


def test_bound_order_out_of_range(out, tmp_path):
    pose_path = os.path.join(tmp_path, "pose.json")
    with open(pose_path, "w", encoding="utf-8") as f:
        json.dump(Pose.identity().to_dict(), f)
    purse_path = os.path.join(tmp_path, "purse.json")
    with open(purse_path, "w", encoding="utf-8") as f:
        json.dump({"A": [], "b": [], "trans_bound": 1.0}, f)
    assert main(["bound", "--out", out, "--purse", purse_path, "--pose", pose_path, "--order", "3"]) == EXIT_USAGE
