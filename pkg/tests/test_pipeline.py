"""Tests for scene generation, the experiments and their outputs."""

import os

import numpy as np
import pandas as pd
import pytest

from common.errors import OutOfFrustum
from common.rng import stream
from config.reader import NoiseSpec, load_config
from geom3d import project_points
from pipeline import (generate_scene, run_bounds_experiment, run_coverage_experiment, run_equivalence_check,
                      run_invariance_check)
from pipeline.experiments import INVARIANCE_EPSILONS, make_scene, score_scenes
from pipeline.plotting import plot_all
from pipeline.results import (BOUNDS_COLUMNS, CDF_COLUMNS, COVERAGE_COLUMNS, COVERAGE_SUMMARY_COLUMNS,
                              SCENES_COLUMNS, save_bounds_report, save_coverage_report, scenes_frame)


@pytest.fixture(scope="module")
def bounds_config():
    return load_config(overrides={"n_calib": 50, "n_scenes": 2, "epsilons": [0.4], "trials": 200,
                                  "witness_trials": 200, "sample_min_candidates": 2})


@pytest.fixture(scope="module")
def bounds_report(bounds_config):
    return run_bounds_experiment(bounds_config)


@pytest.fixture(scope="module")
def two_level_report():
    return run_bounds_experiment(load_config(overrides={
        "n_calib": 50, "n_scenes": 2, "epsilons": [0.1, 0.4], "trials": 200, "sample_min_candidates": 0}))


class TestSyntheticScenes:

    def test_labels_are_projections(self, model, intrinsics):
        scene = generate_scene(model, intrinsics, NoiseSpec(), stream(0, "scene", 0))
        np.testing.assert_array_equal(scene.labels, project_points(scene.pose, intrinsics, model.keypoints3d))
        assert np.all(scene.labels >= 10.0)
        assert np.all(scene.labels[:, 0] <= 639 - 10.0)
        assert np.all(scene.labels[:, 1] <= 479 - 10.0)
        assert 0.5 <= scene.pose.t[2] <= 2.0

    def test_clean_peaks_sit_on_rounded_labels(self, model, intrinsics, clean_noise):
        for i in range(5):
            scene = generate_scene(model, intrinsics, clean_noise, stream(1, "scene", i))
            flat = scene.heatmap.probs.reshape(model.num_keypoints, -1)
            rows, cols = np.divmod(np.argmax(flat, axis=1), 640)
            np.testing.assert_array_equal(cols, np.round(scene.labels[:, 0]))
            np.testing.assert_array_equal(rows, np.round(scene.labels[:, 1]))

    def test_outlier_frequency(self, model, intrinsics):
        noise = NoiseSpec(p_out=0.5)
        flags = [generate_scene(model, intrinsics, noise, stream(2, "scene", i), with_heatmap=False).outliers
                 for i in range(100)]
        assert 0.4 < np.mean(flags) < 0.6

    def test_same_stream_same_scene(self, small_config, model, intrinsics):
        first, _ = make_scene(small_config, model, intrinsics, 7)
        second, _ = make_scene(small_config, model, intrinsics, 7)
        np.testing.assert_array_equal(first.pose.R, second.pose.R)
        np.testing.assert_array_equal(first.detected, second.detected)

    def test_frustum_retries_run_out(self, model, intrinsics):
        with pytest.raises(OutOfFrustum):
            generate_scene(model, intrinsics, NoiseSpec(), stream(0, "scene", 0), margin_px=300.0)

    def test_pvnet_scenes_carry_votes(self, model, intrinsics):
        config = load_config(overrides={"kind": "pvnet", "n_calib": 50})
        scene, fields = make_scene(config, model, intrinsics, 0)
        assert scene.heatmap is None
        assert len(fields) == model.num_keypoints
        assert all(len(f) == config.votes.n_votes for f in fields)

    def test_scored_scenes_drop_heatmaps(self, small_config, model, intrinsics):
        scored = score_scenes(small_config, model, intrinsics, [3, 1])
        assert [s.scene_id for s in scored] == [3, 1]
        assert all(s.scene.heatmap is None for s in scored)
        assert scored[0].keypoint_scores.shape == (model.num_keypoints,)

    def test_scenes_frame(self, model, intrinsics):
        scenes = [generate_scene(model, intrinsics, NoiseSpec(), stream(0, "scene", i), i, with_heatmap=False)
                  for i in range(3)]
        frame = scenes_frame(scenes)
        assert list(frame.columns) == SCENES_COLUMNS
        assert len(frame) == 3 * model.num_keypoints


class TestCoverageExperiment:

    def test_small_run(self, small_config, tmp_path):
        config = small_config.model_copy(update={"n_resamples": 2})
        report = run_coverage_experiment(config)
        assert len(report.per_resample) == 2 * len(config.epsilons)
        assert report.agreement_rate == 1.0
        np.testing.assert_array_equal(report.per_resample["kp_coverage"], report.per_resample["purse_coverage"])
        summary = report.summary.set_index("epsilon")
        assert summary.loc[0.1, "h"] == 5
        assert summary.loc[0.1, "kp_mean"] >= summary.loc[0.4, "kp_mean"]
        assert summary.loc[0.1, "mean_set_area"] >= summary.loc[0.4, "mean_set_area"]

        paths = save_coverage_report(report, str(tmp_path))
        assert list(pd.read_csv(paths["per_resample"]).columns) == COVERAGE_COLUMNS
        assert list(pd.read_csv(paths["summary"]).columns) == COVERAGE_SUMMARY_COLUMNS

    def test_rescaling_never_changes_membership(self, small_config):
        frame = run_invariance_check(small_config, n_test=60)
        assert len(frame) == 10 * 3
        assert sorted(set(frame["epsilon"])) == pytest.approx([0.05 * i for i in range(1, 11)])
        assert INVARIANCE_EPSILONS[-1] == 0.5
        assert frame["mismatches"].sum() == 0

    def test_purse_matches_keypoint_sets_on_perturbed_poses(self, small_config):
        report = run_equivalence_check(small_config, n_poses=300, n_scenes=3)
        assert report.n_valid == 300
        assert report.n_agree == report.n_valid
        assert report.to_dict()["agreement_rate"] == 1.0

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", ["peak", "cov", "pvnet"])
    def test_marginal_coverage_at_scale(self, kind):
        report = run_coverage_experiment(load_config(overrides={"kind": kind}))
        for _, row in report.summary.iterrows():
            assert abs(row["kp_mean"] - row["beta_mean"]) < 0.03
            assert row["purse_mean"] == row["kp_mean"]
        assert report.agreement_rate == 1.0

    @pytest.mark.slow
    def test_equivalence_at_scale(self):
        report = run_equivalence_check(load_config())
        assert report.agreement_rate == 1.0


class TestBoundsExperiment:

    def test_rows(self, bounds_report, bounds_config):
        rows = bounds_report.rows
        assert set(BOUNDS_COLUMNS) <= set(rows.columns)
        assert len(rows) == bounds_config.n_scenes * len(bounds_config.lambdas)
        assert sorted(rows["scene_id"].unique()) == [50, 51]

    def test_bounds_dominate_errors_inside_the_purse(self, bounds_report):
        rows = bounds_report.rows
        sel = rows[(rows["status"] == "Bounded") & rows["gt_in_purse"]]
        assert np.all(sel["d_squared_upper"] + 1e-6 >= sel["actual_error"] ** 2)
        witnessed = sel.dropna(subset=["witness_value"])
        assert np.all(witnessed["witness_value"] <= witnessed["d_squared_upper"] + 1e-6)

    def test_bounds_shrink_as_epsilon_grows(self, two_level_report):
        bounded = two_level_report.rows[two_level_report.rows["status"] == "Bounded"]
        by_key = bounded.set_index(["scene_id", "lambda"])
        wide = by_key[by_key["epsilon"] == 0.1]["d_squared_upper"]
        tight = by_key[by_key["epsilon"] == 0.4]["d_squared_upper"]
        common = wide.index.intersection(tight.index)
        assert len(common) > 0
        assert np.all(tight[common].to_numpy() <= wide[common].to_numpy() + 1e-6)

    def test_cdf(self, bounds_report):
        cdf = bounds_report.cdf
        assert list(cdf.columns) == CDF_COLUMNS
        for _, group in cdf.groupby(["epsilon", "lambda"]):
            assert group["cdf"].iloc[-1] == pytest.approx(1.0)
            assert np.all(np.diff(group["d_upper"]) >= 0)

    def test_deterministic(self, bounds_report, bounds_config):
        again = run_bounds_experiment(bounds_config)
        pd.testing.assert_frame_equal(again.rows, bounds_report.rows)

    def test_outputs_and_plots(self, bounds_report, tmp_path):
        out = str(tmp_path)
        paths = save_bounds_report(bounds_report, out)
        assert list(pd.read_csv(paths["rows"]).columns) == BOUNDS_COLUMNS
        plots = plot_all(out)
        assert plots
        assert all(os.path.exists(p) for p in plots)

    def test_plot_all_without_results(self, tmp_path):
        assert plot_all(str(tmp_path)) == []
