"""Tests for projection, P3P/PnP and rotation utilities."""

import itertools

import numpy as np
import pytest

from common.errors import DegenerateConfiguration, EmptyInput, NonPositiveDepth, OutOfRange, RankDeficient
from common.rng import stream
from geom3d import (CameraIntrinsics, Pose, Rotation3, angle_to_frobenius, average_poses, back_project,
                    frobenius_to_angle, p3p, pnp, pose_to_vector, project, project_points, project_so3,
                    reprojection_rms, rotation_angle_between, vector_to_pose)
from geom3d.rotation import FROB_MAX

from conftest import random_pose


def _spread_points(rng, count):
    return rng.uniform(-0.1, 0.1, size=(count, 3))


def _best_match(candidates, pose):
    errors = [(rotation_angle_between(c.R, pose.R), float(np.linalg.norm(c.t - pose.t))) for c in candidates]
    return min(errors, key=lambda e: e[0] + e[1])


def _grid_minimize(cost, rng, coarse=4000, finest=1e-6):
    """Brute-force minimum over SO(3): random rotations, then local grids refined around the best"""
    best = min((Rotation3.from_rotvec(v) for v in rng.normal(scale=1.5, size=(coarse, 3))),
               key=lambda r: cost(r.m))
    offsets = [np.array(o) for o in itertools.product((-1.0, 0.0, 1.0), repeat=3) if any(o)]
    step = 0.2
    for _ in range(2000):
        if step < finest:
            break
        cand = min((Rotation3.from_rotvec(step * o) @ best for o in offsets), key=lambda r: cost(r.m))
        if cost(cand.m) < cost(best.m):
            best = cand
        else:
            step /= 2.0
    return best


class TestProjection:

    def test_project_principal_point(self, intrinsics):
        pose = Pose(Rotation3.identity(), np.array([0.0, 0.0, 2.0]))
        px = project(pose, intrinsics, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(px, intrinsics.p[:2, 2])

    def test_back_project_inverts_project(self, intrinsics, rng):
        pose = random_pose(rng)
        point = np.array([0.03, -0.02, 0.04])
        px = project(pose, intrinsics, point)
        depth = pose.transform(point)[2]
        np.testing.assert_allclose(back_project(px, depth, pose, intrinsics), point, atol=1e-12)

    def test_point_behind_camera(self, intrinsics):
        pose = Pose(Rotation3.identity(), np.array([0.0, 0.0, -1.0]))
        with pytest.raises(NonPositiveDepth):
            project(pose, intrinsics, [0.0, 0.0, 0.0])
        with pytest.raises(NonPositiveDepth):
            project_points(pose, intrinsics, np.zeros((2, 3)))

    def test_intrinsics_must_be_upper_triangular(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(np.array([[500.0, 0, 320], [1.0, 500, 240], [0, 0, 1]]))

    def test_pose_vector_is_column_major(self, rng):
        pose = random_pose(rng)
        s = pose_to_vector(pose)
        np.testing.assert_array_equal(s[:3], pose.R[:, 0])
        np.testing.assert_array_equal(s[9:], pose.t)
        np.testing.assert_allclose(vector_to_pose(s).R, pose.R)


class TestP3P:

    def test_recovers_pose(self, intrinsics):
        for i in range(100):
            rng = stream(1, "p3p", i)
            pose = random_pose(rng)
            points = _spread_points(rng, 3)
            pixels = project_points(pose, intrinsics, points)
            rot_err, t_err = _best_match(p3p(pixels, points, intrinsics), pose)
            assert rot_err < 1e-6
            assert t_err < 1e-6

    def test_at_most_four_solutions_all_consistent(self, intrinsics, rng):
        pose = random_pose(rng)
        points = _spread_points(rng, 3)
        pixels = project_points(pose, intrinsics, points)
        solutions = p3p(pixels, points, intrinsics)
        assert 1 <= len(solutions) <= 4
        for sol in solutions:
            assert reprojection_rms(sol, intrinsics, points, pixels) < 1e-6

    def test_collinear_points_give_no_solution(self, intrinsics):
        points = np.array([[0.0, 0.0, 0.0], [0.05, 0.0, 0.0], [0.1, 0.0, 0.0]])
        pose = Pose(Rotation3.identity(), np.array([0.0, 0.0, 1.0]))
        assert p3p(project_points(pose, intrinsics, points), points, intrinsics) == []

    @pytest.mark.slow
    def test_recovers_pose_at_scale(self, intrinsics):
        for i in range(1000):
            rng = stream(2, "p3p", i)
            pose = random_pose(rng)
            points = _spread_points(rng, 3)
            rot_err, t_err = _best_match(p3p(project_points(pose, intrinsics, points), points, intrinsics), pose)
            assert rot_err < 1e-6 and t_err < 1e-6


class TestPnP:

    def test_noiseless_model(self, intrinsics, model):
        for i in range(50):
            pose = random_pose(stream(3, "pnp", i))
            pixels = project_points(pose, intrinsics, model.keypoints3d)
            est = pnp(pixels, model.keypoints3d, intrinsics)
            assert rotation_angle_between(est.R, pose.R) < 1e-6
            assert np.linalg.norm(est.t - pose.t) < 1e-6

    def test_four_points(self, intrinsics, rng):
        pose = random_pose(rng)
        points = _spread_points(rng, 4)
        est = pnp(project_points(pose, intrinsics, points), points, intrinsics)
        assert rotation_angle_between(est.R, pose.R) < 1e-6

    def test_noisy_pixels_stay_close(self, intrinsics, model, rng):
        pose = random_pose(rng)
        pixels = project_points(pose, intrinsics, model.keypoints3d) + rng.normal(scale=0.5, size=(8, 2))
        est = pnp(pixels, model.keypoints3d, intrinsics)
        assert reprojection_rms(est, intrinsics, model.keypoints3d, pixels) <= \
            reprojection_rms(pose, intrinsics, model.keypoints3d, pixels) + 1e-9

    def test_pixel_noise_statistics(self, intrinsics, model):
        sigma = 1.0
        rms = []
        for i in range(100):
            rng = stream(8, "pnp-noise", i)
            pose = random_pose(rng)
            pixels = project_points(pose, intrinsics, model.keypoints3d) + rng.normal(scale=sigma, size=(8, 2))
            est = pnp(pixels, model.keypoints3d, intrinsics)
            rms.append(reprojection_rms(est, intrinsics, model.keypoints3d, pixels))
        assert np.mean(rms) <= 2 * sigma
        assert np.percentile(rms, 95) <= 2 * sigma

    def test_needs_four_correspondences(self, intrinsics, rng):
        points = _spread_points(rng, 3)
        with pytest.raises(DegenerateConfiguration):
            pnp(np.zeros((3, 2)), points, intrinsics)

    @pytest.mark.slow
    def test_noiseless_at_scale(self, intrinsics, model):
        for i in range(1000):
            pose = random_pose(stream(4, "pnp", i))
            est = pnp(project_points(pose, intrinsics, model.keypoints3d), model.keypoints3d, intrinsics)
            assert rotation_angle_between(est.R, pose.R) < 1e-6
            assert np.linalg.norm(est.t - pose.t) < 1e-6


class TestRotations:

    def test_project_so3_of_rotation_is_identity_map(self, rng):
        rot = Rotation3.from_rotvec(rng.normal(size=3))
        np.testing.assert_allclose(project_so3(rot.m).m, rot.m, atol=1e-12)

    def test_project_so3_ignores_positive_scale(self, rng):
        rot = Rotation3.from_rotvec(rng.normal(size=3))
        np.testing.assert_allclose(project_so3(2.5 * rot.m).m, rot.m, atol=1e-12)

    def test_project_so3_matches_grid_search(self):
        rng = stream(2, "so3-grid")
        m = np.sum([Rotation3.from_rotvec(rng.normal(size=3)).m for _ in range(5)], axis=0)

        def cost(r):
            return float(np.sum((r - m) ** 2))

        grid = _grid_minimize(cost, rng)
        proj = project_so3(m)
        assert cost(proj.m) <= cost(grid.m) + 1e-12
        assert rotation_angle_between(proj.m, grid.m) < 1e-3

    def test_average_matches_grid_search(self):
        rng = stream(3, "chordal-grid")
        base = random_pose(rng)
        poses = [Pose(Rotation3.from_rotvec(rng.normal(scale=0.3, size=3)) @ base.rot, base.t) for _ in range(6)]

        def cost(r):
            return float(sum(np.sum((r - p.R) ** 2) for p in poses))

        avg = average_poses(poses)
        grid = _grid_minimize(cost, rng)
        assert cost(avg.R) <= cost(grid.m) + 1e-12
        assert rotation_angle_between(avg.R, grid.m) < 1e-3

    def test_project_so3_flips_reflections(self):
        out = project_so3(np.diag([1.0, 1.0, -1.0]))
        assert np.linalg.det(out.m) == pytest.approx(1.0)

    def test_project_so3_rank_deficient(self):
        with pytest.raises(RankDeficient):
            project_so3(np.zeros((3, 3)))

    def test_average_of_identical_poses(self, rng):
        pose = random_pose(rng)
        avg = average_poses([pose, pose, pose])
        np.testing.assert_allclose(avg.R, pose.R, atol=1e-12)
        np.testing.assert_allclose(avg.t, pose.t)

    def test_average_of_symmetric_perturbations(self):
        base = Pose(Rotation3.identity(), np.array([0.0, 0.0, 1.0]))
        plus = Pose(Rotation3.from_rotvec([0.0, 0.0, 0.2]), np.array([0.1, 0.0, 1.0]))
        minus = Pose(Rotation3.from_rotvec([0.0, 0.0, -0.2]), np.array([-0.1, 0.0, 1.0]))
        avg = average_poses([plus, minus])
        assert rotation_angle_between(avg.R, base.R) < 1e-10
        np.testing.assert_allclose(avg.t, base.t)

    def test_average_needs_poses(self):
        with pytest.raises(EmptyInput):
            average_poses([])

    def test_frobenius_angle_conversion(self):
        assert frobenius_to_angle(0.0) == 0.0
        assert frobenius_to_angle(FROB_MAX) == pytest.approx(np.pi)
        assert frobenius_to_angle(angle_to_frobenius(0.7)) == pytest.approx(0.7)
        with pytest.raises(OutOfRange):
            frobenius_to_angle(3.0)

    def test_geodesic_angle(self):
        rot = Rotation3.from_rotvec([0.0, 0.3, 0.0])
        assert rotation_angle_between(rot, Rotation3.identity()) == pytest.approx(0.3)
