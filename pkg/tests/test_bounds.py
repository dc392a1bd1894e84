"""Tests for the pose QCQP, its relaxation and the worst-case bounds."""

import numpy as np
import pytest

from bounds import (PURSE_EMPTY, BoundQuery, Qcqp, analytic_cap, assemble_qcqp, distance_objective, lift,
                    moment_lift, moment_relax, monomial_basis, pose_distance_sq, relax, relaxation_value,
                    sample_min_bound, shor_relax, so3_constraints, worst_case_bound)
from conformal import PredictionSet
from geom3d import Pose, Rotation3, pose_to_vector, project_points
from purse import Purse, build_purse, purse_contains, ransag
from sdp import SdpStatus, solve_sdp

from conftest import random_pose


def _disk_purse(pose, model, intrinsics, radius=4.0, trans_bound=5.0):
    centers = project_points(pose, intrinsics, model.keypoints3d)
    pred = PredictionSet(centers, np.tile(np.eye(2) / radius**2, (model.num_keypoints, 1, 1)), 0.1, 1.0)
    return pred, build_purse(pred, intrinsics, model, trans_bound)


@pytest.fixture
def scenario(model, intrinsics):
    """Groundtruth pose, its PURSE and RANSAG output around it"""
    gt = Pose(Rotation3.from_rotvec([0.4, -0.3, 0.2]), np.array([0.02, -0.01, 0.6]))
    pred, purse = _disk_purse(gt, model, intrinsics, radius=6.0)
    result = ransag(purse, pred, model, intrinsics, trials=300, seed=1)
    return gt, purse, result


class TestQcqp:

    def test_so3_constraints_vanish_on_rotations(self, rng):
        constraints = so3_constraints()
        assert len(constraints) == 15
        s = pose_to_vector(random_pose(rng))
        values = [Qcqp.evaluate(q, s) for q in constraints]
        np.testing.assert_allclose(values, 0.0, atol=1e-12)

    def test_so3_constraints_reject_reflections(self):
        s = np.concatenate([np.diag([1.0, 1.0, -1.0]).reshape(-1, order="F"), np.zeros(3)])
        values = np.array([Qcqp.evaluate(q, s) for q in so3_constraints()])
        np.testing.assert_allclose(values[:6], 0.0, atol=1e-12)
        assert np.max(np.abs(values[6:])) > 1.0

    @pytest.mark.parametrize("lam", [0.0, 0.3, 1.0])
    def test_distance_objective(self, rng, lam):
        pose, ref = random_pose(rng), random_pose(rng)
        value = Qcqp.evaluate(distance_objective(ref, lam), pose_to_vector(pose))
        assert value == pytest.approx(pose_distance_sq(pose, ref, lam), abs=1e-12)

    def test_assembled_problem(self, model, intrinsics, rng):
        gt = random_pose(rng)
        _, purse = _disk_purse(gt, model, intrinsics)
        qcqp = assemble_qcqp(purse, random_pose(rng), 1.0)
        k = model.num_keypoints
        assert len(qcqp.labels) == 15 + 2 * k + 1
        assert qcqp.labels[15] == "purse_0"
        assert qcqp.labels[15 + k] == "depth_0"
        assert qcqp.labels[-1] == "trans_ball"
        assert qcqp.is_feasible(pose_to_vector(gt))

    def test_relaxation_of_a_lifted_point(self, model, intrinsics, rng):
        gt, ref = random_pose(rng), random_pose(rng)
        _, purse = _disk_purse(gt, model, intrinsics)
        qcqp = assemble_qcqp(purse, ref, 0.5)
        s = pose_to_vector(gt)
        assert relaxation_value(qcqp, lift(s)) == pytest.approx(qcqp.objective_value(s), abs=1e-10)
        sdp = shor_relax(qcqp)
        assert sdp.dim == 13
        assert sdp.num_equalities == 16
        assert sdp.num_inequalities == 2 * model.num_keypoints + 1
        eq, ineq = sdp.residuals(lift(s))
        assert np.all(np.abs(eq) < 1e-10)
        assert np.all(ineq < 1e-9)


class TestWorstCaseBound:

    def test_rotation_only_reaches_the_antipode(self):
        purse = Purse(np.zeros((0, 12, 12)), np.zeros((0, 12)), trans_bound=1.0)
        result = worst_case_bound(BoundQuery(purse, Pose.identity(), 1.0))
        assert result.bounded
        assert result.d_squared_upper == pytest.approx(8.0, abs=1e-5)
        assert result.angle_upper == pytest.approx(np.pi, abs=1e-2)
        assert result.witness_value is None

    @pytest.mark.parametrize("lam", [1.0, 0.0])
    def test_bound_dominates_groundtruth_error(self, scenario, lam):
        gt, purse, sampled = scenario
        assert purse_contains(purse, gt)
        ref = sampled.average
        result = worst_case_bound(BoundQuery(purse, ref, lam), samples=sampled.samples)
        assert result.bounded
        assert result.d_squared_upper + 1e-6 >= pose_distance_sq(gt, ref, lam)
        assert result.witness_value <= result.d_squared_upper + 1e-6
        assert result.d_squared_upper <= analytic_cap(BoundQuery(purse, ref, lam))
        if lam == 1.0:
            assert 0.0 <= result.angle_upper <= np.pi
            assert "angle_deg" in result.to_dict()
        else:
            assert result.angle_upper is None
            assert "angle_deg" not in result.to_dict()

    def test_witness_drawn_from_the_purse_source(self, scenario):
        _, purse, sampled = scenario
        result = worst_case_bound(BoundQuery(purse, sampled.average, 1.0), witness_trials=300, seed=4)
        assert result.lower_witness is not None
        assert purse_contains(purse, result.lower_witness[0])
        assert result.witness_value <= result.d_squared_upper + 1e-6

    def test_empty_purse(self, cuboid_model, intrinsics):
        gt = Pose(Rotation3.from_rotvec([0.1, 0.2, 0.0]), np.array([0.0, 0.0, 0.8]))
        _, purse = _disk_purse(gt, cuboid_model, intrinsics, trans_bound=0.0005)
        result = worst_case_bound(BoundQuery(purse, gt, 1.0))
        assert result.status == PURSE_EMPTY
        assert not result.bounded
        assert np.isnan(result.d_upper)
        assert result.to_dict()["status"] == "PurseEmpty"

    def test_lambda_range(self, scenario):
        _, purse, sampled = scenario
        with pytest.raises(ValueError):
            BoundQuery(purse, sampled.average, 1.5)


class TestSampleMinBound:

    def test_picks_the_tightest_candidate(self, scenario):
        _, purse, sampled = scenario
        candidates = [sampled.average] + sampled.samples[:2]
        best_pose, best = sample_min_bound(purse, candidates, 1.0)
        assert any(best_pose is c for c in candidates)
        for pose in candidates:
            single = worst_case_bound(BoundQuery(purse, pose, 1.0), witness_trials=0)
            assert best.d_squared_upper <= single.d_squared_upper + 1e-9

    def test_empty_purse_returns_first_candidate(self, cuboid_model, intrinsics):
        gt = Pose(Rotation3.identity(), np.array([0.0, 0.0, 0.8]))
        _, purse = _disk_purse(gt, cuboid_model, intrinsics, trans_bound=0.0005)
        pose, result = sample_min_bound(purse, [gt, Pose.identity()], 0.0)
        assert pose is gt
        assert result.status == PURSE_EMPTY

    def test_needs_candidates(self, scenario):
        _, purse, _ = scenario
        with pytest.raises(ValueError):
            sample_min_bound(purse, [], 1.0)


def _triangle_maxcut() -> Qcqp:
    """Max cut of a triangle over x in {-1, 1}^3; the order-1 value is 2.25, the true one 2"""
    q = np.full((3, 3), -0.25)
    np.fill_diagonal(q, 0.0)
    squares = []
    for i in range(3):
        e = np.zeros((3, 3))
        e[i, i] = 1.0
        squares.append((e, np.zeros(3), -1.0))
    return Qcqp((q, np.zeros(3), 1.5), squares)


class TestMomentRelaxation:

    def test_monomial_basis(self):
        assert len(monomial_basis(12)) == 91
        assert monomial_basis(2) == [(), (0,), (1,), (0, 0), (0, 1), (1, 1)]

    def test_lifted_point_is_feasible(self, model, intrinsics, rng):
        gt, ref = random_pose(rng), random_pose(rng)
        _, purse = _disk_purse(gt, model, intrinsics)
        qcqp = assemble_qcqp(purse, ref, 0.5)
        sdp = moment_relax(qcqp)
        n_ineq = 2 * model.num_keypoints + 1
        assert sdp.dim == 91
        assert sdp.num_equalities == 1 + (91 * 92 // 2 - 1820) + 15 * 91
        assert sdp.num_inequalities == 13 * n_ineq + n_ineq * (n_ineq - 1) // 2
        s = pose_to_vector(gt)
        x = moment_lift(s)
        eq, ineq = sdp.residuals(x)
        assert np.all(np.abs(eq) < 1e-8)
        assert np.all(ineq < 1e-9)
        assert sdp.objective(x) == pytest.approx(qcqp.objective_value(s) - qcqp.objective[2], abs=1e-10)

    def test_relax_dispatches_on_order(self):
        qcqp = _triangle_maxcut()
        assert relax(qcqp, 1).dim == 4
        assert relax(qcqp, 2).dim == 10
        with pytest.raises(ValueError):
            relax(qcqp, 3)

    def test_second_order_closes_the_triangle_gap(self):
        qcqp = _triangle_maxcut()
        values = {}
        for order in (1, 2):
            solution = solve_sdp(relax(qcqp, order))
            assert solution.status == SdpStatus.OPTIMAL
            values[order] = solution.objective_value + qcqp.objective[2]
        assert values[1] == pytest.approx(2.25, abs=1e-3)
        assert values[2] == pytest.approx(2.0, abs=1e-3)

    def test_unknown_order_is_rejected_by_the_bound(self, scenario):
        _, purse, sampled = scenario
        with pytest.raises(ValueError):
            worst_case_bound(BoundQuery(purse, sampled.average, 1.0), witness_trials=0, order=0)

    @pytest.mark.slow
    @pytest.mark.parametrize("lam", [1.0, 0.0])
    def test_second_order_bound_is_no_looser(self, scenario, lam):
        gt, purse, sampled = scenario
        query = BoundQuery(purse, sampled.average, lam)
        first = worst_case_bound(query, witness_trials=0)
        second = worst_case_bound(query, witness_trials=0, order=2)
        assert second.bounded
        assert second.order == 2
        assert second.to_dict()["order"] == 2
        assert second.d_squared_upper <= first.d_squared_upper + 1e-5
        assert second.d_squared_upper + 1e-5 >= pose_distance_sq(gt, sampled.average, lam)
