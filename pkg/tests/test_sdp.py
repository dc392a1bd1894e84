"""Tests for the SDP containers and the interior point solver."""

import os

import numpy as np
import pytest
from scipy import sparse

from common.errors import CertificateUnavailable, DimensionMismatch
from sdp import SdpProblem, SdpStatus, infeasibility_certificate, solve_sdp, verify_certificate


def _unit(d, i, j):
    m = np.zeros((d, d))
    m[i, j] = m[j, i] = 1.0
    return m


@pytest.fixture
def trace_problem() -> SdpProblem:
    """max <diag(1,2,3), X> s.t. tr X = 1; optimum 3"""
    return SdpProblem.from_constraints(np.diag([1.0, 2.0, 3.0]), [(np.eye(3), 1.0)])


@pytest.fixture
def trust_region() -> SdpProblem:
    """
    Lifted max ||x - a||^2 over ||x|| <= 4 with a = e_1; the relaxation is
    tight and the optimum is (4 + 1)^2 = 25 at x = -4 e_1.
    """
    a = np.array([1.0, 0.0, 0.0])
    c = np.zeros((4, 4))
    c[0, 0] = a @ a
    c[0, 1:] = c[1:, 0] = -a
    c[1:, 1:] = np.eye(3)
    ball = np.zeros((4, 4))
    ball[1:, 1:] = np.eye(3)
    return SdpProblem.from_constraints(c, [(_unit(4, 0, 0), 1.0)], [(ball, 16.0)])


class TestSolve:

    def test_trace_problem(self, trace_problem):
        sol = solve_sdp(trace_problem)
        assert sol.status == SdpStatus.OPTIMAL
        assert sol.objective_value == pytest.approx(3.0, abs=1e-6)
        assert sol.x[2, 2] == pytest.approx(1.0, abs=1e-5)

    def test_trust_region(self, trust_region):
        sol = solve_sdp(trust_region)
        assert sol.optimal
        assert sol.objective_value == pytest.approx(25.0, abs=1e-4)
        eq, ineq = trust_region.residuals(sol.x)
        assert np.all(np.abs(eq) < 1e-6)
        assert np.all(ineq < 1e-5)
        assert np.linalg.eigvalsh(sol.x)[0] > -1e-8
        assert sol.x[0, 1] == pytest.approx(-4.0, abs=1e-3)

    def test_objective_is_upper_end_of_gap(self, trust_region):
        sol = solve_sdp(trust_region)
        assert sol.objective_value == max(sol.primal_value, sol.dual_value)
        assert sol.duality_gap >= 0

    def test_iteration_limit(self, trust_region):
        sol = solve_sdp(trust_region, max_iters=1)
        assert sol.status != SdpStatus.OPTIMAL
        assert sol.iterations <= 1

    def test_looser_tolerance_needs_fewer_iterations(self, trust_region):
        tight = solve_sdp(trust_region, tol=1e-8)
        loose = solve_sdp(trust_region, tol=1e-4)
        assert loose.optimal and tight.optimal
        assert loose.iterations <= tight.iterations

    def test_unknown_option(self, trace_problem):
        with pytest.raises(TypeError):
            solve_sdp(trace_problem, warm_start=True)

    def test_bad_option_value(self, trace_problem):
        with pytest.raises(ValueError):
            solve_sdp(trace_problem, step=1.5)

    def test_unbounded_is_not_optimal(self):
        problem = SdpProblem.from_constraints(_unit(2, 0, 0), [(_unit(2, 1, 1), 1.0)])
        sol = solve_sdp(problem)
        assert sol.status in (SdpStatus.DUAL_INFEASIBLE, SdpStatus.MAX_ITERATIONS, SdpStatus.NUMERICAL_FAILURE)


class TestInfeasibility:

    def test_inconsistent_equalities_caught_in_presolve(self):
        e00 = _unit(2, 0, 0)
        problem = SdpProblem.from_constraints(np.eye(2), [(e00, 1.0), (e00, 2.0)])
        sol = solve_sdp(problem)
        assert sol.status == SdpStatus.PRIMAL_INFEASIBLE
        assert sol.iterations == 0
        cert = infeasibility_certificate(problem, sol)
        assert verify_certificate(problem, cert)

    def test_negative_trace(self):
        problem = SdpProblem.from_constraints(np.eye(3), [], [(np.eye(3), -1.0)])
        sol = solve_sdp(problem)
        assert sol.status == SdpStatus.PRIMAL_INFEASIBLE
        assert sol.x is None
        cert = infeasibility_certificate(problem, sol)
        assert verify_certificate(problem, cert, tol=1e-6)
        assert np.all(cert.w >= 0)

    def test_certificate_check_rejects_nonsense(self, trace_problem):
        cert = infeasibility_certificate(SdpProblem.from_constraints(np.eye(3), [], [(np.eye(3), -1.0)]))
        assert not verify_certificate(trace_problem, cert)

    def test_feasible_problem_has_no_certificate(self, trace_problem):
        with pytest.raises(CertificateUnavailable):
            infeasibility_certificate(trace_problem)


class TestProblem:

    def test_objective_must_be_symmetric(self):
        c = np.zeros((2, 2))
        c[0, 1] = 1.0
        with pytest.raises(ValueError):
            SdpProblem(2, c)

    def test_sparse_rows_match_dense_matrices(self, trace_problem):
        rows = sparse.csr_matrix(np.eye(3).reshape(1, 9))
        problem = SdpProblem(3, np.diag([1.0, 2.0, 3.0]), rows, [1.0])
        np.testing.assert_array_equal(problem.eq_matrices(), trace_problem.eq_matrices())
        assert solve_sdp(problem).objective_value == pytest.approx(3.0, abs=1e-6)
        with pytest.raises(ValueError):
            SdpProblem(2, np.eye(2), sparse.csr_matrix(np.array([[0.0, 1.0, 0.0, 0.0]])), [0.0])
        with pytest.raises(DimensionMismatch):
            SdpProblem(2, np.eye(2), sparse.csr_matrix(np.ones((1, 9))), [0.0])

    def test_sizes_must_agree(self):
        with pytest.raises(DimensionMismatch):
            SdpProblem(3, np.eye(2))
        with pytest.raises(DimensionMismatch):
            SdpProblem(2, np.eye(2), [np.eye(2)], [1.0, 2.0])

    def test_json_dump(self, trust_region, tmp_path):
        path = os.path.join(tmp_path, "sdp.json")
        trust_region.to_json(path)
        loaded = SdpProblem.from_json(path)
        assert loaded.dim == 4
        np.testing.assert_array_equal(loaded.c, trust_region.c)
        np.testing.assert_array_equal(loaded.ineq_matrices(), trust_region.ineq_matrices())
        np.testing.assert_array_equal(loaded.eq_b, trust_region.eq_b)
