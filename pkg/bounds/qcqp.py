"""
Pose-to-PURSE distance as a QCQP in s = [vec(R); t] and its Shor relaxation.

Every quadratic is stored as (Q, q, r) and stands for s^T Q s + 2 q^T s + r.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from common.errors import DimensionMismatch
from geom3d import Pose, rotation_indices
from purse.builder import DEPTH_MIN, Purse
from sdp import SdpProblem

logger = logging.getLogger(__name__)

Quadratic = Tuple[np.ndarray, np.ndarray, float]


@dataclass(frozen=True)
class Qcqp:
    """maximize f_0(s) subject to f_i(s) = 0 (equalities) and g_j(s) <= 0 (inequalities)"""
    objective: Quadratic
    equalities: List[Quadratic] = field(default_factory=list)
    inequalities: List[Quadratic] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)

    def __post_init__(self):
        n = self.num_vars
        for quad in [self.objective, *self.equalities, *self.inequalities]:
            if np.shape(quad[0]) != (n, n) or np.shape(quad[1]) != (n,):
                raise DimensionMismatch(f"every quadratic must act on {n} variables")

    @property
    def num_vars(self) -> int:
        return np.shape(self.objective[0])[0]

    @staticmethod
    def evaluate(quad: Quadratic, s: np.ndarray) -> float:
        q_mat, q_lin, q_const = quad
        return float(s @ q_mat @ s + 2.0 * q_lin @ s + q_const)

    def objective_value(self, s: np.ndarray) -> float:
        return self.evaluate(self.objective, s)

    def constraint_values(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        eq = np.array([self.evaluate(q, s) for q in self.equalities])
        ineq = np.array([self.evaluate(q, s) for q in self.inequalities])
        return eq, ineq

    def is_feasible(self, s: np.ndarray, tol: float = 1e-9) -> bool:
        eq, ineq = self.constraint_values(s)
        return bool(np.all(np.abs(eq) <= tol) and np.all(ineq <= tol))


def _bilinear(n: int, pairs, coef: float = 1.0) -> np.ndarray:
    """Symmetric Q with s^T Q s = coef * sum over pairs of s_a s_b"""
    q = np.zeros((n, n))
    for a, b in pairs:
        q[a, b] += 0.5 * coef
        q[b, a] += 0.5 * coef
    return q


def so3_constraints() -> List[Quadratic]:
    """
    Six row-orthonormality equalities r_i . r_j = delta_ij followed by nine
    handedness equalities r_i x r_j = r_k for the cyclic (i, j, k).
    """
    idx = rotation_indices()
    quads = []
    for i in range(3):
        for j in range(i, 3):
            q = _bilinear(12, [(idx[i, c], idx[j, c]) for c in range(3)])
            quads.append((q, np.zeros(12), -1.0 if i == j else 0.0))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        for comp in range(3):
            a, b = (comp + 1) % 3, (comp + 2) % 3
            q = _bilinear(12, [(idx[i, a], idx[j, b])]) + _bilinear(12, [(idx[i, b], idx[j, a])], -1.0)
            lin = np.zeros(12)
            lin[idx[k, comp]] = -0.5
            quads.append((q, lin, 0.0))
    return quads


def distance_objective(ref_pose: Pose, lam: float) -> Quadratic:
    """
    lam ||R - Rbar||_F^2 + (1 - lam) ||t - tbar||^2 with ||R||_F^2 = 3 folded
    into the constant, so the rotation part is affine in s.
    """
    rbar = ref_pose.R.reshape(-1, order="F")
    tbar = ref_pose.t
    q = np.zeros((12, 12))
    q[9:, 9:] = (1.0 - lam) * np.eye(3)
    lin = np.concatenate([-lam * rbar, -(1.0 - lam) * tbar])
    const = lam * (3.0 + float(rbar @ rbar)) + (1.0 - lam) * float(tbar @ tbar)
    return q, lin, const


def pose_distance_sq(pose: Pose, ref_pose: Pose, lam: float) -> float:
    return float(lam * np.sum((pose.R - ref_pose.R) ** 2) + (1.0 - lam) * np.sum((pose.t - ref_pose.t) ** 2))


def assemble_qcqp(purse: Purse, ref_pose: Pose, lam: float) -> Qcqp:
    """
    Worst-case distance from ``ref_pose`` over the PURSE.

    Constraints, in order: 15 SO(3) equalities; K PURSE quadratics
    s^T A_k s <= 0; K depths b_k^T s >= delta; the ball ||t||^2 <= trans_bound^2.
    """
    eqs = so3_constraints()
    labels = [f"so3_{i}" for i in range(len(eqs))]
    ineqs = []
    for k in range(purse.num_keypoints):
        ineqs.append((purse.a[k], np.zeros(12), 0.0))
        labels.append(f"purse_{k}")
    for k in range(purse.num_keypoints):
        ineqs.append((np.zeros((12, 12)), -0.5 * purse.b[k], DEPTH_MIN))
        labels.append(f"depth_{k}")
    ball = np.zeros((12, 12))
    ball[9:, 9:] = np.eye(3)
    ineqs.append((ball, np.zeros(12), -purse.trans_bound**2))
    labels.append("trans_ball")
    return Qcqp(distance_objective(ref_pose, lam), eqs, ineqs, labels)


def _homogenize(quad: Quadratic) -> np.ndarray:
    q_mat, q_lin, _ = quad
    n = q_lin.size
    m = np.zeros((n + 1, n + 1))
    m[0, 1:] = q_lin
    m[1:, 0] = q_lin
    m[1:, 1:] = q_mat
    return m


def lift(s: np.ndarray) -> np.ndarray:
    """[1; s][1; s]^T"""
    v = np.concatenate([[1.0], np.asarray(s, dtype=np.float64)])
    return np.outer(v, v)


def shor_relax(qcqp: Qcqp) -> SdpProblem:
    """
    First-order relaxation over X = [1 s^T; s S], X PSD, X_00 = 1.

    Constants move to the right-hand sides; the objective constant is left
    out and must be added back (``qcqp.objective[2]``).
    """
    n = qcqp.num_vars
    e00 = np.zeros((n + 1, n + 1))
    e00[0, 0] = 1.0
    equalities = [(e00, 1.0)] + [(_homogenize(q), -float(q[2])) for q in qcqp.equalities]
    inequalities = [(_homogenize(q), -float(q[2])) for q in qcqp.inequalities]
    logger.debug(f"Shor relaxation of size {n + 1} with {len(equalities)} equalities "
                 f"and {len(inequalities)} inequalities")
    return SdpProblem.from_constraints(_homogenize(qcqp.objective), equalities, inequalities)


def relaxation_value(qcqp: Qcqp, x: np.ndarray) -> float:
    """Objective of the relaxed problem at X, constant included"""
    return float(np.sum(_homogenize(qcqp.objective) * x) + qcqp.objective[2])

