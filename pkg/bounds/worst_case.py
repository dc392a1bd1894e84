"""Certified worst-case rotation and translation error bounds"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from common.errors import NumericalFailure
from geom3d import Pose, frobenius_to_angle
from geom3d.rotation import FROB_MAX
from purse.builder import Purse
from purse.ransag import ransag
from sdp import SdpStatus, solve_sdp
from bounds.moment import relax
from bounds.qcqp import assemble_qcqp, pose_distance_sq

logger = logging.getLogger(__name__)

BOUNDED = "Bounded"
PURSE_EMPTY = "PurseEmpty"
WITNESS_TRIALS = 1000
WITNESS_TOL = 1e-6
ROTATION_CAP = FROB_MAX**2


@dataclass(frozen=True)
class BoundQuery:
    purse: Purse
    ref_pose: Pose
    lam: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")


@dataclass(frozen=True)
class BoundResult:
    status: str
    lam: float
    d_squared_upper: float = float("nan")
    angle_upper: Optional[float] = None
    lower_witness: Optional[Tuple[Pose, float]] = None
    sdp_status: Optional[str] = None
    iterations: int = 0
    order: int = 1

    @property
    def d_upper(self) -> float:
        return float(np.sqrt(self.d_squared_upper))

    @property
    def bounded(self) -> bool:
        return self.status == BOUNDED

    @property
    def witness_value(self) -> Optional[float]:
        return None if self.lower_witness is None else self.lower_witness[1]

    def to_dict(self) -> dict:
        data = {"status": self.status, "lambda": self.lam, "d_squared_upper": self.d_squared_upper,
                "d_upper": self.d_upper, "witness_value": self.witness_value,
                "sdp_status": self.sdp_status, "iterations": self.iterations, "order": self.order}
        if self.angle_upper is not None:
            data["angle_upper"] = self.angle_upper
            data["angle_deg"] = float(np.degrees(self.angle_upper))
        return data


def analytic_cap(query: BoundQuery) -> float:
    """Largest distance any pose in the translation ball can have from the reference"""
    reach = query.purse.trans_bound + float(np.linalg.norm(query.ref_pose.t))
    return query.lam * ROTATION_CAP + (1.0 - query.lam) * reach**2


def _witness(query: BoundQuery, samples: Optional[Sequence[Pose]], trials: int,
             seed: int) -> Optional[Tuple[Pose, float]]:
    if samples is None:
        source = query.purse.source
        if trials < 1 or source is None:
            return None
        result = ransag(query.purse, source.prediction, source.model, source.intrinsics, trials, seed)
        if result.fallback_used:
            return None
        samples = result.samples
    if not samples:
        return None
    values = [pose_distance_sq(p, query.ref_pose, query.lam) for p in samples]
    best = int(np.argmax(values))
    return samples[best], float(values[best])


def worst_case_bound(query: BoundQuery, samples: Optional[Sequence[Pose]] = None,
                     witness_trials: int = WITNESS_TRIALS, seed: int = 0, order: int = 1,
                     **solver_args) -> BoundResult:
    """
    Upper bound on max over the PURSE of lam ||R - Rbar||_F^2 + (1 - lam) ||t - tbar||^2.

    The relaxation of the given order (1: Shor, 2: moment) is solved, its
    value clamped at 0 and capped at the analytic maximum. Order 2 is never
    looser than order 1. The largest distance among PURSE samples is
    attached as a lower witness; pass ``samples`` to reuse RANSAG output,
    otherwise ``witness_trials`` RANSAG trials are drawn with ``seed``
    when the PURSE carries its source.

    Returns:
        BoundResult with status PurseEmpty when the relaxation is infeasible
    """
    qcqp = assemble_qcqp(query.purse, query.ref_pose, query.lam)
    solution = solve_sdp(relax(qcqp, order), **solver_args)
    if solution.status == SdpStatus.PRIMAL_INFEASIBLE:
        logger.info("Relaxation is infeasible: the PURSE is empty")
        return BoundResult(PURSE_EMPTY, query.lam, sdp_status=solution.status.value,
                           iterations=solution.iterations, order=order)
    if solution.status != SdpStatus.OPTIMAL:
        raise NumericalFailure(f"bound relaxation ended with {solution.status.value}")

    d_sq = min(max(solution.objective_value + qcqp.objective[2], 0.0), analytic_cap(query))
    angle = None
    if query.lam == 1.0:
        angle = frobenius_to_angle(min(float(np.sqrt(d_sq)), FROB_MAX))
    witness = _witness(query, samples, witness_trials, seed)
    if witness is not None and witness[1] > d_sq + WITNESS_TOL:
        logger.warning(f"Witness distance {witness[1]:.6g} exceeds the bound {d_sq:.6g}")
    return BoundResult(BOUNDED, query.lam, d_sq, angle, witness, solution.status.value, solution.iterations,
                       order)


def sample_min_bound(purse: Purse, candidate_poses: List[Pose], lam: float, order: int = 1,
                     **solver_args) -> Tuple[Pose, BoundResult]:
    """
    Tightest bound over candidate reference poses.

    Returns:
        (best pose, its BoundResult); ties go to the earliest candidate. When
        the PURSE is empty, the first candidate with its PurseEmpty result.
    """
    if not candidate_poses:
        raise ValueError("sample_min_bound needs at least one candidate pose")
    best_pose, best = None, None
    for pose in candidate_poses:
        result = worst_case_bound(BoundQuery(purse, pose, lam), witness_trials=0, order=order,
                                  **solver_args)
        if not result.bounded:
            return candidate_poses[0], result
        if best is None or result.d_squared_upper < best.d_squared_upper:
            best_pose, best = pose, result
    return best_pose, best
