"""Worst-case error bounds over the PURSE"""
from bounds.moment import moment_lift, moment_relax, monomial_basis, relax
from bounds.qcqp import (Qcqp, assemble_qcqp, distance_objective, lift, pose_distance_sq, relaxation_value,
                         shor_relax, so3_constraints)
from bounds.worst_case import (BOUNDED, PURSE_EMPTY, BoundQuery, BoundResult, analytic_cap, sample_min_bound,
                               worst_case_bound)

__all__ = [
    "BOUNDED", "PURSE_EMPTY", "BoundQuery", "BoundResult", "Qcqp", "analytic_cap", "assemble_qcqp",
    "distance_objective", "lift", "moment_lift", "moment_relax", "monomial_basis", "pose_distance_sq", "relax",
    "relaxation_value", "sample_min_bound", "shor_relax", "so3_constraints", "worst_case_bound",
]
