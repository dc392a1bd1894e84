"""Rotation projection, averaging and distances"""
from typing import Sequence

import numpy as np

from common.errors import EmptyInput, OutOfRange, RankDeficient
from geom3d.types import Pose, Rotation3

FROB_MAX = 2.0 * np.sqrt(2.0)
RANGE_TOL = 1e-9


def project_so3(m) -> Rotation3:
    """
    Nearest rotation in Frobenius norm.

    m = U S V^T  ->  U diag(1, 1, det(U V^T)) V^T
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise ValueError("project_so3 needs a finite 3x3 matrix")
    u, sv, vt = np.linalg.svd(m)
    if sv[0] == 0.0 or sv[1] <= 1e-12 * sv[0]:
        raise RankDeficient(f"singular values {sv} leave the projection ambiguous")
    d = np.sign(np.linalg.det(u @ vt))
    return Rotation3(u @ np.diag([1.0, 1.0, d]) @ vt)


def kabsch(src: np.ndarray, dst: np.ndarray):
    """Rigid (R, t) minimizing sum ||R src_i + t - dst_i||^2"""
    c_src = src.mean(axis=0)
    c_dst = dst.mean(axis=0)
    h = (src - c_src).T @ (dst - c_dst)
    u, _, vt = np.linalg.svd(h)
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T))
    if d == 0:
        d = 1.0
    r = v @ np.diag([1.0, 1.0, d]) @ u.T
    return r, c_dst - r @ c_src


def average_poses(poses: Sequence[Pose]) -> Pose:
    """Chordal rotation mean and arithmetic translation mean"""
    if len(poses) == 0:
        raise EmptyInput("cannot average an empty list of poses")
    rot_sum = np.sum([p.R for p in poses], axis=0)
    t_mean = np.mean([p.t for p in poses], axis=0)
    return Pose(project_so3(rot_sum), t_mean)


def frobenius_to_angle(d_frob: float) -> float:
    """Angle theta with ||R1 - R2||_F = 2*sqrt(2)*sin(theta/2)"""
    if not (-RANGE_TOL <= d_frob <= FROB_MAX + RANGE_TOL):
        raise OutOfRange(f"Frobenius distance {d_frob} outside [0, 2*sqrt(2)]")
    ratio = np.clip(d_frob / FROB_MAX, 0.0, 1.0)
    return float(2.0 * np.arcsin(ratio))


def angle_to_frobenius(theta: float) -> float:
    return float(FROB_MAX * np.sin(theta / 2.0))


def rotation_angle_between(r1, r2) -> float:
    """Geodesic distance on SO(3), radians"""
    r1 = r1.m if isinstance(r1, Rotation3) else np.asarray(r1)
    r2 = r2.m if isinstance(r2, Rotation3) else np.asarray(r2)
    # the Frobenius route is accurate near zero where arccos of the trace is not
    return frobenius_to_angle(min(float(np.linalg.norm(r1 - r2)), FROB_MAX))
