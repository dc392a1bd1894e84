"""Minimal (P3P) and non-minimal (PnP) absolute pose solvers"""
import itertools
import logging
from typing import List

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from common.errors import DegenerateConfiguration, SolverDiverged
from geom3d.camera import bearing_vectors
from geom3d.rotation import kabsch
from geom3d.types import CameraIntrinsics, Pose, Rotation3, orthonormalize

logger = logging.getLogger(__name__)

IMAG_TOL = 1e-8
COLLINEAR_TOL = 1e-9


def _as_correspondences(pixels, points3d, count=None):
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    points3d = np.asarray(points3d, dtype=np.float64).reshape(-1, 3)
    if pixels.shape[0] != points3d.shape[0]:
        raise ValueError(f"{pixels.shape[0]} pixels for {points3d.shape[0]} points")
    if count is not None and pixels.shape[0] != count:
        raise ValueError(f"expected {count} correspondences, got {pixels.shape[0]}")
    if not (np.all(np.isfinite(pixels)) and np.all(np.isfinite(points3d))):
        raise ValueError("correspondences must be finite")
    return pixels, points3d


def is_collinear(points3d: np.ndarray) -> bool:
    e1 = points3d[1] - points3d[0]
    e2 = points3d[2] - points3d[0]
    scale = max(np.dot(e1, e1), np.dot(e2, e2))
    return scale == 0.0 or np.linalg.norm(np.cross(e1, e2)) <= COLLINEAR_TOL * scale


def _real_roots(poly: Polynomial) -> np.ndarray:
    coef = poly.coef.copy()
    peak = np.max(np.abs(coef))
    if peak == 0.0:
        return np.array([])
    coef = coef / peak
    while len(coef) > 1 and abs(coef[-1]) <= 1e-14:
        coef = coef[:-1]
    if len(coef) < 2:
        return np.array([])
    trimmed = Polynomial(coef)
    roots = trimmed.roots()
    real = roots[np.abs(roots.imag) <= IMAG_TOL * np.maximum(1.0, np.abs(roots))].real
    deriv = trimmed.deriv()
    # Newton polish against the companion-matrix round-off
    for _ in range(3):
        val = trimmed(real)
        slope = deriv(real)
        safe = slope != 0.0
        cand = np.where(safe, real - val / np.where(safe, slope, 1.0), real)
        real = np.where(np.abs(trimmed(cand)) < np.abs(val), cand, real)
    return real


def p3p(pixels, points3d, intrinsics: CameraIntrinsics) -> List[Pose]:
    """
    Grunert-style minimal solver for three pixel-point correspondences.

    The depth ratios u = s2/s1, v = s3/s1 satisfy two quadratics in u whose
    resultant is a quartic in v; its real roots are found from the
    companion matrix and each gives one candidate pose.

    Returns:
        up to 4 poses with positive depth for all three points; an empty list
        for collinear points or when no real root exists
    """
    pixels, points3d = _as_correspondences(pixels, points3d, count=3)
    if is_collinear(points3d):
        logger.debug("p3p: collinear object points")
        return []

    f = bearing_vectors(pixels, intrinsics)
    cos_a = float(f[1] @ f[2])
    cos_b = float(f[0] @ f[2])
    cos_g = float(f[0] @ f[1])
    a2 = float(np.sum((points3d[1] - points3d[2]) ** 2))
    b2 = float(np.sum((points3d[0] - points3d[2]) ** 2))
    c2 = float(np.sum((points3d[0] - points3d[1]) ** 2))

    bv = Polynomial([1.0, -2.0 * cos_b, 1.0])
    v_sq = Polynomial([0.0, 0.0, 1.0])
    # c^2 (1+v^2-2v cos_b) = b^2 (1+u^2-2u cos_g)   ->  p2 u^2 + p1 u + p0 = 0
    p1 = Polynomial([2.0 * b2 * cos_g])
    p0 = c2 * bv - b2
    # a^2 (1+v^2-2v cos_b) = b^2 (u^2+v^2-2uv cos_a) ->  q2 u^2 + q1 u + q0 = 0
    q1 = Polynomial([0.0, 2.0 * b2 * cos_a])
    q0 = a2 * bv - b2 * v_sq
    # p2 = q2 = -b^2, so the resultant divided by b^2 reads:
    quartic = b2 * (q0 - p0) ** 2 + (q1 - p1) * (p1 * q0 - p0 * q1)

    poses = []
    for v in _real_roots(quartic):
        if v <= 0:
            continue
        denom = (p1 - q1)(v)
        if abs(denom) > 1e-12 * b2:
            u = (q0 - p0)(v) / denom
        else:
            # both quadratics share u; take the root of the first that best satisfies the second
            cand = np.roots([-b2, p1(v), p0(v)])
            cand = cand[np.abs(cand.imag) <= IMAG_TOL].real
            if cand.size == 0:
                continue
            resid = np.abs(-b2 * cand**2 + q1(v) * cand + q0(v))
            u = cand[np.argmin(resid)]
        if u <= 0:
            continue
        bv_val = bv(v)
        if bv_val <= 0:
            continue
        s1 = np.sqrt(b2 / bv_val)
        cam = np.vstack([s1 * f[0], u * s1 * f[1], v * s1 * f[2]])
        # reject spurious roots introduced by round-off
        d_cam = np.array([np.sum((cam[1] - cam[2]) ** 2), np.sum((cam[0] - cam[2]) ** 2),
                          np.sum((cam[0] - cam[1]) ** 2)])
        if np.max(np.abs(d_cam - [a2, b2, c2]) / np.array([a2, b2, c2])) > 1e-4:
            continue
        r, t = kabsch(points3d, cam)
        try:
            pose = Pose(Rotation3(orthonormalize(r)), t)
        except ValueError:
            continue
        if np.all(pose.transform(points3d)[:, 2] > 0):
            poses.append(pose)
    return poses


def _dlt(pixels, points3d, intrinsics):
    n = pixels.shape[0]
    homog = np.hstack([pixels, np.ones((n, 1))]) @ intrinsics.inverse.T
    x = homog[:, 0] / homog[:, 2]
    y = homog[:, 1] / homog[:, 2]
    xh = np.hstack([points3d, np.ones((n, 1))])
    a = np.zeros((2 * n, 12))
    a[0::2, 0:4] = xh
    a[0::2, 8:12] = -x[:, None] * xh
    a[1::2, 4:8] = xh
    a[1::2, 8:12] = -y[:, None] * xh
    _, _, vt = np.linalg.svd(a)
    m = vt[-1].reshape(3, 4)
    det = np.linalg.det(m[:, :3])
    if det == 0.0 or not np.isfinite(det):
        return None
    if det < 0:
        m = -m
    u, sv, vt = np.linalg.svd(m[:, :3])
    return Pose(Rotation3(orthonormalize(u @ vt)), m[:, 3] / sv.mean())


def _residuals(pose: Pose, pixels, points3d, intrinsics):
    cam = pose.transform(points3d)
    if np.any(cam[:, 2] <= 0):
        return None
    proj = cam @ intrinsics.p.T
    return (proj[:, :2] / proj[:, 2:3] - pixels).ravel()


def _initial_candidates(pixels, points3d, intrinsics):
    candidates = []
    n = pixels.shape[0]
    if n >= 6:
        dlt_pose = _dlt(pixels, points3d, intrinsics)
        if dlt_pose is not None:
            candidates.append(dlt_pose)
    # the best-spread triple gives a P3P seed for any K >= 4
    pool = range(min(n, 10))
    best = max(itertools.combinations(pool, 3),
               key=lambda ijk: np.linalg.norm(np.cross(points3d[ijk[1]] - points3d[ijk[0]],
                                                       points3d[ijk[2]] - points3d[ijk[0]])))
    idx = list(best)
    candidates.extend(p3p(pixels[idx], points3d[idx], intrinsics))
    return candidates


def pnp(pixels, points3d, intrinsics: CameraIntrinsics, max_iters: int = 50, step_tol: float = 1e-12) -> Pose:
    """
    Reprojection-error minimizing pose from K >= 4 correspondences.

    DLT (K >= 6) and P3P seeds are scored on all points; the best seed is
    refined with Levenberg-Marquardt over a rotation-vector increment and
    the translation.
    """
    pixels, points3d = _as_correspondences(pixels, points3d)
    if pixels.shape[0] < 4:
        raise DegenerateConfiguration(f"pnp needs at least 4 correspondences, got {pixels.shape[0]}")

    best_pose, best_cost = None, np.inf
    for cand in _initial_candidates(pixels, points3d, intrinsics):
        res = _residuals(cand, pixels, points3d, intrinsics)
        if res is None:
            continue
        cost = 0.5 * float(res @ res)
        if cost < best_cost:
            best_pose, best_cost = cand, cost
    if best_pose is None:
        raise DegenerateConfiguration("no initial pose with all points in front of the camera")

    r0 = best_pose.R

    def fun(x):
        r = Rotation.from_rotvec(x[:3]).as_matrix() @ r0
        cam = points3d @ r.T + x[3:]
        proj = cam @ intrinsics.p.T
        return (proj[:, :2] / proj[:, 2:3] - pixels).ravel()

    x0 = np.concatenate([np.zeros(3), best_pose.t])
    result = least_squares(fun, x0, method="lm", xtol=step_tol, ftol=step_tol, gtol=1e-15,
                           max_nfev=max_iters * (x0.size + 1))
    if not np.all(np.isfinite(result.x)) or result.cost > best_cost * (1.0 + 1e-9) + 1e-18:
        raise SolverDiverged(f"refinement raised the cost from {best_cost:.3g} to {result.cost:.3g}")
    pose = Pose(Rotation3(orthonormalize(Rotation.from_rotvec(result.x[:3]).as_matrix() @ r0)), result.x[3:])
    if _residuals(pose, pixels, points3d, intrinsics) is None:
        raise SolverDiverged("refined pose puts points behind the camera")
    logger.debug(f"pnp: cost {best_cost:.3e} -> {result.cost:.3e} in {result.nfev} evaluations")
    return pose
