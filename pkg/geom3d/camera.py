"""Pinhole projection"""
import numpy as np

from common.errors import NonPositiveDepth
from geom3d.types import CameraIntrinsics, Pose


def project(pose: Pose, intrinsics: CameraIntrinsics, point3d) -> np.ndarray:
    """
    Project one object-frame point to pixel coordinates.

    Args:
        pose: object-to-camera transform
        intrinsics: camera matrix P
        point3d: point Y in the object frame

    Returns:
        [P(RY+t)]_{1:2} / [P(RY+t)]_3
    """
    h = intrinsics.p @ pose.transform(np.asarray(point3d, dtype=np.float64).reshape(3))
    if not h[2] > 0:
        raise NonPositiveDepth(f"point has depth {h[2]:.6g}, must be positive")
    return h[:2] / h[2]


def project_points(pose: Pose, intrinsics: CameraIntrinsics, points3d: np.ndarray) -> np.ndarray:
    """Vectorized ``project`` for an (N,3) array; raises if any depth is not positive"""
    h = pose.transform(points3d) @ intrinsics.p.T
    if np.any(~(h[:, 2] > 0)):
        bad = int(np.argmin(h[:, 2]))
        raise NonPositiveDepth(f"point {bad} has depth {h[bad, 2]:.6g}, must be positive")
    return h[:, :2] / h[:, 2:3]


def depths(pose: Pose, points3d: np.ndarray) -> np.ndarray:
    return pose.transform(points3d)[..., 2]


def back_project(pixel, depth: float, pose: Pose, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Object-frame point that projects to ``pixel`` at camera depth ``depth``"""
    if not depth > 0:
        raise NonPositiveDepth(f"depth {depth} must be positive")
    ray = intrinsics.inverse @ np.array([pixel[0], pixel[1], 1.0])
    cam = ray * (depth / ray[2])
    return pose.R.T @ (cam - pose.t)


def bearing_vectors(pixels: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Unit rays through pixels (N,2) in the camera frame"""
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    homog = np.hstack([pixels, np.ones((pixels.shape[0], 1))])
    rays = homog @ intrinsics.inverse.T
    return rays / np.linalg.norm(rays, axis=1, keepdims=True)


def reprojection_errors(pose: Pose, intrinsics: CameraIntrinsics, points3d: np.ndarray,
                        pixels: np.ndarray) -> np.ndarray:
    """Per-point pixel distance between projections and observed pixels"""
    return np.linalg.norm(project_points(pose, intrinsics, points3d) - np.asarray(pixels), axis=1)


def reprojection_rms(pose: Pose, intrinsics: CameraIntrinsics, points3d: np.ndarray,
                     pixels: np.ndarray) -> float:
    return float(np.sqrt(np.mean(reprojection_errors(pose, intrinsics, points3d, pixels) ** 2)))
