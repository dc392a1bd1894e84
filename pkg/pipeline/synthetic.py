"""
Synthetic scenes standing in for a keypoint detector.

Viewpoints are drawn i.i.d. (uniform direction on the upper hemisphere
around the object, uniform roll, uniform distance), so any split of the
scenes into calibration and test sets is exchangeable.
"""
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from common.errors import OutOfFrustum
from config.reader import NoiseSpec, VoteSpec
from conformal.heatmap import Heatmap
from conformal.voting import VoteField
from geom3d import CameraIntrinsics, ObjectModel, Pose, Rotation3, depths, project_points

logger = logging.getLogger(__name__)

MAX_RETRIES = 100


@dataclass(frozen=True)
class SyntheticScene:
    """
    One generated image.

    labels are the exact projections of the model keypoints under the
    groundtruth pose; detected are the (noisy) blob centers the heatmap was
    drawn around; outliers flags the channels that carry an outlier blob.
    """
    scene_id: int
    pose: Pose
    labels: np.ndarray
    heatmap: Optional[Heatmap]
    detected: np.ndarray
    outliers: np.ndarray
    model: ObjectModel
    intrinsics: CameraIntrinsics
    noise: NoiseSpec

    def without_heatmap(self) -> "SyntheticScene":
        return replace(self, heatmap=None)


def look_at_rotation(direction: np.ndarray, roll: float) -> np.ndarray:
    """Object-to-camera rotation for a camera sitting along ``direction`` and looking at the origin"""
    z = -direction / np.linalg.norm(direction)
    ref = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x0 = ref - (ref @ z) * z
    x0 /= np.linalg.norm(x0)
    y0 = np.cross(z, x0)
    x = np.cos(roll) * x0 + np.sin(roll) * y0
    y = np.cross(z, x)
    return np.vstack([x, y, z])


def sample_viewpoint(rng: np.random.Generator, intrinsics: CameraIntrinsics, image_size: Tuple[int, int],
                     distance_range: Tuple[float, float] = (0.5, 2.0)) -> Pose:
    """Uniform hemisphere direction and roll; object center at a uniform distance and image position"""
    height = rng.random()
    phi = 2.0 * np.pi * rng.random()
    ring = np.sqrt(1.0 - height**2)
    direction = np.array([ring * np.cos(phi), ring * np.sin(phi), height])
    rot = look_at_rotation(direction, 2.0 * np.pi * rng.random())
    distance = rng.uniform(*distance_range)
    width, img_height = image_size
    # object center lands in the central half of the image
    pixel = np.array([rng.uniform(0.25, 0.75) * width, rng.uniform(0.25, 0.75) * img_height, 1.0])
    center_cam = intrinsics.inverse @ pixel
    center_cam *= distance / center_cam[2]
    return Pose(Rotation3(rot), center_cam)


def in_frustum(pose: Pose, model: ObjectModel, intrinsics: CameraIntrinsics, image_size: Tuple[int, int],
               margin_px: float) -> bool:
    if np.any(depths(pose, model.keypoints3d) <= 0):
        return False
    px = project_points(pose, intrinsics, model.keypoints3d)
    width, height = image_size
    return bool(np.all(px >= margin_px) and np.all(px[:, 0] <= width - 1 - margin_px)
                and np.all(px[:, 1] <= height - 1 - margin_px))


def gaussian_blob(center: np.ndarray, sigma: float, image_size: Tuple[int, int]) -> np.ndarray:
    """Discretized isotropic Gaussian of unit mass (before cropping) on an H x W grid"""
    width, height = image_size
    gx = np.exp(-0.5 * ((np.arange(width) - center[0]) / sigma) ** 2)
    gy = np.exp(-0.5 * ((np.arange(height) - center[1]) / sigma) ** 2)
    blob = np.outer(gy, gx)
    total = blob.sum()
    return blob / total if total > 0 else blob


def render_heatmap(centers: np.ndarray, outlier_px: np.ndarray, outliers: np.ndarray, noise: NoiseSpec,
                   image_size: Tuple[int, int]) -> Heatmap:
    width, height = image_size
    raw = np.zeros((centers.shape[0], height, width))
    for k, center in enumerate(centers):
        if outliers[k]:
            raw[k] = (1.0 - noise.w_out) * gaussian_blob(center, noise.sigma_blob, image_size)
            raw[k] += noise.w_out * gaussian_blob(outlier_px[k], noise.sigma_blob, image_size)
        else:
            raw[k] = gaussian_blob(center, noise.sigma_blob, image_size)
    return Heatmap.from_raw(raw)


def generate_scene(model: ObjectModel, intrinsics: CameraIntrinsics, noise: NoiseSpec,
                   rng: np.random.Generator, scene_id: int = 0, image_size: Tuple[int, int] = (640, 480),
                   distance_range: Tuple[float, float] = (0.5, 2.0), margin_px: float = 10.0,
                   with_heatmap: bool = True) -> SyntheticScene:
    """
    Draw a groundtruth pose and a heatmap per keypoint.

    Each channel is a Gaussian blob of width sigma_blob centered at the true
    projection plus N(0, sigma_det^2) offset; with probability p_out a second
    blob at a uniform pixel takes mass w_out.

    Raises:
        OutOfFrustum: no viewpoint kept every keypoint inside the image after 100 draws
    """
    for attempt in range(MAX_RETRIES):
        pose = sample_viewpoint(rng, intrinsics, image_size, distance_range)
        if in_frustum(pose, model, intrinsics, image_size, margin_px):
            break
        logger.debug(f"Scene {scene_id}: viewpoint {attempt} leaves the frustum")
    else:
        raise OutOfFrustum(f"scene {scene_id}: no viewpoint inside the image after {MAX_RETRIES} draws")

    labels = project_points(pose, intrinsics, model.keypoints3d)
    k = model.num_keypoints
    detected = labels + noise.sigma_det * rng.standard_normal((k, 2))
    outliers = rng.random(k) < noise.p_out
    width, height = image_size
    outlier_px = np.column_stack([rng.uniform(0, width - 1, k), rng.uniform(0, height - 1, k)])
    heatmap = render_heatmap(detected, outlier_px, outliers, noise, image_size) if with_heatmap else None
    return SyntheticScene(scene_id, pose, labels, heatmap, detected, outliers, model, intrinsics, noise)


def generate_vote_fields(scene: SyntheticScene, votes: VoteSpec, rng: np.random.Generator) -> List[VoteField]:
    """
    Pixel-wise unit vectors pointing at the detected keypoints.

    Votes sit uniformly in a disk around each detection; inlier directions
    get Gaussian angular noise, a fraction of votes points anywhere.
    """
    fields = []
    noise = np.radians(votes.angle_noise_deg)
    for center in scene.detected:
        radius = votes.radius_px * np.sqrt(rng.random(votes.n_votes))
        theta = 2.0 * np.pi * rng.random(votes.n_votes)
        pixels = center + np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
        toward = np.arctan2(center[1] - pixels[:, 1], center[0] - pixels[:, 0])
        angle = toward + noise * rng.standard_normal(votes.n_votes)
        wild = rng.random(votes.n_votes) < votes.outlier_frac
        angle[wild] = 2.0 * np.pi * rng.random(int(wild.sum()))
        fields.append(VoteField(pixels, np.column_stack([np.cos(angle), np.sin(angle)])))
    return fields
