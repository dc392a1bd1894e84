"""Random sample averaging over the PURSE"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg

from common.errors import NoValidSamples, NotPositiveDefinite, PoseUncertaintyError
from common.rng import stream
from conformal.prediction import PredictionSet
from geom3d import CameraIntrinsics, ObjectModel, Pose, average_poses, p3p, pnp
from geom3d.solvers import is_collinear
from purse.builder import Purse, purse_contains

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = 1000
FALLBACK_DIVISOR = 20


@dataclass(frozen=True)
class RansagResult:
    samples: List[Pose]
    average: Pose
    fallback_used: bool
    trials: int
    seed: int = 0
    accepted_trials: List[int] = field(default_factory=list)
    # fallback draw index of each sample; empty unless fallback_used
    fallback_draws: List[int] = field(default_factory=list)

    def to_dict(self, with_samples: bool = False) -> dict:
        data = {"average": self.average.to_dict(), "fallback_used": self.fallback_used,
                "trials": self.trials, "seed": self.seed, "n_samples": len(self.samples)}
        if with_samples:
            data["samples"] = [p.to_dict() for p in self.samples]
        return data


def sample_in_region(mu, lam, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """
    Uniform sample(s) from the ellipse (y - mu)^T Lambda (y - mu) <= 1.

    y = mu + L^-T u with L L^T = Lambda and u uniform in the unit disk.
    """
    mu = np.asarray(mu, dtype=np.float64).reshape(2)
    lam = np.asarray(lam, dtype=np.float64).reshape(2, 2)
    try:
        chol = linalg.cholesky(0.5 * (lam + lam.T), lower=True)
    except linalg.LinAlgError as e:
        raise NotPositiveDefinite(f"ellipse shape {lam.tolist()} is not positive definite") from e
    n = 1 if size is None else int(size)
    radius = np.sqrt(rng.random(n))
    angle = 2.0 * np.pi * rng.random(n)
    disk = np.vstack([radius * np.cos(angle), radius * np.sin(angle)])
    y = mu[:, None] + linalg.solve_triangular(chol, disk, trans="T", lower=True)
    return y[:, 0] if size is None else y.T


def _sample_keypoints(pred: PredictionSet, indices: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return np.array([sample_in_region(pred.centers[k], pred.shapes[k], rng) for k in indices])


def _trial_poses(purse: Purse, pred: PredictionSet, model: ObjectModel, intrinsics: CameraIntrinsics,
                 rng: np.random.Generator) -> List[Pose]:
    idx = rng.choice(model.num_keypoints, size=3, replace=False)
    points = model.keypoints3d[idx]
    if is_collinear(points):
        return []
    pixels = _sample_keypoints(pred, idx, rng)
    return [pose for pose in p3p(pixels, points, intrinsics) if purse_contains(purse, pose)]


def _fallback_pose(pred: PredictionSet, model: ObjectModel, intrinsics: CameraIntrinsics,
                   rng: np.random.Generator) -> Optional[Pose]:
    pixels = _sample_keypoints(pred, np.arange(model.num_keypoints), rng)
    try:
        pose = pnp(pixels, model.keypoints3d, intrinsics)
    except PoseUncertaintyError as e:
        logger.debug(f"Fallback pnp failed: {str(e)}")
        return None
    return pose if np.all(np.isfinite(pose.t)) else None


def ransag(purse: Purse, pred: PredictionSet, model: ObjectModel, intrinsics: CameraIntrinsics,
           trials: int = DEFAULT_TRIALS, seed: int = 0) -> RansagResult:
    """
    Sample poses from the PURSE with P3P on keypoints drawn inside the
    prediction sets, and average them.

    Every trial draws from its own stream (seed, trial), so the accepted
    samples are the same whatever order trials run in. When no trial lands
    in the PURSE, floor(T/20) fallback poses are solved by PnP over all
    keypoints without a membership check.

    Args:
        purse: set the samples must belong to
        pred: prediction sets the keypoints are drawn from
        model: 3D keypoints
        intrinsics: camera matrix
        trials: T
        seed: 64-bit seed

    Returns:
        RansagResult; the average is not guaranteed to lie in the PURSE
    """
    if model.num_keypoints < 3:
        raise ValueError(f"ransag needs at least 3 keypoints, got {model.num_keypoints}")
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")

    samples, accepted = [], []
    for trial in range(trials):
        found = _trial_poses(purse, pred, model, intrinsics, stream(seed, "ransag", trial))
        samples.extend(found)
        accepted.extend([trial] * len(found))

    if samples:
        logger.debug(f"RANSAG kept {len(samples)} samples from {trials} trials")
        return RansagResult(samples, average_poses(samples), False, trials, seed, accepted)

    n_fallback = max(1, trials // FALLBACK_DIVISOR)
    logger.warning(f"No RANSAG sample landed in the PURSE after {trials} trials, "
                   f"solving {n_fallback} fallback poses")
    draws = []
    for t in range(n_fallback):
        pose = _fallback_pose(pred, model, intrinsics, stream(seed, "ransag-fallback", t))
        if pose is not None:
            samples.append(pose)
            draws.append(t)
    if not samples:
        raise NoValidSamples(f"neither {trials} trials nor {n_fallback} fallback solves produced a pose")
    return RansagResult(samples, average_poses(samples), True, trials, seed, fallback_draws=draws)
