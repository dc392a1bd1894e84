"""
Pose uncertainty set built from keypoint prediction sets.

With s = [vec(R); t] (column-major vec) the homogeneous projection of
keypoint Y_k is U_k s, U_k = [Y_k^T (x) P, P]. A keypoint lies in its set
{(y - mu)^T Lambda (y - mu) <= 1} and in front of the camera iff

    s^T A_k s <= 0  and  b_k^T s > 0

with b_k = u_{k,3} and A_k = B_k Lambda_k B_k^T - b_k b_k^T,
B_k = [u_{k,1} - mu_{k,1} u_{k,3}, u_{k,2} - mu_{k,2} u_{k,3}].
"""
import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from common.errors import DimensionMismatch, FormatError
from conformal.prediction import MEMBER_TOL, PredictionSet
from geom3d import CameraIntrinsics, ObjectModel, Pose, pose_to_vector

logger = logging.getLogger(__name__)

DEPTH_MIN = 0.001
DEFAULT_TRANS_BOUND = 5.0
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class PurseSource:
    """What a PURSE was built from; needed to sample poses out of it"""
    prediction: PredictionSet
    intrinsics: CameraIntrinsics
    model: ObjectModel

    def to_dict(self) -> dict:
        return {"prediction_set": self.prediction.to_dict(), "intrinsics": self.intrinsics.to_dict(),
                "object_model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "PurseSource":
        return cls(PredictionSet.from_dict(data["prediction_set"]), CameraIntrinsics.from_dict(data["intrinsics"]),
                   ObjectModel.from_dict(data["object_model"]))


@dataclass(frozen=True)
class Purse:
    a: np.ndarray
    b: np.ndarray
    trans_bound: float = DEFAULT_TRANS_BOUND
    source: Optional[PurseSource] = None

    def __post_init__(self):
        a = np.array(self.a, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64)
        if a.ndim != 3 or a.shape[1:] != (12, 12):
            raise DimensionMismatch(f"A must be (K, 12, 12), got {a.shape}")
        if b.shape != (a.shape[0], 12):
            raise DimensionMismatch(f"b must be ({a.shape[0]}, 12), got {b.shape}")
        if not self.trans_bound > 0:
            raise ValueError(f"trans_bound must be positive, got {self.trans_bound}")
        asym = np.abs(a - np.transpose(a, (0, 2, 1)))
        scale = max(1.0, float(np.abs(a).max(initial=0.0)))
        if np.any(asym > SYMMETRY_TOL * scale):
            raise ValueError("PURSE matrices must be symmetric")
        a = 0.5 * (a + np.transpose(a, (0, 2, 1)))
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "trans_bound", float(self.trans_bound))

    @property
    def num_keypoints(self) -> int:
        return self.a.shape[0]

    def quadratic_values(self, s: np.ndarray) -> np.ndarray:
        """s^T A_k s for every k"""
        return np.einsum("i,kij,j->k", s, self.a, s)

    def depth_values(self, s: np.ndarray) -> np.ndarray:
        return self.b @ s

    def to_dict(self, with_source: bool = True) -> dict:
        data = {"A": self.a.tolist(), "b": self.b.tolist(), "trans_bound": self.trans_bound}
        if with_source and self.source is not None:
            data["source"] = self.source.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Purse":
        try:
            source = PurseSource.from_dict(data["source"]) if data.get("source") else None
            a = np.asarray(data["A"], dtype=np.float64)
            b = np.asarray(data["b"], dtype=np.float64)
            if a.size == 0 and b.size == 0:
                a, b = a.reshape(0, 12, 12), b.reshape(0, 12)
            return cls(a, b,
                       float(data.get("trans_bound", DEFAULT_TRANS_BOUND)), source)
        except KeyError as e:
            raise FormatError(f"PURSE JSON is missing field {e}") from e

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path: str) -> "Purse":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def projection_rows(intrinsics: CameraIntrinsics, model: ObjectModel) -> np.ndarray:
    """U_k for every keypoint, (K, 3, 12)"""
    p = intrinsics.p
    return np.stack([np.hstack([np.kron(y.reshape(1, 3), p), p]) for y in model.keypoints3d])


def build_purse(pred: PredictionSet, intrinsics: CameraIntrinsics, model: ObjectModel,
                trans_bound: float = DEFAULT_TRANS_BOUND) -> Purse:
    """
    Quadratic description of every pose whose projected keypoints fall in ``pred``.

    Args:
        pred: one prediction set per model keypoint
        intrinsics: camera matrix P
        model: 3D keypoints Y_k
        trans_bound: redundant ball ||t|| <= trans_bound

    Returns:
        Purse with A (K,12,12), b (K,12) and the inputs kept as its source
    """
    if pred.num_keypoints != model.num_keypoints:
        raise DimensionMismatch(f"{pred.num_keypoints} prediction sets for {model.num_keypoints} model keypoints")
    u = projection_rows(intrinsics, model)
    u1, u2, u3 = u[:, 0], u[:, 1], u[:, 2]
    mu = pred.centers
    basis = np.stack([u1 - mu[:, :1] * u3, u2 - mu[:, 1:] * u3], axis=2)
    a = np.einsum("kia,kab,kjb->kij", basis, pred.shapes, basis) - np.einsum("ki,kj->kij", u3, u3)
    a = 0.5 * (a + np.transpose(a, (0, 2, 1)))
    logger.debug(f"Built PURSE with {a.shape[0]} quadratic constraints")
    return Purse(a, u3.copy(), trans_bound, PurseSource(pred, intrinsics, model))


def purse_contains(purse: Purse, pose: Pose) -> bool:
    """
    Membership test.

    The quadratics use the same 1e-9 slack as keypoint-set membership, scaled
    by the squared depth, since s^T A_k s = (level_k - 1) depth_k^2.
    """
    if np.linalg.norm(pose.t) > purse.trans_bound:
        return False
    s = pose_to_vector(pose)
    depth = purse.depth_values(s)
    if np.any(depth <= DEPTH_MIN):
        return False
    return bool(np.all(purse.quadratic_values(s) <= MEMBER_TOL * depth**2))
