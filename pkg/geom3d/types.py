"""Rigid-body value types shared by every module.

Vectorization convention: a pose (R, t) is flattened to
``s = [vec(R); t]`` where ``vec`` stacks the COLUMNS of R (column-major).
With this convention ``(Y^T kron P) @ vec(R) == P @ R @ Y`` holds exactly,
which is what the PURSE construction relies on. ``pose_to_vector`` and
``vector_to_pose`` are the only places that encode it.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from common.errors import DimensionMismatch, FormatError

logger = logging.getLogger(__name__)

ORTHO_TOL = 1e-9


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Rotation3:
    """Element of SO(3) stored as a 3x3 matrix"""
    m: np.ndarray

    def __post_init__(self):
        m = _frozen(self.m)
        if m.shape != (3, 3):
            raise DimensionMismatch(f"rotation must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("rotation has non-finite entries")
        if np.max(np.abs(m.T @ m - np.eye(3))) > ORTHO_TOL:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(m) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation determinant is not +1 within 1e-9")
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Rotation3":
        return cls(np.eye(3))

    @classmethod
    def from_rotvec(cls, rotvec: Sequence[float]) -> "Rotation3":
        return cls(orthonormalize(Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_matrix()))

    @property
    def T(self) -> "Rotation3":
        return Rotation3(self.m.T)

    def __matmul__(self, other):
        if isinstance(other, Rotation3):
            return Rotation3(orthonormalize(self.m @ other.m))
        return self.m @ np.asarray(other, dtype=np.float64)


def orthonormalize(m: np.ndarray) -> np.ndarray:
    """Snap a matrix that is a rotation up to round-off back onto SO(3)"""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True)
class Pose:
    """Object-to-camera transform: X_cam = rot @ X_obj + t (meters)"""
    rot: Rotation3
    t: np.ndarray

    def __post_init__(self):
        if not isinstance(self.rot, Rotation3):
            object.__setattr__(self, "rot", Rotation3(self.rot))
        t = _frozen(self.t).reshape(-1)
        if t.shape != (3,):
            raise DimensionMismatch(f"translation must have 3 entries, got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation has non-finite entries")
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(Rotation3.identity(), np.zeros(3))

    @property
    def R(self) -> np.ndarray:
        return self.rot.m

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map object-frame points (N,3) or (3,) into the camera frame"""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.R.T + self.t

    def to_dict(self) -> dict:
        return {"rotation": self.R.tolist(), "translation": self.t.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Pose":
        try:
            return cls(Rotation3(np.asarray(data["rotation"])), np.asarray(data["translation"]))
        except KeyError as e:
            raise FormatError(f"pose JSON is missing field {e}") from e


def pose_to_vector(pose: Pose) -> np.ndarray:
    """s = [vec(R); t] with column-major vec"""
    return np.concatenate([pose.R.reshape(-1, order="F"), pose.t])


def vector_to_pose(s: np.ndarray) -> Pose:
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if s.shape != (12,):
        raise DimensionMismatch(f"pose vector must have 12 entries, got {s.shape}")
    return Pose(Rotation3(s[:9].reshape(3, 3, order="F")), s[9:])


def rotation_indices() -> np.ndarray:
    """idx[i, j] is the position of R[i, j] inside s"""
    return np.arange(9).reshape(3, 3, order="F")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Upper-triangular pinhole intrinsics P (pixels)"""
    p: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p)
        if p.shape != (3, 3):
            raise DimensionMismatch(f"intrinsics must be 3x3, got {p.shape}")
        if p[0, 0] <= 0 or p[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if p[2, 2] != 1.0 or p[1, 0] != 0 or p[2, 0] != 0 or p[2, 1] != 0:
            raise ValueError("intrinsics must be upper triangular with p[2][2] = 1")
        object.__setattr__(self, "p", p)

    @classmethod
    def from_params(cls, fx: float, fy: float, cx: float, cy: float, skew: float = 0.0) -> "CameraIntrinsics":
        return cls(np.array([[fx, skew, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]]))

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.p)

    def to_dict(self) -> dict:
        p = self.p
        return {"fx": p[0, 0], "fy": p[1, 1], "cx": p[0, 2], "cy": p[1, 2], "skew": p[0, 1]}

    @classmethod
    def from_dict(cls, data: dict) -> "CameraIntrinsics":
        try:
            return cls.from_params(data["fx"], data["fy"], data["cx"], data["cy"], data.get("skew", 0.0))
        except KeyError as e:
            raise FormatError(f"intrinsics JSON is missing field {e}") from e


@dataclass(frozen=True)
class ObjectModel:
    """Semantic 3D keypoints of an object, object frame, meters"""
    keypoints3d: np.ndarray
    object_id: str = field(default="object")

    def __post_init__(self):
        kp = _frozen(self.keypoints3d)
        if kp.ndim != 2 or kp.shape[1] != 3:
            raise DimensionMismatch(f"keypoints must be (K, 3), got {kp.shape}")
        if kp.shape[0] < 4:
            raise ValueError(f"object model needs at least 4 keypoints, got {kp.shape[0]}")
        diffs = np.linalg.norm(kp[:, None, :] - kp[None, :, :], axis=-1)
        np.fill_diagonal(diffs, np.inf)
        if np.min(diffs) == 0.0:
            raise ValueError("object model has duplicate keypoints")
        object.__setattr__(self, "keypoints3d", kp)

    @property
    def num_keypoints(self) -> int:
        return self.keypoints3d.shape[0]

    def to_dict(self) -> dict:
        return {"object_id": self.object_id, "keypoints_3d": self.keypoints3d.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "ObjectModel":
        try:
            return cls(np.asarray(data["keypoints_3d"]), str(data["object_id"]))
        except KeyError as e:
            raise FormatError(f"object model JSON is missing field {e}") from e


def load_object_model(path: str) -> ObjectModel:
    with open(path, "r", encoding="utf-8") as f:
        model = ObjectModel.from_dict(json.load(f))
    logger.debug(f"Loaded object model {model.object_id} with {model.num_keypoints} keypoints from {path}")
    return model


def load_intrinsics(path: str) -> CameraIntrinsics:
    with open(path, "r", encoding="utf-8") as f:
        return CameraIntrinsics.from_dict(json.load(f))


def load_pose(path: str) -> Pose:
    with open(path, "r", encoding="utf-8") as f:
        return Pose.from_dict(json.load(f))
