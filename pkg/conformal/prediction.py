"""Conformal keypoint prediction sets {y : (y - mu_k)^T Lambda_k (y - mu_k) <= 1}"""
import json
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from common.errors import FormatError, NotPositiveDefinite, ShapeMismatch, ZeroPeakProbability
from conformal.calibration import CalibrationRecord, NonconformityConfig, quantile_at, summarize
from conformal.heatmap import Heatmap, HeatmapSummary, summarize_heatmap
from conformal.scores import INVERSE_RESCALINGS, VoteSummary, summarize_votes
from conformal.voting import VoteField

logger = logging.getLogger(__name__)

QUANTILE_FLOOR = 1e-12
MEMBER_TOL = 1e-9


@dataclass(frozen=True)
class PredictionSet:
    centers: np.ndarray
    shapes: np.ndarray
    epsilon: float
    quantile: float
    kind: str = "ball"

    def __post_init__(self):
        centers = np.array(self.centers, dtype=np.float64).reshape(-1, 2)
        shapes = np.array(self.shapes, dtype=np.float64).reshape(-1, 2, 2)
        if shapes.shape[0] != centers.shape[0]:
            raise ShapeMismatch(f"{centers.shape[0]} centers for {shapes.shape[0]} shapes")
        shapes = 0.5 * (shapes + np.transpose(shapes, (0, 2, 1)))
        eig = np.linalg.eigvalsh(shapes)
        if np.any(eig[:, 0] <= 0) or not np.all(np.isfinite(shapes)):
            bad = int(np.argmin(eig[:, 0]))
            raise NotPositiveDefinite(f"shape of keypoint {bad} is not positive definite")
        centers.setflags(write=False)
        shapes.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "shapes", shapes)

    @property
    def num_keypoints(self) -> int:
        return self.centers.shape[0]

    def levels(self, labels) -> np.ndarray:
        """(y_k - mu_k)^T Lambda_k (y_k - mu_k) per keypoint"""
        y = np.asarray(labels, dtype=np.float64).reshape(-1, 2)
        if y.shape[0] != self.num_keypoints:
            raise ShapeMismatch(f"{y.shape[0]} labels for {self.num_keypoints} keypoints")
        d = y - self.centers
        return np.einsum("ki,kij,kj->k", d, self.shapes, d)

    def contains_keypoints(self, labels) -> np.ndarray:
        return self.levels(labels) <= 1.0 + MEMBER_TOL

    def contains(self, labels) -> bool:
        return bool(np.all(self.contains_keypoints(labels)))

    def areas(self) -> np.ndarray:
        """pi / sqrt(det Lambda_k), in square pixels"""
        return np.pi / np.sqrt(np.linalg.det(self.shapes))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "epsilon": self.epsilon, "quantile": self.quantile,
                "centers": self.centers.tolist(), "shapes": self.shapes.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PredictionSet":
        try:
            return cls(np.asarray(data["centers"]), np.asarray(data["shapes"]), float(data["epsilon"]),
                       float(data["quantile"]), data.get("kind", "ball"))
        except KeyError as e:
            raise FormatError(f"prediction set JSON is missing field {e}") from e

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path: str) -> "PredictionSet":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def set_radius_quantile(record: CalibrationRecord, epsilon: float) -> float:
    """Quantile in the unrescaled score units that fix the set geometry"""
    alpha = float(INVERSE_RESCALINGS[record.config.rescale](quantile_at(record, epsilon)))
    return max(alpha, QUANTILE_FLOOR)


def predict_set_ball(heatmap: Union[Heatmap, HeatmapSummary], record: CalibrationRecord,
                     epsilon: float) -> PredictionSet:
    """Balls at the peak pixels with radius alpha / p_k"""
    summary = heatmap if isinstance(heatmap, HeatmapSummary) else summarize_heatmap(heatmap)
    if np.any(summary.peak_prob <= 0):
        raise ZeroPeakProbability(f"keypoints {np.flatnonzero(summary.peak_prob <= 0).tolist()} have no peak")
    alpha = set_radius_quantile(record, epsilon)
    scale = summary.peak_prob**2 / alpha**2
    shapes = scale[:, None, None] * np.eye(2)[None]
    return PredictionSet(summary.peak_px, shapes, epsilon, quantile_at(record, epsilon), "ball")


def predict_set_ellipse(heatmap: Union[Heatmap, HeatmapSummary], record: CalibrationRecord,
                        epsilon: float, top_j: int = 100) -> PredictionSet:
    """Ellipses at the top-J means with shape Sigma_k^-1 / alpha"""
    if isinstance(heatmap, HeatmapSummary) and heatmap.cov_inv is not None:
        summary = heatmap
    else:
        summary = summarize_heatmap(heatmap, top_j)
    alpha = set_radius_quantile(record, epsilon)
    return PredictionSet(summary.mean_px, summary.cov_inv / alpha, epsilon, quantile_at(record, epsilon), "ellipse")


def predict_set_pvnet(fields: Union[Sequence[VoteField], VoteSummary], record: CalibrationRecord,
                      epsilon: float, rng: Optional[np.random.Generator] = None) -> PredictionSet:
    """Ellipses at the robust vote estimates with shape Sigma^-1 / alpha"""
    summary = fields if isinstance(fields, VoteSummary) else summarize_votes(fields, record.config.beta, rng)
    alpha = set_radius_quantile(record, epsilon)
    return PredictionSet(summary.q_star, summary.cov_inv / alpha, epsilon, quantile_at(record, epsilon), "pvnet")


def predict_set(detection, record: CalibrationRecord, epsilon: float,
                rng: Optional[np.random.Generator] = None) -> PredictionSet:
    """Set builder matching the record's nonconformity kind"""
    config: NonconformityConfig = record.config
    summary = summarize(detection, config, rng)
    if config.kind == "peak":
        return predict_set_ball(summary, record, epsilon)
    if config.kind == "cov":
        return predict_set_ellipse(summary, record, epsilon, config.top_j)
    return predict_set_pvnet(summary, record, epsilon)
