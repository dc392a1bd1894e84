"""Nonconformity functions.

Every score is the max over keypoints of a per-keypoint score, after an
optional monotone rescaling applied per keypoint inside the max.
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from common.errors import DegenerateInliers, ShapeMismatch, SingularCovariance
from conformal.heatmap import Heatmap, HeatmapSummary, checked_inverse, summarize_heatmap
from conformal.voting import VoteField, gnc_tls_point, vote_candidates

RESCALINGS = {
    "identity": lambda x: x,
    "square": np.square,
    "sqrt": np.sqrt,
    "log1p": np.log1p,
}

INVERSE_RESCALINGS = {
    "identity": lambda x: x,
    "square": np.sqrt,
    "sqrt": np.square,
    "log1p": np.expm1,
}


@dataclass(frozen=True)
class VoteSummary:
    """Per-keypoint robust estimate q*, inlier covariance and its inverse"""
    q_star: np.ndarray
    cov: np.ndarray
    cov_inv: np.ndarray
    inlier_counts: np.ndarray

    @property
    def num_keypoints(self) -> int:
        return self.q_star.shape[0]


def summarize_votes(fields: Sequence[VoteField], beta: float,
                    rng: Optional[np.random.Generator] = None) -> VoteSummary:
    k = len(fields)
    q_star = np.zeros((k, 2))
    covs = np.zeros((k, 2, 2))
    invs = np.zeros((k, 2, 2))
    counts = np.zeros(k, dtype=int)
    for i, field in enumerate(fields):
        cands = vote_candidates(field, rng=rng)
        if cands.shape[0] < 2:
            raise DegenerateInliers(i, f"keypoint {i} has {cands.shape[0]} vote candidates")
        q_star[i], inliers = gnc_tls_point(cands, beta)
        counts[i] = inliers.size
        if inliers.size < 2:
            raise DegenerateInliers(i, f"keypoint {i} has {inliers.size} inliers")
        centered = cands[inliers] - q_star[i]
        covs[i] = centered.T @ centered / inliers.size
        try:
            invs[i] = checked_inverse(covs[i], i, centered)
        except SingularCovariance as e:
            raise DegenerateInliers(i, f"inliers of keypoint {i} are collinear") from e
    return VoteSummary(q_star, covs, invs, counts)


def _labels(labels, k: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 2)
    if y.shape[0] != k:
        raise ShapeMismatch(f"{y.shape[0]} labels for {k} keypoints")
    return y


def mahalanobis(y: np.ndarray, mean: np.ndarray, inv: np.ndarray) -> np.ndarray:
    d = y - mean
    return np.einsum("ki,kij,kj->k", d, inv, d)


def peak_keypoint_scores(labels, summary: HeatmapSummary) -> np.ndarray:
    """p_k * ||y_k - q_k||"""
    y = _labels(labels, summary.num_keypoints)
    return summary.peak_prob * np.linalg.norm(y - summary.peak_px, axis=1)


def cov_keypoint_scores(labels, summary: HeatmapSummary) -> np.ndarray:
    """(y_k - qbar_k)^T Sigma_k^-1 (y_k - qbar_k)"""
    if summary.cov_inv is None:
        raise ValueError("summary was built without top-J moments")
    y = _labels(labels, summary.num_keypoints)
    return mahalanobis(y, summary.mean_px, summary.cov_inv)


def pvnet_keypoint_scores(labels, summary: VoteSummary) -> np.ndarray:
    y = _labels(labels, summary.num_keypoints)
    return mahalanobis(y, summary.q_star, summary.cov_inv)


def aggregate(per_keypoint: np.ndarray, rescale: str = "identity") -> float:
    return float(np.max(RESCALINGS[rescale](per_keypoint)))


def score_peak(labels, heatmap: Union[Heatmap, HeatmapSummary]) -> float:
    summary = heatmap if isinstance(heatmap, HeatmapSummary) else summarize_heatmap(heatmap)
    return aggregate(peak_keypoint_scores(labels, summary))


def score_cov(labels, heatmap: Union[Heatmap, HeatmapSummary], top_j: int = 100) -> float:
    summary = heatmap if isinstance(heatmap, HeatmapSummary) else summarize_heatmap(heatmap, top_j)
    return aggregate(cov_keypoint_scores(labels, summary))


def score_pvnet(labels, fields: Union[Sequence[VoteField], VoteSummary], beta: float,
                rng: Optional[np.random.Generator] = None) -> float:
    summary = fields if isinstance(fields, VoteSummary) else summarize_votes(fields, beta, rng)
    return aggregate(pvnet_keypoint_scores(labels, summary))
