"""Keypoint heatmaps, the PKHM codec and per-channel detection summaries"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from common.errors import FormatError, ShapeMismatch, SingularCovariance

logger = logging.getLogger(__name__)

PKHM_MAGIC = b"PKHM0001"
SUM_TOL = 1e-6
COND_LIMIT = 1e12
COV_JITTER = 1e-9


@dataclass(frozen=True)
class Heatmap:
    """K probability grids of size H x W; pixel (row r, col c) sits at q = (c, r)"""
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 3:
            raise ShapeMismatch(f"heatmap must be (K, H, W), got {probs.shape}")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("heatmap entries must be finite and nonnegative")
        sums = probs.reshape(probs.shape[0], -1).sum(axis=1)
        if np.any(np.abs(sums - 1.0) > SUM_TOL):
            raise ValueError(f"heatmap channels must sum to 1, got {sums}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_raw(cls, raw: np.ndarray) -> "Heatmap":
        """Drop negative values and renormalize each channel"""
        raw = np.nan_to_num(np.asarray(raw, dtype=np.float64), nan=0.0, posinf=0.0, neginf=0.0)
        clipped = np.clip(raw, 0.0, None)
        flat = clipped.reshape(clipped.shape[0], -1)
        sums = flat.sum(axis=1, keepdims=True)
        empty = sums[:, 0] <= 0
        if np.any(empty):
            logger.warning(f"Heatmap channels {np.flatnonzero(empty).tolist()} carry no mass, using uniform")
            flat[empty] = 1.0
            sums = flat.sum(axis=1, keepdims=True)
        return cls((flat / sums).reshape(clipped.shape))

    @property
    def num_keypoints(self) -> int:
        return self.probs.shape[0]

    @property
    def height(self) -> int:
        return self.probs.shape[1]

    @property
    def width(self) -> int:
        return self.probs.shape[2]

    def pixel_locations(self, linear: np.ndarray) -> np.ndarray:
        """(x, y) = (col, row) of row-major linear indices"""
        rows, cols = np.divmod(np.asarray(linear), self.width)
        return np.stack([cols, rows], axis=-1).astype(np.float64)


def save_pkhm(heatmap: Heatmap, path: str) -> None:
    k, h, w = heatmap.probs.shape
    with open(path, "wb") as f:
        f.write(PKHM_MAGIC)
        f.write(np.array([k, h, w], dtype="<u4").tobytes())
        f.write(heatmap.probs.astype("<f4").tobytes(order="C"))


def load_pkhm(path: str) -> Heatmap:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != PKHM_MAGIC:
        raise FormatError(f"{path} is not a PKHM file")
    k, h, w = (int(v) for v in np.frombuffer(data, dtype="<u4", count=3, offset=8))
    expected = 20 + 4 * k * h * w
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for K={k}, H={h}, W={w}, got {len(data)}")
    raw = np.frombuffer(data, dtype="<f4", count=k * h * w, offset=20).reshape(k, h, w)
    return Heatmap.from_raw(raw)


def top_j_indices(channel: np.ndarray, top_j: int) -> np.ndarray:
    """Linear indices of the top-J entries; ties at rank J go to the smaller index"""
    flat = channel.reshape(-1)
    if top_j >= flat.size:
        return np.argsort(-flat, kind="stable")
    kth = np.partition(flat, flat.size - top_j)[flat.size - top_j]
    above = np.flatnonzero(flat > kth)
    ties = np.flatnonzero(flat == kth)[: top_j - above.size]
    chosen = np.concatenate([above, ties])
    return chosen[np.argsort(-flat[chosen], kind="stable")]


def weighted_moments(points: np.ndarray, weights: np.ndarray):
    w = weights / weights.sum()
    mean = w @ points
    centered = points - mean
    cov = (centered * w[:, None]).T @ centered
    return mean, 0.5 * (cov + cov.T)


def checked_inverse(cov: np.ndarray, keypoint: int, support: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Inverse of a 2x2 covariance.

    A structurally rank-deficient covariance (its support points are
    collinear) raises SingularCovariance; an ill-conditioned but full-rank
    one gets a 1e-9 jitter first.
    """
    if support is not None and np.linalg.matrix_rank(support, tol=1e-9 * max(1.0, np.abs(support).max())) < 2:
        raise SingularCovariance(keypoint)
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= 0 or eig[-1] / eig[0] >= COND_LIMIT:
        if support is None:
            raise SingularCovariance(keypoint)
        cov = cov + COV_JITTER * np.eye(2)
        eig = np.linalg.eigvalsh(cov)
        if eig[0] <= 0 or eig[-1] / eig[0] >= COND_LIMIT:
            raise SingularCovariance(keypoint)
    inv = np.linalg.inv(cov)
    return 0.5 * (inv + inv.T)


@dataclass(frozen=True)
class HeatmapSummary:
    """
    What the nonconformity functions need from a heatmap.

    peak_px (K,2), peak_prob (K,): argmax pixel and its probability
    mean_px (K,2), cov (K,2,2), cov_inv (K,2,2): top-J moments (None when
    the summary was made without them)
    """
    peak_px: np.ndarray
    peak_prob: np.ndarray
    top_j: Optional[int] = None
    mean_px: Optional[np.ndarray] = None
    cov: Optional[np.ndarray] = None
    cov_inv: Optional[np.ndarray] = None

    @property
    def num_keypoints(self) -> int:
        return self.peak_px.shape[0]


def summarize_heatmap(heatmap: Heatmap, top_j: Optional[int] = None) -> HeatmapSummary:
    """Peak statistics, plus top-J weighted mean/covariance when ``top_j`` is given"""
    k = heatmap.num_keypoints
    flat = heatmap.probs.reshape(k, -1)
    peak_idx = np.argmax(flat, axis=1)  # first occurrence: smallest linear index wins ties
    peak_px = heatmap.pixel_locations(peak_idx)
    peak_prob = flat[np.arange(k), peak_idx]
    if top_j is None:
        return HeatmapSummary(peak_px, peak_prob)
    if top_j < 1 or top_j > flat.shape[1]:
        raise ValueError(f"top_j must be in [1, {flat.shape[1]}], got {top_j}")

    means = np.zeros((k, 2))
    covs = np.zeros((k, 2, 2))
    invs = np.zeros((k, 2, 2))
    for i in range(k):
        idx = top_j_indices(flat[i], top_j)
        weights = flat[i, idx]
        if weights.sum() <= 0:
            raise SingularCovariance(i, f"top-{top_j} pixels of keypoint {i} carry no probability")
        pts = heatmap.pixel_locations(idx)
        means[i], covs[i] = weighted_moments(pts, weights)
        support = (pts - means[i])[weights > 0]
        invs[i] = checked_inverse(covs[i], i, support)
    return HeatmapSummary(peak_px, peak_prob, top_j, means, covs, invs)
