"""Pixel-wise voting: half-line intersections and GNC truncated least squares"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from common.errors import FormatError, TooFewCandidates
from common.rng import stream

logger = logging.getLogger(__name__)

PKVF_MAGIC = b"PKVF0001"
PARALLEL_TOL = 1e-9
MAX_PAIRS = 20000
GNC_FACTOR = 1.4
GNC_MAX_ITERS = 100
GNC_WEIGHT_TOL = 1e-6


@dataclass(frozen=True)
class VoteField:
    """t votes of one keypoint: pixel p_i and unit direction v_i toward the keypoint"""
    pixels: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        p = np.array(self.pixels, dtype=np.float64).reshape(-1, 2)
        v = np.array(self.directions, dtype=np.float64).reshape(-1, 2)
        if p.shape != v.shape:
            raise ValueError(f"{p.shape[0]} pixels for {v.shape[0]} directions")
        if p.shape[0] < 2:
            raise ValueError(f"a vote field needs at least 2 votes, got {p.shape[0]}")
        if np.any(np.abs(np.linalg.norm(v, axis=1) - 1.0) > 1e-9):
            raise ValueError("vote directions must be unit vectors")
        p.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "pixels", p)
        object.__setattr__(self, "directions", v)

    @classmethod
    def normalized(cls, pixels, directions) -> "VoteField":
        d = np.asarray(directions, dtype=np.float64).reshape(-1, 2)
        return cls(pixels, d / np.linalg.norm(d, axis=1, keepdims=True))

    def __len__(self):
        return self.pixels.shape[0]


def save_pkvf(fields: Sequence[VoteField], path: str) -> None:
    with open(path, "wb") as f:
        f.write(PKVF_MAGIC)
        f.write(np.array([len(fields)], dtype="<u4").tobytes())
        for field in fields:
            f.write(np.array([len(field)], dtype="<u4").tobytes())
            f.write(np.hstack([field.pixels, field.directions]).astype("<f4").tobytes(order="C"))


def load_pkvf(path: str) -> List[VoteField]:
    """Directions are renormalized after the float32 round trip"""
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != PKVF_MAGIC:
        raise FormatError(f"{path} is not a PKVF file")
    offset = 8
    (k,) = np.frombuffer(data, dtype="<u4", count=1, offset=offset)
    offset += 4
    fields = []
    for _ in range(int(k)):
        (t,) = np.frombuffer(data, dtype="<u4", count=1, offset=offset)
        offset += 4
        if offset + 16 * int(t) > len(data):
            raise FormatError(f"{path} is truncated")
        rows = np.frombuffer(data, dtype="<f4", count=4 * int(t), offset=offset).reshape(-1, 4)
        offset += 16 * int(t)
        fields.append(VoteField.normalized(rows[:, :2], rows[:, 2:]))
    if offset != len(data):
        raise FormatError(f"{path} has {len(data) - offset} trailing bytes")
    return fields


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def vote_candidates(field: VoteField, rng: Optional[np.random.Generator] = None,
                    max_pairs: int = MAX_PAIRS) -> np.ndarray:
    """
    All pairwise half-line intersections p_i + tau_i v_i = p_j + tau_j v_j
    with tau_i, tau_j >= 0. Parallel pairs are skipped. Above ``max_pairs``
    pairs a uniform subsample is used.

    Returns:
        (M, 2) array of candidate keypoint locations, possibly empty
    """
    t = len(field)
    ii, jj = np.triu_indices(t, k=1)
    if ii.size > max_pairs:
        rng = rng if rng is not None else stream(0, "vote-pairs")
        keep = np.sort(rng.choice(ii.size, size=max_pairs, replace=False))
        ii, jj = ii[keep], jj[keep]
    p, v = field.pixels, field.directions
    denom = _cross(v[ii], v[jj])
    ok = np.abs(denom) >= PARALLEL_TOL
    ii, jj, denom = ii[ok], jj[ok], denom[ok]
    d = p[jj] - p[ii]
    tau_i = _cross(d, v[jj]) / denom
    tau_j = _cross(d, v[ii]) / denom
    front = (tau_i >= 0) & (tau_j >= 0)
    return p[ii[front]] + tau_i[front, None] * v[ii[front]]


def _tls_weights(r2: np.ndarray, mu: float) -> np.ndarray:
    """GNC-TLS surrogate weights for normalized squared residuals; mu shrinks toward TLS"""
    tau = 1.0 / mu
    lower = tau / (tau + 1.0)
    upper = (tau + 1.0) / tau
    w = np.sqrt(tau * (tau + 1.0)) / np.sqrt(np.maximum(r2, 1e-300)) - tau
    w = np.where(r2 <= lower, 1.0, w)
    w = np.where(r2 >= upper, 0.0, w)
    return np.clip(w, 0.0, 1.0)


def gnc_tls_point(candidates, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Outlier-robust 2D point from candidates by graduated non-convexity on
    sum_k min(||q - q_k||^2 / beta^2, 1).

    Schedule: median start, mu_0 = max(max_k r_k^2, 1), mu /= 1.4 per
    iteration, stop once no weight moves by 1e-6 or more, or after 100
    iterations. The inlier set is then iterated to a fixed
    point of the truncated cost.

    Returns:
        (q_star, inlier indices)
    """
    q = np.asarray(candidates, dtype=np.float64).reshape(-1, 2)
    if q.shape[0] < 2:
        raise TooFewCandidates(f"need at least 2 candidates, got {q.shape[0]}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")

    est = np.median(q, axis=0)
    r2 = np.sum((q - est) ** 2, axis=1) / beta**2
    mu = max(float(r2.max()), 1.0)
    weights = _tls_weights(r2, mu)
    for it in range(GNC_MAX_ITERS):
        if weights.sum() > 0:
            est = weights @ q / weights.sum()
        r2 = np.sum((q - est) ** 2, axis=1) / beta**2
        mu /= GNC_FACTOR
        new_weights = _tls_weights(r2, mu)
        change = np.max(np.abs(new_weights - weights))
        weights = new_weights
        if change < GNC_WEIGHT_TOL:
            logger.debug(f"GNC converged after {it + 1} iterations")
            break

    inliers = np.flatnonzero(np.sum((q - est) ** 2, axis=1) <= beta**2)
    for _ in range(GNC_MAX_ITERS):
        if inliers.size == 0:
            break
        est = q[inliers].mean(axis=0)
        updated = np.flatnonzero(np.sum((q - est) ** 2, axis=1) <= beta**2)
        if np.array_equal(updated, inliers):
            break
        inliers = updated
    return est, inliers
