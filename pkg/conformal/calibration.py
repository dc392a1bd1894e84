"""Inductive conformal calibration"""
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy import stats

from common.errors import CalibrationError, EpsilonOutOfRange, FormatError
from common.rng import stream
from conformal.heatmap import Heatmap, HeatmapSummary, summarize_heatmap
from conformal.scores import (RESCALINGS, VoteSummary, aggregate, cov_keypoint_scores,
                              peak_keypoint_scores, pvnet_keypoint_scores, summarize_votes)

logger = logging.getLogger(__name__)

KINDS = ("peak", "cov", "pvnet")
INDEX_GUARD = 1e-9


@dataclass(frozen=True)
class NonconformityConfig:
    kind: str = "peak"
    top_j: int = 100
    beta: float = 5.0
    rescale: str = "identity"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"nonconformity kind must be one of {KINDS}, got {self.kind!r}")
        if int(self.top_j) < 1:
            raise ValueError(f"top_j must be a positive integer, got {self.top_j}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.rescale not in RESCALINGS:
            raise ValueError(f"rescale must be one of {sorted(RESCALINGS)}, got {self.rescale!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "top_j": int(self.top_j), "beta": float(self.beta), "rescale": self.rescale}

    @classmethod
    def from_dict(cls, data: dict) -> "NonconformityConfig":
        return cls(**{k: data[k] for k in ("kind", "top_j", "beta", "rescale") if k in data})


def summarize(detection, config: NonconformityConfig, rng: Optional[np.random.Generator] = None):
    """Reduce a raw detection (heatmap or vote fields) to what ``config`` scores; ``rng`` subsamples vote pairs"""
    if isinstance(detection, (HeatmapSummary, VoteSummary)):
        return detection
    if config.kind == "pvnet":
        return summarize_votes(detection, config.beta, rng)
    if not isinstance(detection, Heatmap):
        raise TypeError(f"{config.kind} nonconformity needs a Heatmap, got {type(detection).__name__}")
    return summarize_heatmap(detection, config.top_j if config.kind == "cov" else None)


def keypoint_scores(labels, detection, config: NonconformityConfig,
                    rng: Optional[np.random.Generator] = None) -> np.ndarray:
    summary = summarize(detection, config, rng)
    if config.kind == "peak":
        return peak_keypoint_scores(labels, summary)
    if config.kind == "cov":
        return cov_keypoint_scores(labels, summary)
    return pvnet_keypoint_scores(labels, summary)


def score(labels, detection, config: NonconformityConfig, rng: Optional[np.random.Generator] = None) -> float:
    return aggregate(keypoint_scores(labels, detection, config, rng), config.rescale)


@dataclass(frozen=True)
class CalibrationRecord:
    """Calibration scores sorted nonincreasing: scores[0] is the largest"""
    scores: np.ndarray
    config: NonconformityConfig = field(default_factory=NonconformityConfig)

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64).reshape(-1)
        if s.size < 1:
            raise ValueError("a calibration record needs at least one score")
        if np.any(np.diff(s) > 0):
            raise ValueError("calibration scores must be sorted nonincreasing")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    @classmethod
    def from_scores(cls, scores, config: NonconformityConfig = None) -> "CalibrationRecord":
        return cls(np.sort(np.asarray(scores, dtype=np.float64))[::-1], config or NonconformityConfig())

    @property
    def n(self) -> int:
        return self.scores.size

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "scores": self.scores.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationRecord":
        try:
            return cls(np.asarray(data["scores"]), NonconformityConfig.from_dict(data["config"]))
        except KeyError as e:
            raise FormatError(f"calibration JSON is missing field {e}") from e

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path: str) -> "CalibrationRecord":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def calibrate(dataset: Iterable[Tuple[object, object]], config: NonconformityConfig,
              seed: Optional[int] = None) -> CalibrationRecord:
    """
    Score every (labels, detection) pair of the calibration split.

    Args:
        dataset: pairs of keypoint labels (K,2) and a detection (Heatmap,
            vote fields, or a precomputed summary)
        config: nonconformity function
        seed: when given, sample i subsamples vote pairs from stream (seed, "vote-pairs", i)

    Returns:
        CalibrationRecord with the scores sorted nonincreasing
    """
    scores = []
    for i, (labels, detection) in enumerate(dataset):
        try:
            rng = None if seed is None else stream(seed, "vote-pairs", i)
            scores.append(score(labels, detection, config, rng))
        except Exception as e:
            logger.error(f"Error scoring calibration sample {i}: {str(e)}", exc_info=True)
            raise CalibrationError(i, e) from e
    if not scores:
        raise ValueError("calibration set is empty")
    record = CalibrationRecord.from_scores(scores, config)
    logger.info(f"Calibrated {config.kind} nonconformity on {record.n} samples")
    return record


def quantile_index(n: int, epsilon: float) -> int:
    """h = floor((n+1) eps), validated to lie in [1, n]"""
    if not 0 < epsilon < 1:
        raise EpsilonOutOfRange(f"epsilon must be in (0, 1), got {epsilon}")
    h = math.floor((n + 1) * epsilon + INDEX_GUARD)
    if h < 1 or h > n:
        raise EpsilonOutOfRange(f"floor((n+1)*eps) = {h} is outside [1, {n}] for n={n}, eps={epsilon}")
    return h


def quantile_at(record: CalibrationRecord, epsilon: float) -> float:
    """The floor((n+1) eps)-th largest calibration score"""
    return float(record.scores[quantile_index(record.n, epsilon) - 1])


def icp_member(labels, detection, record: CalibrationRecord, epsilon: float) -> bool:
    """Whether ``labels`` belongs to the conformal set of ``detection``"""
    return score(labels, detection, record.config) <= quantile_at(record, epsilon)


def beta_conditional_coverage(n: int, epsilon: float) -> Tuple[float, float]:
    """Parameters (n+1-h, h) of the coverage distribution conditional on the calibration set"""
    h = quantile_index(n, epsilon)
    return float(n + 1 - h), float(h)


def beta_coverage_stats(n: int, epsilon: float) -> Tuple[float, float]:
    a, b = beta_conditional_coverage(n, epsilon)
    dist = stats.beta(a, b)
    return float(dist.mean()), float(dist.std())
