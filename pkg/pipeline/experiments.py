"""
Coverage and bound experiments on synthetic scenes.

Scene i always comes from stream(seed, "scene", i), so a scene is the same
whatever experiment, split or resample it ends up in. Scenes are reduced to
detection summaries right away; full heatmaps are never kept.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from bounds import BOUNDED, BoundQuery, pose_distance_sq, sample_min_bound, worst_case_bound
from common.rng import SEED_MAX, stream
from config.reader import ExperimentConfig, load_scene_inputs
from conformal import (CalibrationRecord, NonconformityConfig, PredictionSet, beta_conditional_coverage,
                       beta_coverage_stats, keypoint_scores, predict_set, quantile_at, quantile_index,
                       summarize)
from conformal.scores import aggregate
from geom3d import CameraIntrinsics, ObjectModel, Pose, Rotation3, depths, project_points, reprojection_errors
from pipeline.synthetic import SyntheticScene, generate_scene, generate_vote_fields
from purse import DEPTH_MIN, build_purse, purse_contains, ransag

logger = logging.getLogger(__name__)

SUCCESS_PX = 5.0
INVARIANCE_EPSILONS = tuple(float(e) for e in np.round(np.arange(0.05, 0.55, 0.05), 2))
INVARIANCE_RESCALINGS = ("square", "sqrt", "log1p")


@dataclass(frozen=True)
class ScoredScene:
    """A scene reduced to what prediction sets and PURSEs need"""
    scene: SyntheticScene
    summary: object
    keypoint_scores: np.ndarray

    @property
    def scene_id(self) -> int:
        return self.scene.scene_id


@dataclass(frozen=True)
class CoverageReport:
    per_resample: pd.DataFrame
    summary: pd.DataFrame
    agreement_rate: float


@dataclass(frozen=True)
class BoundsReport:
    rows: pd.DataFrame
    cdf: pd.DataFrame


@dataclass(frozen=True)
class EquivalenceReport:
    epsilon: float
    n_poses: int
    n_valid: int
    n_inside: int
    n_agree: int

    @property
    def agreement_rate(self) -> float:
        return self.n_agree / self.n_valid if self.n_valid else float("nan")

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "n_poses": self.n_poses, "n_valid": self.n_valid,
                "n_inside": self.n_inside, "n_agree": self.n_agree, "agreement_rate": self.agreement_rate}


def nonconformity_config(config: ExperimentConfig) -> NonconformityConfig:
    return NonconformityConfig(config.kind, config.top_j, config.beta, config.rescale)


def make_scene(config: ExperimentConfig, model: ObjectModel, intrinsics: CameraIntrinsics,
               scene_id: int) -> Tuple[SyntheticScene, object]:
    """Scene ``scene_id`` and its raw detection (Heatmap or vote fields)"""
    rng = stream(config.seed, "scene", scene_id)
    votes = config.kind == "pvnet"
    scene = generate_scene(model, intrinsics, config.noise, rng, scene_id, config.image_size,
                           (config.min_distance, config.max_distance), config.margin_px,
                           with_heatmap=not votes)
    if votes:
        return scene, generate_vote_fields(scene, config.votes, stream(config.seed, "votes", scene_id))
    return scene, scene.heatmap


def score_scenes(config: ExperimentConfig, model: ObjectModel, intrinsics: CameraIntrinsics,
                 scene_ids: Sequence[int]) -> List[ScoredScene]:
    """Generate, summarize and score scenes, ordered by scene_id"""
    ncfg = nonconformity_config(config)
    scored = []
    for scene_id in scene_ids:
        scene, detection = make_scene(config, model, intrinsics, scene_id)
        summary = summarize(detection, ncfg, stream(config.seed, "vote-pairs", scene_id))
        scored.append(ScoredScene(scene.without_heatmap(), summary,
                                  keypoint_scores(scene.labels, summary, ncfg)))
    logger.info(f"Generated and scored {len(scored)} scenes")
    return scored


def record_from(scored: Sequence[ScoredScene], ncfg: NonconformityConfig) -> CalibrationRecord:
    return CalibrationRecord.from_scores([aggregate(s.keypoint_scores, ncfg.rescale) for s in scored], ncfg)


def _derived_seed(seed: int, *path) -> int:
    return int(stream(seed, *path).integers(0, SEED_MAX, dtype=np.uint64))


def run_coverage_experiment(config: ExperimentConfig) -> CoverageReport:
    """
    Marginal coverage of keypoint sets and of PURSEs over calibration resamples.

    A pool of n_calib + n_test scenes is scored once. Resample r permutes the
    pool with stream(seed, "resample", r); the first n_calib scenes calibrate,
    the next n_test are tested. Per epsilon the summary reports the mean and
    std of both coverages across resamples next to the mean and std of
    Beta(n+1-h, h), plus the mean set area.

    Returns:
        CoverageReport; agreement_rate is the share of (resample, epsilon,
        scene) triples where keypoint and PURSE membership agree
    """
    try:
        model, intrinsics = load_scene_inputs(config)
        ncfg = nonconformity_config(config)
        pool = score_scenes(config, model, intrinsics, range(config.n_calib + config.n_test))
        rows, areas = [], {eps: [] for eps in config.epsilons}
        agree, total = 0, 0
        for r in range(config.n_resamples):
            perm = stream(config.seed, "resample", r).permutation(len(pool))
            calib = [pool[i] for i in perm[:config.n_calib]]
            test = [pool[i] for i in perm[config.n_calib:]]
            record = record_from(calib, ncfg)
            for eps in config.epsilons:
                kp_hits, purse_hits = 0, 0
                for item in test:
                    pred = predict_set(item.summary, record, eps)
                    kp_in = pred.contains(item.scene.labels)
                    purse_in = purse_contains(build_purse(pred, intrinsics, model, config.trans_bound),
                                              item.scene.pose)
                    kp_hits += kp_in
                    purse_hits += purse_in
                    agree += kp_in == purse_in
                    total += 1
                    areas[eps].append(float(np.mean(pred.areas())))
                rows.append({"epsilon": eps, "resample": r, "kp_coverage": kp_hits / len(test),
                             "purse_coverage": purse_hits / len(test)})
            logger.debug(f"Resample {r}: quantiles "
                         f"{[round(quantile_at(record, eps), 6) for eps in config.epsilons]}")

        per_resample = pd.DataFrame(rows)
        summary = []
        for eps in config.epsilons:
            sel = per_resample[per_resample["epsilon"] == eps]
            beta_a, beta_b = beta_conditional_coverage(config.n_calib, eps)
            beta_mean, beta_std = beta_coverage_stats(config.n_calib, eps)
            summary.append({"epsilon": eps, "n_calib": config.n_calib, "h": quantile_index(config.n_calib, eps),
                            "kp_mean": sel["kp_coverage"].mean(), "kp_std": sel["kp_coverage"].std(ddof=0),
                            "purse_mean": sel["purse_coverage"].mean(),
                            "purse_std": sel["purse_coverage"].std(ddof=0),
                            "beta_a": beta_a, "beta_b": beta_b, "beta_mean": beta_mean, "beta_std": beta_std,
                            "mean_set_area": float(np.mean(areas[eps]))})
            logger.info(f"epsilon={eps}: keypoint coverage {summary[-1]['kp_mean']:.4f} "
                        f"(Beta mean {beta_mean:.4f}), PURSE coverage {summary[-1]['purse_mean']:.4f}")
        return CoverageReport(per_resample, pd.DataFrame(summary), agree / total if total else float("nan"))
    except Exception as e:
        logger.error(f"Error running coverage experiment: {str(e)}", exc_info=True)
        raise


def estimation_error(pose: Pose, gt_pose: Pose, lam: float) -> float:
    """sqrt(lam ||R - R_gt||_F^2 + (1 - lam) ||t - t_gt||^2)"""
    return float(np.sqrt(pose_distance_sq(pose, gt_pose, lam)))


def bounds_cdf(rows: pd.DataFrame) -> pd.DataFrame:
    """Empirical CDF of the bounds per (epsilon, lambda); empty PURSEs are left out"""
    parts = []
    for (eps, lam), group in rows[rows["status"] == BOUNDED].groupby(["epsilon", "lambda"], sort=True):
        values = np.sort(group["d_upper"].to_numpy())
        parts.append(pd.DataFrame({"epsilon": eps, "lambda": lam, "d_upper": values,
                                   "cdf": np.arange(1, values.size + 1) / values.size}))
    if not parts:
        return pd.DataFrame(columns=["epsilon", "lambda", "d_upper", "cdf"])
    return pd.concat(parts, ignore_index=True)


def _bound_rows(config: ExperimentConfig, item: ScoredScene, pred: PredictionSet, eps_index: int,
                model: ObjectModel, intrinsics: CameraIntrinsics) -> List[dict]:
    scene = item.scene
    purse = build_purse(pred, intrinsics, model, config.trans_bound)
    gt_in = purse_contains(purse, scene.pose)
    result = ransag(purse, pred, model, intrinsics, config.trials,
                    _derived_seed(config.seed, "ransag", scene.scene_id, eps_index))
    witness = [] if result.fallback_used else result.samples
    reproj = float(np.mean(reprojection_errors(result.average, intrinsics, model.keypoints3d, scene.labels)))
    candidates = witness[:config.sample_min_candidates]
    solver_args = dict(config.solver.solver_args(), order=config.relaxation_order)

    rows = []
    for lam in config.lambdas:
        bound = worst_case_bound(BoundQuery(purse, result.average, lam), samples=witness, **solver_args)
        sample_min = float("nan")
        if candidates and bound.bounded:
            sample_min = sample_min_bound(purse, candidates, lam, **solver_args)[1].d_upper
        rows.append({
            "scene_id": scene.scene_id, "epsilon": pred.epsilon, "lambda": lam, "status": bound.status,
            "d_upper": bound.d_upper if bound.bounded else float("nan"),
            "angle_deg": float(np.degrees(bound.angle_upper)) if bound.angle_upper is not None else float("nan"),
            "witness_value": bound.witness_value if bound.witness_value is not None else float("nan"),
            "gt_in_purse": gt_in, "actual_error": estimation_error(result.average, scene.pose, lam),
            "d_squared_upper": bound.d_squared_upper, "n_samples": len(result.samples),
            "fallback_used": result.fallback_used, "reproj_error_px": reproj,
            "success": reproj < SUCCESS_PX, "d_upper_sample_min": sample_min,
        })
    return rows


def run_bounds_experiment(config: ExperimentConfig) -> BoundsReport:
    """
    Worst-case bounds around the RANSAG average pose, per scene and epsilon.

    Scenes 0..n_calib-1 calibrate; the next n_scenes are evaluated. For every
    lambda in config.lambdas the row holds the certified bound, the actual
    error of the average pose against groundtruth and whether groundtruth
    lies in the PURSE. Bounds are only guaranteed to dominate the error on
    rows with gt_in_purse.
    """
    try:
        model, intrinsics = load_scene_inputs(config)
        ncfg = nonconformity_config(config)
        record = record_from(score_scenes(config, model, intrinsics, range(config.n_calib)), ncfg)
        test = score_scenes(config, model, intrinsics, range(config.n_calib, config.n_calib + config.n_scenes))
        rows = []
        for eps_index, eps in enumerate(config.epsilons):
            for item in test:
                pred = predict_set(item.summary, record, eps)
                rows.extend(_bound_rows(config, item, pred, eps_index, model, intrinsics))
            logger.info(f"Bounded {len(test)} scenes at epsilon={eps}")
        frame = pd.DataFrame(rows)
        return BoundsReport(frame, bounds_cdf(frame))
    except Exception as e:
        logger.error(f"Error running bounds experiment: {str(e)}", exc_info=True)
        raise


def run_invariance_check(config: ExperimentConfig, n_test: int = 500,
                         epsilons: Sequence[float] = INVARIANCE_EPSILONS,
                         rescalings: Sequence[str] = INVARIANCE_RESCALINGS) -> pd.DataFrame:
    """
    Membership decisions under monotone rescalings of the score.

    Calibrates on n_calib scenes and tests n_test more; for every rescaling
    and epsilon, counts test scenes whose membership differs from the
    unrescaled score's.
    """
    model, intrinsics = load_scene_inputs(config)
    base = nonconformity_config(config)
    calib = score_scenes(config, model, intrinsics, range(config.n_calib))
    test = score_scenes(config, model, intrinsics, range(config.n_calib, config.n_calib + n_test))

    def decisions(rescale: str, eps: float) -> np.ndarray:
        ncfg = NonconformityConfig(base.kind, base.top_j, base.beta, rescale)
        alpha = quantile_at(record_from(calib, ncfg), eps)
        return np.array([aggregate(s.keypoint_scores, rescale) <= alpha for s in test])

    rows = []
    for eps in epsilons:
        reference = decisions("identity", eps)
        for rescale in rescalings:
            mismatches = int(np.sum(decisions(rescale, eps) != reference))
            rows.append({"rescale": rescale, "epsilon": eps, "n_test": len(test), "mismatches": mismatches})
            if mismatches:
                logger.warning(f"{mismatches} membership changes under {rescale} at epsilon={eps}")
    return pd.DataFrame(rows)


def perturb_pose(pose: Pose, rng: np.random.Generator, rot_sigma: float = 0.02, trans_sigma: float = 0.01) -> Pose:
    """Random pose near ``pose``: rotation by a N(0, rot_sigma^2) rotation vector, translation offset"""
    delta = Rotation3.from_rotvec(rot_sigma * rng.standard_normal(3))
    return Pose(delta @ pose.rot, pose.t + trans_sigma * rng.standard_normal(3))


def run_equivalence_check(config: ExperimentConfig, n_poses: int = 10000,
                          epsilon: Optional[float] = None, n_scenes: Optional[int] = None) -> EquivalenceReport:
    """
    Keypoint-set membership against PURSE membership on random poses.

    Poses perturb the groundtruth pose of a test scene; only poses with
    every depth above the PURSE minimum and inside the translation ball
    count, since the two tests are equivalent exactly there.
    """
    model, intrinsics = load_scene_inputs(config)
    ncfg = nonconformity_config(config)
    eps = config.epsilons[0] if epsilon is None else epsilon
    n_scenes = min(config.n_scenes, n_poses) if n_scenes is None else n_scenes
    record = record_from(score_scenes(config, model, intrinsics, range(config.n_calib)), ncfg)
    test = score_scenes(config, model, intrinsics, range(config.n_calib, config.n_calib + n_scenes))
    sets = [predict_set(item.summary, record, eps) for item in test]
    purses = [build_purse(pred, intrinsics, model, config.trans_bound) for pred in sets]

    valid, inside, agree = 0, 0, 0
    for p in range(n_poses):
        j = p % len(test)
        pose = perturb_pose(test[j].scene.pose, stream(config.seed, "perturbed-pose", p))
        if np.any(depths(pose, model.keypoints3d) <= DEPTH_MIN) or np.linalg.norm(pose.t) > config.trans_bound:
            continue
        kp_in = sets[j].contains(project_points(pose, intrinsics, model.keypoints3d))
        purse_in = purse_contains(purses[j], pose)
        valid += 1
        inside += kp_in
        agree += kp_in == purse_in
    report = EquivalenceReport(eps, n_poses, valid, inside, agree)
    logger.info(f"Membership agreement {report.agreement_rate:.6f} over {valid} poses ({inside} inside)")
    return report
