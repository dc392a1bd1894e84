"""Conformal keypoint prediction: detections, nonconformity scores, calibration and prediction sets"""
from conformal.calibration import (CalibrationRecord, NonconformityConfig, beta_conditional_coverage,
                                   beta_coverage_stats, calibrate, icp_member, keypoint_scores,
                                   quantile_at, quantile_index, score, summarize)
from conformal.heatmap import Heatmap, HeatmapSummary, load_pkhm, save_pkhm, summarize_heatmap
from conformal.prediction import (PredictionSet, predict_set, predict_set_ball, predict_set_ellipse,
                                  predict_set_pvnet)
from conformal.scores import (INVERSE_RESCALINGS, RESCALINGS, VoteSummary, score_cov, score_peak,
                              score_pvnet, summarize_votes)
from conformal.voting import VoteField, gnc_tls_point, load_pkvf, save_pkvf, vote_candidates

__all__ = [
    "CalibrationRecord", "Heatmap", "HeatmapSummary", "INVERSE_RESCALINGS", "NonconformityConfig",
    "PredictionSet", "RESCALINGS", "VoteField", "VoteSummary", "beta_conditional_coverage",
    "beta_coverage_stats", "calibrate", "gnc_tls_point", "icp_member", "keypoint_scores", "load_pkhm",
    "load_pkvf", "predict_set", "predict_set_ball", "predict_set_ellipse", "predict_set_pvnet",
    "quantile_at", "quantile_index", "save_pkhm", "save_pkvf", "score", "score_cov", "score_peak",
    "score_pvnet", "summarize", "summarize_heatmap", "summarize_votes", "vote_candidates",
]
