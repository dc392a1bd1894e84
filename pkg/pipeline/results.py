"""CSV and JSON emission with fixed column order"""
import json
import logging
import os
from typing import Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

COVERAGE_COLUMNS = ["epsilon", "resample", "kp_coverage", "purse_coverage"]
COVERAGE_SUMMARY_COLUMNS = ["epsilon", "n_calib", "h", "kp_mean", "kp_std", "purse_mean", "purse_std",
                            "beta_a", "beta_b", "beta_mean", "beta_std", "mean_set_area"]
BOUNDS_COLUMNS = ["scene_id", "epsilon", "lambda", "status", "d_upper", "angle_deg", "witness_value",
                  "gt_in_purse", "actual_error", "d_squared_upper", "n_samples", "fallback_used",
                  "reproj_error_px", "success", "d_upper_sample_min"]
CDF_COLUMNS = ["epsilon", "lambda", "d_upper", "cdf"]
INVARIANCE_COLUMNS = ["rescale", "epsilon", "n_test", "mismatches"]
SCENES_COLUMNS = ["scene_id", "keypoint", "label_x", "label_y", "detected_x", "detected_y", "outlier"]


def ensure_dir(output_dir: str) -> None:
    if not os.path.exists(output_dir):
        os.makedirs(output_dir)
        logger.info(f"Created output directory: {output_dir}")


def write_csv(df: pd.DataFrame, columns: Sequence[str], path: str) -> str:
    """
    Write ``df`` with exactly ``columns``, in that order.

    Args:
        df: rows to write; columns it lacks are an error
        columns: header row
        path: target file

    Returns:
        path
    """
    try:
        ensure_dir(os.path.dirname(os.path.abspath(path)))
        missing = [c for c in columns if c not in df.columns]
        if missing and len(df):
            raise KeyError(f"missing columns {missing}")
        df.reindex(columns=list(columns)).to_csv(path, index=False)
        logger.info(f"Saved {len(df)} rows to {path}")
        return path
    except Exception as e:
        logger.error(f"Error writing {path}: {str(e)}", exc_info=True)
        raise


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(data: dict, path: str) -> str:
    try:
        ensure_dir(os.path.dirname(os.path.abspath(path)))
        with open(path, "w", encoding="utf-8") as f:
            json.dump(_plain(data), f, indent=2)
        logger.info(f"Saved {path}")
        return path
    except Exception as e:
        logger.error(f"Error writing {path}: {str(e)}", exc_info=True)
        raise


def coverage_paths(output_dir: str) -> dict:
    return {"per_resample": os.path.join(output_dir, "coverage.csv"),
            "summary": os.path.join(output_dir, "coverage_summary.csv")}


def bounds_paths(output_dir: str) -> dict:
    return {"rows": os.path.join(output_dir, "bounds.csv"), "cdf": os.path.join(output_dir, "bounds_cdf.csv")}


def save_coverage_report(report, output_dir: str) -> dict:
    paths = coverage_paths(output_dir)
    write_csv(report.per_resample, COVERAGE_COLUMNS, paths["per_resample"])
    write_csv(report.summary, COVERAGE_SUMMARY_COLUMNS, paths["summary"])
    return paths


def save_bounds_report(report, output_dir: str) -> dict:
    paths = bounds_paths(output_dir)
    write_csv(report.rows, BOUNDS_COLUMNS, paths["rows"])
    write_csv(report.cdf, CDF_COLUMNS, paths["cdf"])
    return paths


def scenes_frame(scenes) -> pd.DataFrame:
    """One row per (scene, keypoint) with groundtruth and detected pixels"""
    rows = []
    for scene in scenes:
        for k, (label, det) in enumerate(zip(scene.labels, scene.detected)):
            rows.append({"scene_id": scene.scene_id, "keypoint": k, "label_x": label[0], "label_y": label[1],
                         "detected_x": det[0], "detected_y": det[1], "outlier": bool(scene.outliers[k])})
    return pd.DataFrame(rows, columns=SCENES_COLUMNS)
