"""Pose uncertainty sets and RANSAG"""
from purse.builder import DEPTH_MIN, Purse, PurseSource, build_purse, projection_rows, purse_contains
from purse.ransag import RansagResult, ransag, sample_in_region

__all__ = [
    "DEPTH_MIN", "Purse", "PurseSource", "RansagResult", "build_purse", "projection_rows",
    "purse_contains", "ransag", "sample_in_region",
]
