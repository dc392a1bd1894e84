"""Synthetic scenes, experiments, result files and plots"""
from pipeline.experiments import (BoundsReport, CoverageReport, EquivalenceReport, run_bounds_experiment,
                                  run_coverage_experiment, run_equivalence_check, run_invariance_check)
from pipeline.synthetic import SyntheticScene, generate_scene, generate_vote_fields

__all__ = [
    "BoundsReport", "CoverageReport", "EquivalenceReport", "SyntheticScene", "generate_scene",
    "generate_vote_fields", "run_bounds_experiment", "run_coverage_experiment", "run_equivalence_check",
    "run_invariance_check",
]
