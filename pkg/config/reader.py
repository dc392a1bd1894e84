import yaml
import logging
import os
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from common.errors import ConfigError
from common.rng import SEED_MAX
from conformal.calibration import quantile_index
from geom3d import CameraIntrinsics, ObjectModel, load_intrinsics, load_object_model

logger = logging.getLogger(__name__)

CONFIG_DIR = os.path.dirname(os.path.abspath(__file__))
DEFAULT_CONFIG = os.path.join(CONFIG_DIR, 'config.yaml')
PATH_KEYS = ('object_model', 'intrinsics')


class NoiseSpec(BaseModel):
    """Synthetic heatmap generator knobs"""
    sigma_blob: float = Field(default=3.0, gt=0, description="Blob width in pixels")
    sigma_det: float = Field(default=2.0, ge=0, description="Detection offset std in pixels")
    p_out: float = Field(default=0.05, ge=0, le=1, description="Outlier blob probability per keypoint")
    w_out: float = Field(default=0.3, ge=0, lt=1, description="Mass of the outlier blob")


class VoteSpec(BaseModel):
    """Synthetic vote-field generator knobs"""
    n_votes: int = Field(default=40, ge=2, description="Votes per keypoint")
    radius_px: float = Field(default=40.0, gt=0, description="Votes are drawn within this radius")
    angle_noise_deg: float = Field(default=2.0, ge=0, description="Direction noise std in degrees")
    outlier_frac: float = Field(default=0.2, ge=0, le=1, description="Fraction of random directions")


class SolverSettings(BaseModel):
    max_iters: int = Field(default=100, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    step: float = Field(default=0.98, gt=0, le=1)

    def solver_args(self) -> dict:
        return {'max_iters': self.max_iters, 'tol': self.tol, 'step': self.step}


class ExperimentConfig(BaseModel):
    epsilons: List[float] = Field(default=[0.1, 0.4], min_length=1, description="Miscoverage levels")
    kind: Literal['peak', 'cov', 'pvnet'] = 'peak'
    top_j: int = Field(default=100, ge=1)
    beta: float = Field(default=5.0, gt=0)
    rescale: Literal['identity', 'square', 'sqrt', 'log1p'] = 'identity'
    n_calib: int = Field(default=200, ge=1)
    n_test: int = Field(default=1000, ge=1)
    n_resamples: int = Field(default=20, ge=1)
    n_scenes: int = Field(default=200, ge=1)
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    object_model: str = os.path.join(CONFIG_DIR, 'objects', 'synthetic_duck.json')
    intrinsics: str = os.path.join(CONFIG_DIR, 'intrinsics.json')
    image_width: int = Field(default=640, ge=1)
    image_height: int = Field(default=480, ge=1)
    min_distance: float = Field(default=0.5, gt=0)
    max_distance: float = Field(default=2.0, gt=0)
    margin_px: float = Field(default=10.0, ge=0)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    votes: VoteSpec = Field(default_factory=VoteSpec)
    trans_bound: float = Field(default=5.0, gt=0)
    trials: int = Field(default=1000, ge=1)
    witness_trials: int = Field(default=1000, ge=0)
    sample_min_candidates: int = Field(default=5, ge=0)
    lambdas: List[float] = Field(default=[0.0, 1.0], min_length=1)
    relaxation_order: int = Field(default=1, ge=1, le=2, description="1: Shor, 2: second-order moment")
    solver: SolverSettings = Field(default_factory=SolverSettings)

    @field_validator('lambdas')
    @classmethod
    def check_lambdas(cls, value):
        for lam in value:
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"lambda must be in [0, 1], got {lam}")
        return value

    @model_validator(mode='after')
    def check_epsilons(self):
        for eps in self.epsilons:
            try:
                quantile_index(self.n_calib, eps)
            except ValueError as e:
                raise ValueError(f"epsilon {eps} is unusable with n_calib={self.n_calib}: {str(e)}") from e
        if self.max_distance <= self.min_distance:
            raise ValueError("max_distance must exceed min_distance")
        return self

    @property
    def image_size(self) -> Tuple[int, int]:
        return self.image_width, self.image_height


def _read_mapping(config_path: str) -> dict:
    """Load a YAML (or JSON) mapping"""
    try:
        with open(config_path, 'r', encoding='utf-8') as file:
            config = yaml.safe_load(file)
    except (OSError, yaml.YAMLError) as e:
        logger.error(f"Error loading config {config_path}: {str(e)}", exc_info=True)
        raise ConfigError(f"cannot read config {config_path}: {str(e)}") from e
    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ConfigError(f"config {config_path} must hold a mapping, got {type(config).__name__}")
    return config


def _merge(base: dict, update: dict) -> dict:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _resolve(path: str, config_path: Optional[str]) -> str:
    """Absolute paths stay; relative ones are tried next to the user config, then in config/"""
    if os.path.isabs(path):
        return path
    if config_path:
        candidate = os.path.join(os.path.dirname(os.path.abspath(config_path)), path)
        if os.path.exists(candidate):
            return candidate
    return os.path.join(CONFIG_DIR, path)


def load_config(config_path: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """
    Defaults from config/config.yaml, updated by ``config_path`` and then ``overrides``.

    Args:
        config_path: optional JSON or YAML file
        overrides: optional mapping applied last (CLI options)

    Returns:
        Validated ExperimentConfig with absolute data paths
    """
    merged = _read_mapping(DEFAULT_CONFIG)
    user = _read_mapping(config_path) if config_path else {}
    for key in PATH_KEYS:
        if key in merged:
            merged[key] = _resolve(merged[key], None)
        if key in user:
            user[key] = _resolve(user[key], config_path)
    merged = _merge(merged, user)
    if overrides:
        merged = _merge(merged, {k: v for k, v in overrides.items() if v is not None})
    try:
        config = ExperimentConfig(**merged)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {str(e)}")
        raise ConfigError(f"invalid configuration: {str(e)}") from e
    logger.debug(f"Loaded configuration (seed {config.seed}, kind {config.kind})")
    return config


def load_scene_inputs(config: ExperimentConfig) -> Tuple[ObjectModel, CameraIntrinsics]:
    """Object model and camera named by the configuration"""
    try:
        return load_object_model(config.object_model), load_intrinsics(config.intrinsics)
    except (OSError, ValueError) as e:
        logger.error(f"Error loading scene inputs: {str(e)}", exc_info=True)
        raise ConfigError(f"cannot load scene inputs: {str(e)}") from e
