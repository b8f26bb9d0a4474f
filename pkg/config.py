from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Optional, Union
import hashlib
import json

from pydantic import ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, DotEnvSettingsSource, EnvSettingsSource

from pharmonic.errors import ConfigError
from pharmonic.target import Target

CALIBRATION_FILE = Path(__file__).with_name("calibration.json")
HASH_EXCLUDED = {"output_dir"}


class ExperimentConfig(BaseSettings):
    # problem
    m: int = 3
    p: float = 2.0
    h: str = "1/32"
    target: str = "sphere:3"
    boundary: str = "radial"
    preset: Optional[str] = None
    preset_param: Optional[float] = None
    field_path: Optional[str] = None

    # energy and monotonicity
    gamma: float = 0.5
    r_max: float = 0.5
    tol_mono: float = 0.05

    # stratification constants
    epsilon: float = 0.1
    delta: float = 0.5
    eta: float = 0.1
    A: int = 2
    alpha: float = 0.25
    r_cut: float = 0.1
    eps_thresh: float = 1.0
    eps_cs: float = 0.05
    eta_cs: float = 0.5
    eps_incl: float = 0.002
    k_max: Optional[int] = None
    j_max: int = 4
    stride: int = 2

    # solver
    init: str = "harmonic"
    seed: int = 0
    perturbation: float = 1e-3
    max_iter: int = 400
    tol_energy: float = 1e-9
    tol_grad: float = 1e-5
    eps_reg: float = 1e-6

    # quadrature and search
    n_directions: int = 64
    n_radial: int = 12
    n_candidates: int = 200
    reg_r_max: float = 1.0
    census_radius: float = 0.5

    # run
    output_dir: str = "results"
    strict: bool = False
    workers: int = 1

    class Config:
        env_file = ".env"
        env_prefix = "PHARM_"
        extra = "ignore"

    @field_validator("m")
    @classmethod
    def _supported_dim(cls, v: int) -> int:
        if v not in (2, 3):
            raise ValueError(f"m must be 2 or 3, got {v}")
        return v

    @field_validator("p")
    @classmethod
    def _p_above_one(cls, v: float) -> float:
        if v <= 1:
            raise ValueError(f"p must exceed 1, got {v}")
        return v

    @field_validator("h")
    @classmethod
    def _reciprocal(cls, v: str) -> str:
        frac = Fraction(str(v).strip())
        if frac <= 0 or frac.numerator != 1:
            raise ValueError(f"h must be 1/n, got {v}")
        return f"1/{frac.denominator}"

    @field_validator("gamma")
    @classmethod
    def _ladder_ratio(cls, v: float) -> float:
        if not 0 < v <= 0.5:
            raise ValueError(f"gamma must lie in (0, 1/2], got {v}")
        return v

    @field_validator("target")
    @classmethod
    def _known_target(cls, v: str) -> str:
        return str(Target.parse(v))

    @field_validator(
        "tol_mono", "epsilon", "delta", "eta", "alpha", "r_cut", "eps_thresh", "eps_cs", "eta_cs", "eps_incl",
        "r_max", "reg_r_max", "census_radius",
    )
    @classmethod
    def _positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"threshold must be positive, got {v}")
        return v

    @field_validator("A", "j_max", "stride", "workers", "n_directions", "n_radial", "n_candidates", "max_iter")
    @classmethod
    def _positive_int(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"count must be at least 1, got {v}")
        return v

    @model_validator(mode="after")
    def _strata_depth(self) -> "ExperimentConfig":
        if self.k_max is not None and not 0 <= self.k_max < self.m:
            raise ValueError(f"k_max must lie in 0..{self.m - 1}, got {self.k_max}")
        return self

    @property
    def n(self) -> int:
        return Fraction(self.h).denominator

    @property
    def strata_k_max(self) -> int:
        return self.m - 1 if self.k_max is None else self.k_max


def _environment() -> Dict[str, Any]:
    """Values set through PHARM_* variables or the .env file"""
    values: Dict[str, Any] = {}
    values.update(DotEnvSettingsSource(ExperimentConfig)())
    values.update(EnvSettingsSource(ExperimentConfig)())
    return values


def load_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> ExperimentConfig:
    """Defaults < JSON config file < environment < explicit overrides"""
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}")
        unknown = sorted(set(data) - set(ExperimentConfig.model_fields))
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
    data.update(_environment())
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigError(str(e))


def override(cfg: ExperimentConfig, **changes: Any) -> ExperimentConfig:
    merged = cfg.model_dump()
    merged.update({k: v for k, v in changes.items() if v is not None})
    try:
        return ExperimentConfig(**merged)
    except ValidationError as e:
        raise ConfigError(str(e))


def canonical_json(cfg: ExperimentConfig) -> str:
    payload = {k: v for k, v in cfg.model_dump().items() if k not in HASH_EXCLUDED}
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


def save_config(cfg: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(cfg.model_dump(), sort_keys=True, indent=2) + "\n")
    return path


def calibration() -> Dict[str, Any]:
    return json.loads(CALIBRATION_FILE.read_text())
