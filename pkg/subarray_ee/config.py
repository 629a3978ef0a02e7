"""
Experiment configuration: JSON in, validated pydantic models out.
"""

import hashlib
import json
import math
import os
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .channel_model import ClusterConfig, SystemDims
from .digital_stage import BISECTION_TOL, Mode
from .errors import InvalidArgumentError
from .metrics import Architecture, PowerModel

ENV_THREADS = "SUBARRAY_EE_THREADS"
ENV_OUT_DIR = "SUBARRAY_EE_OUT_DIR"
ENV_LOG_LEVEL = "SUBARRAY_EE_LOG_LEVEL"

DEFAULT_POWER_GRID_DBM = [float(p) for p in range(-10, 41, 5)]


class ExperimentConfig(BaseModel):
    """One Monte Carlo experiment; every field defaults to the reference setup."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dims: SystemDims = Field(default_factory=SystemDims)
    cluster: ClusterConfig = Field(default_factory=ClusterConfig)
    power_grid_dbm: List[float] = Field(
        default_factory=lambda: list(DEFAULT_POWER_GRID_DBM), min_length=1
    )
    noise_dbm: float = Field(default=0.0, allow_inf_nan=False)
    power_model: PowerModel = Field(default_factory=PowerModel)
    trials: int = Field(default=200, ge=1)
    base_seed: int = Field(default=20170601, ge=0, lt=2**64)
    eps: float = Field(default=1e-4, gt=0)
    mode: Mode = Mode.ENERGY_EFFICIENCY
    solvers: List[Architecture] = Field(
        default_factory=lambda: [Architecture.HYBRID, Architecture.FULLY_DIGITAL], min_length=1
    )
    max_outer_analog: int = Field(default=100, ge=1)
    max_sweeps: int = Field(default=100, ge=1)
    max_outer_dinkelbach: int = Field(default=50, ge=1)
    max_inner: int = Field(default=500, ge=1)
    bisection_tol: float = Field(default=BISECTION_TOL, gt=0)
    threads: int = Field(default=1, ge=1)

    @field_validator("power_grid_dbm")
    @classmethod
    def _finite_grid(cls, v):
        for p in v:
            if not math.isfinite(p):
                raise ValueError(f"power grid entries must be finite, got {p}")
        return v

    @field_validator("solvers")
    @classmethod
    def _unique_solvers(cls, v):
        if len(set(v)) != len(v):
            raise ValueError(f"duplicate solver in {[s.value for s in v]}")
        return v

    def resolved_json(self) -> str:
        """Canonical JSON with every default materialized."""
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        """SHA-256 of the canonical dump, ignoring ``threads`` (it cannot change results)."""
        payload = self.model_dump(mode="json", exclude={"threads"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _merge(base: dict, overrides: dict) -> dict:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[dict] = None
) -> ExperimentConfig:
    """
    Load and validate an experiment config.

    Args:
        path: JSON file; ``None`` gives the defaults.
        overrides: Values applied on top of the file (nested dicts merge);
            ``None`` values are ignored so unset CLI flags can be passed through.

    Raises:
        InvalidArgumentError: missing file, malformed JSON or invalid values.
    """
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise InvalidArgumentError(f"config file not found: {path}")
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f"malformed JSON in {path}: {e}") from e
        if not isinstance(data, dict):
            raise InvalidArgumentError(f"{path}: top level must be a JSON object")

    if overrides:
        data = _merge(data, {k: v for k, v in overrides.items() if v is not None})

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        where = f" in {path}" if path is not None else ""
        raise InvalidArgumentError(f"invalid configuration{where}:\n{e}") from e


def env_default(name: str, fallback=None, cast=str):
    """Read a default from the environment (populated from .env by the CLI)."""
    value = os.getenv(name)
    if value is None or value == "":
        return fallback
    try:
        return cast(value)
    except ValueError as e:
        raise InvalidArgumentError(f"{name}={value!r} is not a valid {cast.__name__}") from e
