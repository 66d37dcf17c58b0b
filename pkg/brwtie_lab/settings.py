"""
Experiment configuration files.

An experiment is a TOML file (or its JSON mirror) validated into
ExperimentConfig. The environment is given inline under [environment] or by
reference through `environment_file`, resolved relative to the experiment
file. Every failure here surfaces as ConfigError.
"""

import json
import logging
import tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from brwtie_lab.config import OptimalPathConfig, PdeConfig
from brwtie_lab.environment import (
    AnalyticLaplace,
    EnvironmentModel,
    GaussianBinary,
    TabulatedLaplace,
)
from brwtie_lab.errors import BrwLabError, ConfigError
from brwtie_lab.fields import IndicatorSet, ScalarField

logger = logging.getLogger(__name__)


class StrictModel(BaseModel):
    """Frozen base for experiment sections; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class FieldSpec(StrictModel):
    """A named closed-form function of time, or uniform-grid samples."""

    kind: Literal["constant", "linear", "vshape", "peak", "samples"]
    value: Optional[float] = None
    intercept: Optional[float] = None
    slope: Optional[float] = None
    base: Optional[float] = None
    top: Optional[float] = None
    center: float = 0.5
    values: Optional[List[float]] = None

    @model_validator(mode="after")
    def _required_parameters(self) -> "FieldSpec":
        needed = {
            "constant": ("value",),
            "linear": ("intercept", "slope"),
            "vshape": ("base", "slope"),
            "peak": ("top", "slope"),
            "samples": ("values",),
        }[self.kind]
        missing = [name for name in needed if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind} field needs {', '.join(missing)}")
        return self

    def build(self) -> ScalarField:
        if self.kind == "constant":
            return ScalarField.constant(self.value)
        if self.kind == "linear":
            return ScalarField.linear(self.intercept, self.slope)
        if self.kind == "vshape":
            return ScalarField.vshape(self.base, self.slope, self.center)
        if self.kind == "peak":
            return ScalarField.peak(self.top, self.slope, self.center)
        values = np.asarray(self.values, dtype=float)
        return ScalarField.from_samples(
            values, np.gradient(values, 1.0 / (values.size - 1)), name="samples"
        )


class EnvironmentSpec(StrictModel):
    """Which environment model to build and its parameters."""

    model: Literal["gaussian_binary", "gaussian", "exponential", "tabulated"]
    sigma: Optional[FieldSpec] = None
    beta: Optional[FieldSpec] = None
    offspring: int = Field(default=2, ge=2)
    log_growth: Optional[float] = Field(default=None, gt=0.0)
    base: Optional["EnvironmentSpec"] = None
    t_points: int = Field(default=65, ge=2)
    theta_points: Optional[List[float]] = None

    @model_validator(mode="after")
    def _model_parameters(self) -> "EnvironmentSpec":
        if self.model in ("gaussian_binary", "gaussian") and self.sigma is None:
            raise ValueError(f"{self.model} needs sigma")
        if self.model == "exponential" and self.beta is None:
            raise ValueError("exponential needs beta")
        if self.model == "tabulated" and (self.base is None or not self.theta_points):
            raise ValueError("tabulated needs base and theta_points")
        return self


EnvironmentSpec.model_rebuild()


class SpeedSection(StrictModel):
    grid: int = Field(default=OptimalPathConfig.GRID, ge=16)
    method: Literal["pava", "penalty"] = "pava"
    tol: float = Field(default=OptimalPathConfig.ENERGY_TOLERANCE, gt=0.0)


class ConstantsSection(StrictModel):
    mu: float = 0.0
    lambdas: List[float] = Field(default_factory=list)


class PsiSection(StrictModel):
    h: List[float] = Field(default_factory=lambda: [0.0])


class PdeSection(StrictModel):
    h: List[float] = Field(default_factory=lambda: [1.0])
    domain: Literal["interval", "halfline"] = "interval"
    resolution: float = Field(default=1.0, gt=0.0)
    length: float = Field(default=PdeConfig.HALFLINE_LENGTH, gt=0.0)


class SimulateSection(StrictModel):
    n: int = Field(default=16, ge=1)
    trials: int = Field(default=100, ge=1)
    mode: Literal["full_tree", "killing"] = "killing"
    max_pop: Optional[int] = Field(default=None, ge=1)
    barrier: Optional[FieldSpec] = None
    killing_set: List[Tuple[float, float]] = Field(
        default_factory=lambda: [(0.0, 1.0)]
    )

    @model_validator(mode="after")
    def _killing_barrier(self) -> "SimulateSection":
        if self.mode == "killing" and self.barrier is None:
            raise ValueError("killing mode needs a barrier")
        return self


class VerifySection(StrictModel):
    profile: Literal["quick", "full"] = "quick"


class ExperimentConfig(StrictModel):
    """A validated experiment file."""

    schema_version: Literal[1]
    name: str = "experiment"
    environment: Optional[EnvironmentSpec] = None
    environment_file: Optional[str] = None
    output_dir: str = "results"
    seed: Optional[int] = Field(default=None, ge=0, lt=1 << 64)
    speed: SpeedSection = Field(default_factory=SpeedSection)
    constants: ConstantsSection = Field(default_factory=ConstantsSection)
    psi: PsiSection = Field(default_factory=PsiSection)
    pde: PdeSection = Field(default_factory=PdeSection)
    simulate: SimulateSection = Field(default_factory=SimulateSection)
    verify: VerifySection = Field(default_factory=VerifySection)

    @model_validator(mode="after")
    def _one_environment(self) -> "ExperimentConfig":
        if (self.environment is None) == (self.environment_file is None):
            raise ValueError("give exactly one of environment and environment_file")
        return self

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Copy with command-line flags applied, re-validated."""
        data = self.model_dump()
        for dotted, value in overrides.items():
            if value is None:
                continue
            target = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                target = target[key]
            target[leaf] = value
        return _validate(data, "command-line overrides")


def _validate(data: Dict[str, Any], source: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid experiment config ({source}): {exc}") from exc


def _read_mapping(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            data = json.loads(path.read_text(encoding="utf-8"))
        else:
            with path.open("rb") as handle:
                data = tomllib.load(handle)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        kind = type(data).__name__
        raise ConfigError(f"{path}: top level must be a table, got {kind}")
    return data


def load_config(path: Path | str) -> ExperimentConfig:
    """
    Read and validate an experiment file, inlining a referenced environment.

    Raises:
        ConfigError: If the file is missing, unparsable or invalid
    """
    path = Path(path)
    data = _read_mapping(path)
    reference = data.get("environment_file")
    if reference is not None:
        if "environment" in data:
            raise ConfigError(
                f"{path}: give exactly one of environment and environment_file"
            )
        env_path = (path.parent / reference).resolve()
        env_data = _read_mapping(env_path)
        data = {k: v for k, v in data.items() if k != "environment_file"}
        data["environment"] = env_data.get("environment", env_data)
    config = _validate(data, str(path))
    logger.info("Loaded experiment %s from %s", config.name, path)
    return config


def _build(spec: EnvironmentSpec) -> EnvironmentModel:
    if spec.model == "gaussian_binary":
        return GaussianBinary(spec.sigma.build(), offspring=spec.offspring)
    if spec.model == "gaussian":
        if spec.log_growth is not None:
            return AnalyticLaplace.gaussian_growth(spec.sigma.build(), spec.log_growth)
        return AnalyticLaplace.gaussian(spec.sigma.build(), offspring=spec.offspring)
    if spec.model == "exponential":
        return AnalyticLaplace.exponential(spec.beta.build(), offspring=spec.offspring)
    base = _build(spec.base)
    return TabulatedLaplace.from_environment(
        base, np.linspace(0.0, 1.0, spec.t_points), spec.theta_points
    )


def build_environment(spec: EnvironmentSpec) -> EnvironmentModel:
    """
    Raises:
        ConfigError: If the parameters do not define a valid environment
    """
    try:
        return _build(spec)
    except BrwLabError as exc:
        raise ConfigError(f"invalid environment: {exc.message}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid environment: {exc}") from exc


def killing_set(section: SimulateSection) -> IndicatorSet:
    return IndicatorSet(section.killing_set)
