"""
Configuration models and loading.

Precedence: CLI flag > config file > built-in default. The config file is a
flat key=value file (dotenv syntax) whose keys are the CLI flag names,
e.g. ``pyramid-scale=0.7``.
"""
import os
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, FilePath, ValidationError, model_validator

from src.core.errors import ConfigError
from src.core.selection import SelectionScheme

CONFIG_ENV = "HVDFLOW_CONFIG"

LAMBDA_RANGE = (1e-3, 1e-1)


class SolverConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    lam: float = Field(0.01, alias="lambda", ge=0.0)
    epsilon: float = Field(0.01, gt=0.0)
    max_iter: int = Field(500, ge=1)
    conv_tol: float = Field(1e-4, ge=0.0)
    pyramid_scale: float = Field(0.70, gt=0.0, lt=1.0)
    min_side: int = Field(16, ge=8)
    data_kind: Literal["ofc", "gca", "gdim"] = "ofc"
    regularizer: Literal["hvd", "tv_isotropic", "tv_anisotropic", "tv_weighted"] = "hvd"
    diagonal: Literal["shifted", "same_pixel"] = "shifted"
    lipschitz: Literal["standard", "data_aware"] = "standard"
    mixing: Literal["anchor_weighted", "step_weighted"] = "anchor_weighted"
    adaptive: bool = False
    weight_alpha: float = Field(10.0, gt=0.0)
    weight_beta: float = Field(1.0, gt=0.0)
    gdim_penalty: float = Field(1e-2, ge=0.0)
    warps: int = Field(1, ge=1)
    max_restarts: int = Field(20, ge=0)
    strict_lambda: bool = True
    scheme: SelectionScheme = SelectionScheme()

    @model_validator(mode="after")
    def _lambda_in_range(self):
        lo, hi = LAMBDA_RANGE
        if self.strict_lambda and not lo <= self.lam <= hi:
            raise ValueError(
                f"lambda {self.lam} outside [{lo}, {hi}]; set strict_lambda=false to override"
            )
        return self

    @property
    def lipschitz_standard(self) -> float:
        return 16.0 * self.lam / self.epsilon


class RunConfig(BaseModel):
    """One CLI/HTTP estimation run."""

    model_config = ConfigDict(frozen=True)

    frame0: FilePath
    frame1: FilePath
    gt: Optional[FilePath] = None
    out_flo: Optional[Path] = None
    out_png: Optional[Path] = None
    out_err_png: Optional[Path] = None
    report: Optional[Path] = None
    preprocess: bool = False
    max_mag: Optional[float] = Field(None, gt=0.0)
    solver: SolverConfig = SolverConfig()


# flag name -> (section, field)
FLAG_FIELDS: Dict[str, tuple] = {
    "data": ("solver", "data_kind"),
    "lambda": ("solver", "lam"),
    "epsilon": ("solver", "epsilon"),
    "pyramid-scale": ("solver", "pyramid_scale"),
    "max-iter": ("solver", "max_iter"),
    "conv-tol": ("solver", "conv_tol"),
    "min-side": ("solver", "min_side"),
    "regularizer": ("solver", "regularizer"),
    "diagonal": ("solver", "diagonal"),
    "lipschitz": ("solver", "lipschitz"),
    "mixing": ("solver", "mixing"),
    "adaptive": ("solver", "adaptive"),
    "alpha": ("solver", "weight_alpha"),
    "beta": ("solver", "weight_beta"),
    "gdim-penalty": ("solver", "gdim_penalty"),
    "warps": ("solver", "warps"),
    "strict-lambda": ("solver", "strict_lambda"),
    "scheme": ("scheme", "kind"),
    "ratio": ("scheme", "ratio"),
    "sig-frac": ("scheme", "significant_fraction"),
    "seed": ("scheme", "seed"),
    "preprocess": ("run", "preprocess"),
    "max-mag": ("run", "max_mag"),
}


def normalize_key(key: str) -> str:
    return key.strip().lower().replace("_", "-")


def load_config_file(path: Optional[str] = None) -> Dict[str, str]:
    """Read the flat key=value file given by ``path`` or $HVDFLOW_CONFIG."""
    path = path or os.getenv(CONFIG_ENV)
    if not path:
        return {}
    if not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    values = {normalize_key(k): v for k, v in dotenv_values(path).items() if v is not None}
    unknown = sorted(set(values) - set(FLAG_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {', '.join(unknown)}")
    return values


def split_sections(values: Mapping[str, Any]) -> Dict[str, Dict[str, Any]]:
    sections: Dict[str, Dict[str, Any]] = {"solver": {}, "scheme": {}, "run": {}}
    for flag, value in values.items():
        if value is None:
            continue
        try:
            section, field = FLAG_FIELDS[normalize_key(flag)]
        except KeyError:
            raise ConfigError(f"unknown option '{flag}'") from None
        sections[section][field] = value
    return sections


def build_solver_config(
    cli_values: Optional[Mapping[str, Any]] = None,
    file_values: Optional[Mapping[str, Any]] = None,
) -> SolverConfig:
    merged = {**(file_values or {}), **{k: v for k, v in (cli_values or {}).items() if v is not None}}
    sections = split_sections(merged)
    try:
        scheme = SelectionScheme(**sections["scheme"])
        return SolverConfig(scheme=scheme, **sections["solver"])
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def build_run_config(
    paths: Mapping[str, Any],
    cli_values: Optional[Mapping[str, Any]] = None,
    file_values: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Args:
        paths: frame0, frame1 and the optional gt/out_* paths
        cli_values: flag name -> value, None for flags not given
        file_values: output of load_config_file
    """
    solver = build_solver_config(cli_values, file_values)
    merged = {**(file_values or {}), **{k: v for k, v in (cli_values or {}).items() if v is not None}}
    run_fields = split_sections(merged)["run"]
    try:
        return RunConfig(solver=solver, **run_fields, **{k: v for k, v in paths.items() if v is not None})
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def with_lambda(config: SolverConfig, lam: float) -> SolverConfig:
    """Copy of ``config`` with another lambda, validated like a fresh config."""
    try:
        return SolverConfig.model_validate({**config.model_dump(by_alias=True), "lambda": lam})
    except ValidationError as e:
        raise ConfigError(f"invalid lambda {lam}: {e}") from e
