"""
Run configuration: a flat INI file, one pydantic model per section.

Unknown sections or keys, and values that fail validation, raise
ConfigError naming the section and key before anything is computed.
"""

import configparser
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from liner_optimizer.constants import (
    CVAR_BETAS,
    DEFAULT_TAU,
    DUCT_HEIGHT,
    DUCT_LENGTH,
    FOM_CACHE_SIZE,
    GMRES_MAX_ITER,
    GMRES_RESTART,
    GMRES_TOL,
    GRID_K_COUNT,
    GRID_MU_SET,
    GRID_XII_SET,
    GRID_XIR_SET,
    INITIAL_ALPHA,
    INITIAL_XI,
    K_RANGE,
    LINER_LENGTH,
    LINER_START,
    MESH_SIZE,
    MONTE_CARLO_Q,
    MU_RANGE,
    PRESET_MODE_COUNT,
    REGULARIZATION_GAMMA,
    SHIFT_BETA1,
    SHIFT_BETA2,
    SMOOTHING_EPS,
    VALIDATION_DRAWS,
    VALIDATION_XII_RANGE,
    VALIDATION_XIR_RANGE,
)
from liner_optimizer.errors import ConfigError
from liner_optimizer.models import CvarConfig, SolverSettings
from liner_optimizer.types import GammaPolicy, PodMode, Range, SelectionRule, SolverMethod


def _split(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(item.strip() for item in value.split(",") if item.strip())
    return value


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class MeshSection(_Section):
    path: Optional[Path] = None
    length: float = Field(default=DUCT_LENGTH, gt=0)
    height: float = Field(default=DUCT_HEIGHT, gt=0)
    liner_start: float = Field(default=LINER_START, ge=0)
    liner_length: float = Field(default=LINER_LENGTH, gt=0)
    h: float = Field(default=MESH_SIZE, gt=0)

    @field_validator("path")
    def validate_path(cls, v):
        if v is not None and not v.is_file():
            raise ValueError(f"mesh file {v} does not exist")
        return v

    @model_validator(mode="after")
    def validate_liner(self):
        if self.liner_start + self.liner_length > self.length:
            raise ValueError("liner does not fit inside the duct")
        return self


class SamplingSection(_Section):
    seed: int = Field(default=0, ge=0)
    k_count: int = Field(default=GRID_K_COUNT, ge=2)
    k_range: Range = K_RANGE
    mu_set: Tuple[Tuple[float, float], ...] = GRID_MU_SET
    xir_set: Tuple[float, ...] = GRID_XIR_SET
    xii_set: Tuple[float, ...] = GRID_XII_SET
    mu_r_range: Range = MU_RANGE
    mu_i_range: Range = MU_RANGE
    Q: int = Field(default=MONTE_CARLO_Q, ge=1)
    validation_draws: int = Field(default=VALIDATION_DRAWS, ge=1)
    xir_range: Range = VALIDATION_XIR_RANGE
    xii_range: Range = VALIDATION_XII_RANGE

    @field_validator(
        "k_range", "mu_r_range", "mu_i_range", "xir_range", "xii_range", "xir_set", "xii_set",
        mode="before",
    )
    def split_lists(cls, v):
        return _split(v)

    @field_validator("mu_set", mode="before")
    def split_pairs(cls, v):
        # "1 0, 0 1" is the pair list (1 + 0i, 0 + 1i)
        if isinstance(v, str):
            return tuple(tuple(item.split()) for item in _split(v))
        return v

    @field_validator("xir_set")
    def validate_resistances(cls, v):
        if not v or any(value <= 0 for value in v):
            raise ValueError("resistances must be a non-empty list of positive values")
        return v

    @field_validator("k_range", "mu_r_range", "mu_i_range", "xir_range", "xii_range")
    def validate_range(cls, v, info):
        if v[0] > v[1]:
            raise ValueError(f"{info.field_name} is empty: {v[0]} > {v[1]}")
        return v

    @field_validator("k_range")
    def validate_wavenumbers(cls, v):
        if v[0] <= 0:
            raise ValueError("wavenumbers must be positive")
        return v


class PodSection(_Section):
    mode: PodMode = "mass_weighted"
    selection: SelectionRule = "energy"
    N: int = Field(default=PRESET_MODE_COUNT, ge=1)
    tau: float = Field(default=DEFAULT_TAU, gt=0, le=1)
    validate_modes: Tuple[int, ...] = (10, 20, 40)

    @field_validator("validate_modes", mode="before")
    def split_modes(cls, v):
        return _split(v)

    @field_validator("validate_modes")
    def validate_ladder(cls, v):
        if not v or any(n < 1 for n in v):
            raise ValueError("validate_modes must list positive mode counts")
        return tuple(sorted(set(v)))


class SolverSection(_Section):
    method: SolverMethod = "direct"
    tol: float = Field(default=GMRES_TOL, ge=0)
    beta1: float = SHIFT_BETA1
    beta2: float = SHIFT_BETA2
    max_iter: int = Field(default=GMRES_MAX_ITER, ge=1)
    restart: int = Field(default=GMRES_RESTART, ge=1)
    cache_size: int = Field(default=FOM_CACHE_SIZE, ge=1)

    def settings(self) -> SolverSettings:
        return SolverSettings(**self.model_dump())


class CvarSection(_Section):
    betas: Tuple[float, ...] = CVAR_BETAS
    eps: float = Field(default=SMOOTHING_EPS, gt=0)
    gamma: float = Field(default=REGULARIZATION_GAMMA, ge=0)
    gamma_p_policy: GammaPolicy = "hard_wall"
    gamma_p: Optional[float] = Field(default=None, gt=0)
    init_xi_r: float = Field(default=INITIAL_XI[0], gt=0)
    init_xi_i: float = INITIAL_XI[1]
    init_alpha: float = INITIAL_ALPHA
    max_iter: int = Field(default=100, ge=1)
    field_samples: int = Field(default=64, ge=0)

    @field_validator("betas", mode="before")
    def split_betas(cls, v):
        return _split(v)

    @field_validator("betas")
    def validate_betas(cls, v):
        if not v or any(not 0 < b < 1 for b in v):
            raise ValueError("betas must be probability levels in (0, 1)")
        return v

    @model_validator(mode="after")
    def validate_policy(self):
        if self.gamma_p_policy == "fixed" and self.gamma_p is None:
            raise ValueError("gamma_p_policy = fixed needs a gamma_p value")
        return self


class OutputSection(_Section):
    directory: Path = Path("liner_output")


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")
    mesh: MeshSection = MeshSection()
    sampling: SamplingSection = SamplingSection()
    pod: PodSection = PodSection()
    solver: SolverSection = SolverSection()
    cvar: CvarSection = CvarSection()
    output: OutputSection = OutputSection()

    def cvar_config(self, beta: float, gamma_p: float) -> CvarConfig:
        return CvarConfig(
            beta=beta,
            eps=self.cvar.eps,
            gamma=self.cvar.gamma,
            gamma_p=gamma_p,
            Q=self.sampling.Q,
            seed=self.sampling.seed,
            k_range=self.sampling.k_range,
            mu_r_range=self.sampling.mu_r_range,
            mu_i_range=self.sampling.mu_i_range,
        )

    def with_output(self, directory: Union[str, Path]) -> "RunConfig":
        return self.model_copy(update={"output": OutputSection(directory=Path(directory))})


SECTIONS: Dict[str, Type[_Section]] = {
    "mesh": MeshSection,
    "sampling": SamplingSection,
    "pod": PodSection,
    "solver": SolverSection,
    "cvar": CvarSection,
    "output": OutputSection,
}


def _section_model(name: str, values: Dict[str, str]) -> _Section:
    model = SECTIONS[name]
    for key in values:
        if key not in model.model_fields:
            raise ConfigError("unknown key", section=name, key=key)
    try:
        return model(**values)
    except ValidationError as exc:
        error = exc.errors()[0]
        key = str(error["loc"][0]) if error["loc"] else None
        raise ConfigError(error["msg"], section=name, key=key) from exc


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(strict=True, interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    sections = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError("unknown section", section=name)
        sections[name] = _section_model(name, dict(parser.items(name)))
    return RunConfig(**sections)


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text())
