"""Descriptor sections: the distribution model and the normalizer sequence."""

from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator


class StarSegmentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sigma: float
    z: list[float]


class StarSetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    segments: list[StarSegmentConfig] = Field(min_length=1)
    closure: bool = True


class GaussianModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["gaussian"] = "gaussian"
    cov: list[list[float]]


class CoordinateLawConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    law: Literal["normal", "rademacher", "student_t"] = "normal"
    scale: float = Field(1.0, ge=0.0)
    df: Optional[float] = None

    @model_validator(mode="after")
    def _df_only_for_student(self):
        if self.law == "student_t" and self.df is None:
            raise ValueError("student_t needs df")
        if self.law != "student_t" and self.df is not None:
            raise ValueError(f"df is not a parameter of the {self.law} law")
        return self

    def to_spec(self) -> dict:
        return self.model_dump(exclude_none=True)


class IndependentModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["independent_components"] = "independent_components"
    coordinate_laws: list[CoordinateLawConfig] = Field(min_length=1)


class Example8ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["example8"] = "example8"
    star_set: StarSetConfig
    mode: Literal["exact_log", "scaled"] = "exact_log"
    kappa: int = Field(8, ge=1)
    k_max: int = Field(2, ge=1)
    base: int = Field(2, ge=2)


ModelConfig = Annotated[
    Union[GaussianModelConfig, IndependentModelConfig, Example8ModelConfig],
    Field(discriminator="kind"),
]


class NormalizerConfig(BaseModel):
    """c_n family plus the range on which (cn1)/(cn2) are validated."""

    model_config = ConfigDict(extra="forbid")

    family: Literal["sqrt_2n_loglog", "sqrt_2n_loglog_pow", "power", "tabulated"] = "sqrt_2n_loglog"
    p: float = 1.0
    gamma: float = 0.5
    scale: float = Field(1.0, gt=0.0)
    # tabulated c_1, c_2, ...
    values: Optional[list[float]] = None
    n_min: int = Field(10, ge=3)
    n_max: int = Field(1_000_000, ge=4)

    @model_validator(mode="after")
    def _check(self):
        if self.family == "tabulated" and not self.values:
            raise ValueError("tabulated normalizer needs values")
        if self.n_max <= self.n_min:
            raise ValueError(f"n_max ({self.n_max}) must exceed n_min ({self.n_min})")
        return self
