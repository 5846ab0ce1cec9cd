import os
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from config.model_config import GaussianModelConfig, ModelConfig, NormalizerConfig
from config.run_config import ClassifierConfig, Example8RunConfig, SimulationConfig


class PointQuery(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["point"] = "point"
    id: Optional[str] = None
    x: list[float]


class FunctionQuery(BaseModel):
    """f = (x_1 g_1, ..., x_d g_d) from named Strassen profiles, explicit node values, or a CSV file."""

    model_config = ConfigDict(extra="forbid")

    type: Literal["function"] = "function"
    id: Optional[str] = None
    coefficients: Optional[list[float]] = None
    profiles: Optional[list[str]] = None
    values: Optional[list[list[float]]] = None
    csv: Optional[str] = None
    n_grid: int = Field(64, ge=1)


class AlphaQuery(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["alpha0", "coordinate_alphas", "tail_summability"]
    id: Optional[str] = None


Query = Annotated[Union[PointQuery, FunctionQuery, AlphaQuery], Field(discriminator="type")]


class OutputConfig(BaseModel):
    runs_dir: str = "./runs"

    def model_post_init(self, __context):
        self.runs_dir = os.environ.get("LIMSET_RUNS_DIR", self.runs_dir)


class Settings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelConfig = Field(default_factory=lambda: GaussianModelConfig(cov=[[1.0, 0.0], [0.0, 1.0]]))
    normalizer: NormalizerConfig = NormalizerConfig()
    queries: list[Query] = []
    simulation: SimulationConfig = SimulationConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    example8: Example8RunConfig = Example8RunConfig()
    output: OutputConfig = Field(default_factory=OutputConfig)
