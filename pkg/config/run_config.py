from dataclasses import dataclass, field
from typing import Literal, Optional

from pydantic import ConfigDict


@dataclass
class ClassifierConfig:
    __pydantic_config__ = ConfigDict(extra="forbid")
    """Series classifier and alpha bisection settings."""

    rho: float = 1.5
    K: int = 200
    margin: float = 0.1
    # "auto" picks loglog for the exact heavy-tailed model with a p-family normalizer
    scale: Literal["auto", "log", "loglog"] = "auto"
    loglog_k_max: int = 8
    epsilons: list[float] = field(default_factory=lambda: [0.5, 0.2, 0.1, 0.05, 0.02])
    alpha_hi: float = 3.0
    alpha_tol: float = 0.05
    alpha_doublings: int = 4

    def __post_init__(self):
        if not self.rho > 1.0:
            raise ValueError(f"rho must exceed 1, got {self.rho}")
        if self.K < 8:
            raise ValueError(f"K must be at least 8, got {self.K}")
        if not 0.0 < self.margin < 1.0:
            raise ValueError(f"margin must lie in (0, 1), got {self.margin}")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ValueError("epsilons must be a non-empty list of positive values")
        self.epsilons = sorted(self.epsilons, reverse=True)


@dataclass
class SimulationConfig:
    __pydantic_config__ = ConfigDict(extra="forbid")

    n_max: int = 1_000_000
    theta: float = 1.1
    burn_in_power: float = 0.3
    delta: float = 0.15
    grid_size: int = 64
    streams: int = 1
    seed: int = 20240611
    # snapshot functions at every `snapshot_every`-th checkpoint
    snapshot_every: int = 4
    sectors: int = 16
    sector_radius: float = 0.5
    containment_tol: float = 0.25
    upper_radius: float = 1.3
    talagrand_x: float = 1.0
    talagrand_C: float = 1.0
    talagrand_lambda: float = 1.0
    talagrand_reps: int = 0
    plots: bool = True

    def __post_init__(self):
        if not self.theta > 1.0:
            raise ValueError(f"theta must exceed 1, got {self.theta}")
        if self.n_max < 2:
            raise ValueError(f"n_max must be at least 2, got {self.n_max}")
        if not 0.0 <= self.burn_in_power < 1.0:
            raise ValueError(f"burn_in_power must lie in [0, 1), got {self.burn_in_power}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.streams < 1:
            raise ValueError(f"streams must be at least 1, got {self.streams}")


@dataclass
class Example8RunConfig:
    __pydantic_config__ = ConfigDict(extra="forbid")

    k_max: int = 3
    n_enum: int = 200
    envelope_probes: int = 1000
    simulate: bool = True
    n_max: Optional[int] = None
