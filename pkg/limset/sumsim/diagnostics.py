import math
from dataclasses import dataclass

from loguru import logger

from limset.errors import ParameterError
from limset.strassen_core import GridFn, dist_to_scaled_strassen
from limset.sumsim.brownian import brownian_paths


def talagrand_bound(x: float, lam: float, C: float = 1.0) -> float:
    """min(1, exp(C / x^2 - x lam / 2 - lam^2 / 2)); C is an unspecified absolute constant."""
    if not x > 0 or not lam > 0:
        raise ParameterError(f"x and lambda must be positive, got {x}, {lam}")
    expo = C / (x * x) - 0.5 * x * lam - 0.5 * lam * lam
    return 1.0 if expo >= 0 else math.exp(expo)


@dataclass(frozen=True)
class TalagrandDiagnostic:
    x: float
    lam: float
    C: float
    bound: float
    p_hat: float
    se: float
    reps: int

    @property
    def exceeds(self) -> bool:
        return self.p_hat - 3.0 * self.se > self.bound

    def to_json(self) -> dict:
        return {
            "x": self.x,
            "lambda": self.lam,
            "C": self.C,
            "bound": self.bound,
            "p_hat": self.p_hat,
            "se": self.se,
            "reps": self.reps,
            "exceeds_bound": self.exceeds,
            "informational": True,
        }


def talagrand_estimate(
    x: float, lam: float, reps: int, rng, grid_size: int = 64, C: float = 1.0
) -> TalagrandDiagnostic:
    """Monte Carlo P{d(W, lam K) >= x} for a standard scalar Brownian motion W on the grid."""
    if reps < 1:
        raise ParameterError(f"reps must be positive, got {reps}")
    paths = brownian_paths(1, grid_size, [[1.0]], 1.0, rng, reps)
    hits = sum(dist_to_scaled_strassen(GridFn.from_values(p), lam) >= x for p in paths)
    p = hits / reps
    diag = TalagrandDiagnostic(x, lam, C, talagrand_bound(x, lam, C), p, math.sqrt(p * (1 - p) / reps), reps)
    if diag.exceeds:
        logger.info(f"talagrand: estimate {p:.3g} above the bound {diag.bound:.3g} with C={C}")
    return diag
