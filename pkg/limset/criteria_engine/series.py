"""
Three-valued classification of sum_n n^-1 exp(-e_n).

The sum is split into blocks (geometric blocks n in [rho^k, rho^(k+1)) on the log scale,
anchor windows of the heavy-tailed ladder grouped per generation on the loglog scale) and
the log block masses are fitted against ln k over the tail half.
"""

import math
from dataclasses import dataclass
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from typing import Callable

import numpy as np
from loguru import logger
from scipy.special import logsumexp

from limset.errors import InputError, ParameterError

CURVATURE_TOL = 1e-3
# relative offsets of the integration nodes inside a loglog window
WINDOW_NODES = np.concatenate([[0.0], np.geomspace(1e-12, 1.0, 160)])


class Classification(StrEnum):
    DIVERGENT = "Divergent"
    CONVERGENT = "Convergent"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class SeriesVerdict:
    classification: Classification
    block_log_masses: tuple[float, ...]
    fitted_exponent: float
    curvature: float
    margin: float
    scale: str = "log"
    # zero-margin leanings of the earlier and later halves of the tail window
    neighbors: tuple[Classification, Classification] | None = None
    note: str = ""

    @property
    def divergent(self) -> bool:
        return self.classification == Classification.DIVERGENT

    def to_json(self) -> dict:
        return {
            "class": str(self.classification),
            "scale": self.scale,
            "blocks": [m if math.isfinite(m) else None for m in self.block_log_masses],
            "fitted_exponent": self.fitted_exponent,
            "curvature": self.curvature,
            "margin": self.margin,
            "neighbors": [str(c) for c in self.neighbors] if self.neighbors else None,
            "note": self.note,
        }


def log_grid(config) -> np.ndarray:
    """ln n_k = k ln rho, k = 1..K."""
    return np.arange(1, config.K + 1) * math.log(config.rho)


def _fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(slope of the linear fit, curvature of the quadratic fit) of y against x."""
    if x.size < 2:
        return math.nan, 0.0
    span = max(1.0, float(np.max(np.abs(y))))
    ys = y / span
    slope = float(np.polyfit(x, ys, 1)[0]) * span
    curv = float(np.polyfit(x, ys, 2)[0]) * span if x.size >= 3 else 0.0
    return slope, curv


def _lean(slope: float) -> Classification:
    return Classification.DIVERGENT if slope > -1.0 else Classification.CONVERGENT


def classify_block_masses(ln_masses, margin: float, scale: str = "log") -> SeriesVerdict:
    """Classify from log block masses b_1..b_K (−inf marks an empty block)."""
    y = np.asarray(ln_masses, dtype=float)
    if np.any(np.isnan(y)) or np.any(y == np.inf):
        raise InputError("non-finite block mass (exponent is NaN or -inf)")
    if y.size < 4:
        raise ParameterError(f"need at least 4 blocks to classify, got {y.size}")
    masses = tuple(float(v) for v in y)
    k = np.arange(1, y.size + 1)
    start = y.size // 2
    x, yt = np.log(k[start:]), y[start:]

    def verdict(cls, slope=math.nan, curv=0.0, neighbors=None, note=""):
        return SeriesVerdict(cls, masses, slope, curv, margin, scale, neighbors, note)

    if yt[-1] == -np.inf:
        return verdict(Classification.CONVERGENT, note="tail blocks vanish")
    live = np.isfinite(yt)
    slope, curv = _fit(x[live], yt[live])
    if math.isnan(slope):
        return verdict(Classification.UNDECIDED, note="too few nonempty tail blocks")
    if curv > CURVATURE_TOL:
        return verdict(Classification.DIVERGENT, slope, curv, note="convex tail")
    if curv < -CURVATURE_TOL:
        return verdict(Classification.CONVERGENT, slope, curv, note="concave tail")
    if slope > -(1.0 - margin):
        return verdict(Classification.DIVERGENT, slope, curv)
    if slope < -(1.0 + margin):
        return verdict(Classification.CONVERGENT, slope, curv)
    half = x.size // 2
    early = _fit(x[:half][live[:half]], yt[:half][live[:half]])[0]
    late = _fit(x[half:][live[half:]], yt[half:][live[half:]])[0]
    neighbors = (_lean(slope if math.isnan(early) else early), _lean(slope if math.isnan(late) else late))
    return verdict(Classification.UNDECIDED, slope, curv, neighbors)


def series_classify(exponents: Callable[[np.ndarray], np.ndarray] | np.ndarray, config) -> SeriesVerdict:
    """
    Log-scale classification of sum_n n^-1 exp(-e_n).

    `exponents` maps ln n to e_n (vectorized) or holds e at the grid points ln n_k = k ln rho.
    +inf exponents are vanishing terms.
    """
    ln_n = log_grid(config)
    e = np.asarray(exponents(ln_n) if callable(exponents) else exponents, dtype=float)
    if e.shape != ln_n.shape:
        raise ParameterError(f"expected {ln_n.size} exponents, got shape {e.shape}")
    if np.any(np.isnan(e)) or np.any(e == -np.inf):
        raise InputError("non-finite exponent e_n")
    verdict = classify_block_masses(math.log(math.log(config.rho)) - e, config.margin, "log")
    logger.debug(
        f"series_classify: {verdict.classification} (slope={verdict.fitted_exponent:.4g}, "
        f"curvature={verdict.curvature:.3g})"
    )
    return verdict


def window_log_mass(v0: float, v1: float, ln_coef: float, seq) -> float:
    """
    ln of the integral over v in [v0, v1] of exp(v - e(v)), with e(v) = coef * c_n^2 / (2n)
    at v = ln ln n; a log-domain trapezoid on nodes packed towards v0.
    """
    if ln_coef == np.inf or not v1 > v0:
        return -math.inf
    v = v0 + (v1 - v0) * WINDOW_NODES
    if ln_coef == -np.inf:
        phi = v
    else:
        with np.errstate(over="ignore"):
            phi = v * (1.0 - np.exp(ln_coef + seq.ratio_log_loglog(v) - np.log(v)))
    h = np.diff(v)
    weights = np.concatenate([[h[0]], h[:-1] + h[1:], [h[-1]]]) * 0.5
    terms = phi + np.log(weights)
    if np.all(terms == -np.inf):
        return -math.inf
    return float(logsumexp(terms))
