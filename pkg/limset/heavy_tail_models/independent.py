import math
from abc import ABC, abstractmethod
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.stats import chi2, norm, t as student_t

from limset.errors import ParameterError
from limset.heavy_tail_models.base import MomentModel, _open_uniforms


class CoordinateLaw(ABC):
    name: str = ""

    def __init__(self, scale: float = 1.0):
        if scale < 0:
            raise ParameterError(f"scale must be nonnegative, got {scale}")
        self.scale = float(scale)

    @abstractmethod
    def _unit_trunc_second_moment(self, u: float) -> float:
        """E[Y^2 1{|Y| <= u}] for the unit-scale law."""

    @abstractmethod
    def _unit_tail(self, u: float) -> float:
        """P(|Y| > u) for the unit-scale law."""

    @abstractmethod
    def _unit_ppf(self, q: np.ndarray) -> np.ndarray:
        pass

    @property
    @abstractmethod
    def variance(self) -> float:
        pass

    def describe(self) -> dict:
        return {"law": self.name, "scale": self.scale}

    def trunc_second_moment(self, t: float) -> float:
        if self.scale == 0 or t <= 0:
            return 0.0
        if math.isinf(t):
            return self.variance
        return self.scale**2 * self._unit_trunc_second_moment(t / self.scale)

    def trunc_second_moment_log(self, ln_t: float) -> float:
        if ln_t == -math.inf:
            return 0.0
        return self.trunc_second_moment(math.exp(ln_t) if ln_t < 700 else math.inf)

    def tail(self, t: float) -> float:
        if self.scale == 0:
            return 0.0
        if t <= 0:
            return 1.0
        return self._unit_tail(t / self.scale)

    def ppf(self, q: np.ndarray) -> np.ndarray:
        return self.scale * self._unit_ppf(q)


class NormalLaw(CoordinateLaw):
    name = "normal"

    def _unit_trunc_second_moment(self, u: float) -> float:
        if u >= 40.0:
            return 1.0
        return float(chi2.cdf(u * u, 3))

    def _unit_tail(self, u: float) -> float:
        return float(2.0 * norm.sf(u))

    def _unit_ppf(self, q):
        return norm.ppf(q)

    @property
    def variance(self) -> float:
        return self.scale**2


class RademacherLaw(CoordinateLaw):
    name = "rademacher"

    def _unit_trunc_second_moment(self, u: float) -> float:
        return 1.0 if u >= 1.0 else 0.0

    def _unit_tail(self, u: float) -> float:
        return 1.0 if u < 1.0 else 0.0

    def _unit_ppf(self, q):
        return np.where(q < 0.5, -1.0, 1.0)

    @property
    def variance(self) -> float:
        return self.scale**2


class StudentTLaw(CoordinateLaw):
    """Student t with `df` degrees of freedom; df <= 2 has infinite variance."""

    name = "student_t"

    def __init__(self, df: float, scale: float = 1.0):
        super().__init__(scale)
        if not df > 0:
            raise ParameterError(f"df must be positive, got {df}")
        self.df = float(df)

    def describe(self) -> dict:
        return {**super().describe(), "df": self.df}

    def _unit_trunc_second_moment(self, u: float) -> float:
        return self._unit_trunc_second_moment_log(math.log(u))

    @lru_cache(maxsize=4096)
    def _unit_trunc_second_moment_log(self, ln_u: float) -> float:
        if self.df > 2 and ln_u > 14.0:
            return self.df / (self.df - 2.0)
        if ln_u <= -30.0:
            return 0.0
        # integrate x^2 pdf(x) over [0, u] in s = log x
        val, _ = integrate.quad(
            lambda s: math.exp(3.0 * s + student_t.logpdf(math.exp(s), self.df)),
            -30.0,
            ln_u,
            limit=400,
        )
        return 2.0 * val

    def trunc_second_moment_log(self, ln_t: float) -> float:
        if self.scale == 0:
            return 0.0
        return self.scale**2 * self._unit_trunc_second_moment_log(ln_t - math.log(self.scale))

    def _unit_tail(self, u: float) -> float:
        return float(2.0 * student_t.sf(u, self.df))

    def _unit_ppf(self, q):
        return student_t.ppf(q, self.df)

    @property
    def variance(self) -> float:
        if self.df <= 2:
            return math.inf
        return self.scale**2 * self.df / (self.df - 2.0)


LAWS = {"normal": NormalLaw, "rademacher": RademacherLaw, "student_t": StudentTLaw}


def make_law(spec: dict) -> CoordinateLaw:
    spec = dict(spec)
    name = spec.pop("law")
    try:
        cls = LAWS[name]
    except KeyError:
        raise ParameterError(f"unknown coordinate law {name!r}; choose from {sorted(LAWS)}")
    return cls(**spec)


class IndependentComponentsModel(MomentModel):
    """X = (X_1, ..., X_d) with independent coordinates."""

    kind = "independent_components"
    supports_sampling = True

    def __init__(self, laws: list[CoordinateLaw]):
        if not laws:
            raise ParameterError("at least one coordinate law is required")
        self.laws = list(laws)
        self.dim = len(self.laws)

    def describe(self) -> dict:
        return {"kind": self.kind, "coordinate_laws": [law.describe() for law in self.laws]}

    def coord_trunc_var_log(self, i: int, ln_t: float) -> float:
        self._check_coord(i)
        return self.laws[i].trunc_second_moment_log(ln_t)

    def trunc_cov_log(self, ln_t: float) -> np.ndarray:
        return np.diag([self.coord_trunc_var_log(i, ln_t) for i in range(self.dim)])

    def tail(self, t: float) -> float:
        """Exact for d = 1; the union bound sum_i P(|X_i| > t / sqrt(d)) otherwise."""
        if self.dim == 1:
            return self.laws[0].tail(t)
        return min(1.0, sum(law.tail(t / math.sqrt(self.dim)) for law in self.laws))

    def sample(self, gen: np.random.Generator, count: int) -> np.ndarray:
        u = _open_uniforms(gen, (count, self.dim))
        return np.column_stack([law.ppf(u[:, i]) for i, law in enumerate(self.laws)])
