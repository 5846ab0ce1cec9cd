import math
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gammainc, gammaincc
from scipy.stats import chi2

from limset.errors import DimensionError, ParameterError
from limset.heavy_tail_models.base import MomentModel

# Beyond this many standard deviations the truncation error is below 1e-13.
FULL_COV_SIGMAS = 8.0
QUAD_TOL = 1e-10
RADIAL_CACHE_SIZE = 4096


def _orthant_point(angles: tuple[float, ...]) -> tuple[np.ndarray, float]:
    """Hyperspherical coordinates: unit vector in the positive orthant and the surface Jacobian."""
    r = len(angles) + 1
    theta = np.empty(r)
    jac, s = 1.0, 1.0
    for k, a in enumerate(angles):
        theta[k] = s * math.cos(a)
        s *= math.sin(a)
        jac *= math.sin(a) ** (r - 2 - k)
    theta[-1] = s
    return theta, jac


def orthant_mean(fn, rank: int) -> np.ndarray:
    """
    Mean of fn(theta) for theta uniform on the unit sphere in R^rank, where fn only
    depends on theta^2. Nested adaptive quadrature over the angles of one orthant.
    """
    area = math.pi ** (rank / 2) / math.gamma(rank / 2) / 2 ** (rank - 1)

    def level(angles: tuple[float, ...]):
        if len(angles) == rank - 1:
            theta, jac = _orthant_point(angles)
            return jac * np.asarray(fn(theta), dtype=float)
        val, _ = integrate.quad_vec(
            lambda a: level((*angles, a)), 0.0, 0.5 * math.pi, epsabs=QUAD_TOL, epsrel=QUAD_TOL
        )
        return val

    return np.asarray(level(()) / area)


class GaussianModel(MomentModel):
    """Centered Gaussian N(0, cov)."""

    kind = "gaussian"
    supports_sampling = True

    def __init__(self, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise DimensionError(f"covariance must be square, got shape {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ParameterError("covariance must be symmetric")
        evals, evecs = np.linalg.eigh(cov)
        scale = max(float(np.trace(cov)), 1.0)
        if evals[0] < -1e-12 * scale:
            raise ParameterError(f"covariance must be positive semidefinite, min eigenvalue {evals[0]}")
        self.cov = 0.5 * (cov + cov.T)
        self.cov.setflags(write=False)
        self.dim = cov.shape[0]
        self._evals = np.where(evals > 1e-14 * scale, evals, 0.0)
        self._evecs = evecs
        self._root = evecs * np.sqrt(self._evals)[None, :]
        self._live = self._evals > 0

    @property
    def std_max(self) -> float:
        return math.sqrt(float(self._evals.max(initial=0.0)))

    def describe(self) -> dict:
        return {"kind": self.kind, "cov": self.cov.tolist()}

    @lru_cache(maxsize=RADIAL_CACHE_SIZE)
    def _radial(self, t: float, second_moment: bool) -> np.ndarray:
        """
        Per live eigen-direction: E[theta_i^2 r F_{chi2(r+2)}(t^2 / theta'L theta)] when
        `second_moment`, else the tail E[sf_{chi2(r)}(t^2 / theta'L theta)] (scalar).
        Read-only; entries are shared between calls.
        """
        lam = self._evals[self._live]
        r = lam.size
        tt = t * t
        if r == 1 or np.allclose(lam, lam[0], rtol=1e-12):
            if second_moment:
                out = np.full(r, chi2.cdf(tt / lam[0], r + 2))
            else:
                out = np.array(chi2.sf(tt / lam[0], r))
        elif second_moment:
            # chi2 cdf of r + 2 degrees of freedom at c is gammainc((r + 2) / 2, c / 2)
            out = orthant_mean(lambda th: r * th**2 * gammainc(0.5 * r + 1.0, 0.5 * tt / (th**2 @ lam)), r)
        else:
            out = orthant_mean(lambda th: gammaincc(0.5 * r, 0.5 * tt / (th**2 @ lam)), r)
        out.setflags(write=False)
        return out

    def trunc_cov_log(self, ln_t: float) -> np.ndarray:
        if ln_t == -math.inf or not np.any(self._live):
            return np.zeros((self.dim, self.dim))
        if ln_t >= math.log(FULL_COV_SIGMAS * self.std_max):
            return np.array(self.cov)
        factors = np.zeros(self.dim)
        factors[self._live] = self._radial(math.exp(ln_t), True)
        return (self._evecs * (self._evals * factors)[None, :]) @ self._evecs.T

    def coord_trunc_var_log(self, i: int, ln_t: float) -> float:
        self._check_coord(i)
        s2 = float(self.cov[i, i])
        if s2 <= 0 or ln_t == -math.inf:
            return 0.0
        if ln_t >= math.log(FULL_COV_SIGMAS * math.sqrt(s2)):
            return s2
        u = math.exp(ln_t) / math.sqrt(s2)
        # s^2 (P(|xi| <= u) - 2 u phi(u))
        return s2 * float(chi2.cdf(u * u, 3))

    def tail(self, t: float) -> float:
        if not np.any(self._live):
            return 0.0
        if t <= 0:
            return 1.0
        return float(self._radial(t, False))

    def sample(self, gen: np.random.Generator, count: int) -> np.ndarray:
        z = gen.standard_normal((count, self.dim))
        return z @ self._root.T
