import math
from dataclasses import dataclass

import numpy as np
from loguru import logger

from limset.errors import DimensionError, ParameterError
from limset.strassen_core import GridFn, min_energy_in_ball

BATCH = 10_000


def _scale_matrix(scale_matrix) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(scale_matrix, dtype=float))
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"scale matrix must be square, got shape {mat.shape}")
    return mat


def brownian_paths(n: int, grid_size: int, scale_matrix, c_n: float, rng, reps: int) -> np.ndarray:
    """
    `reps` paths Gamma W(n t) / c_n on the grid, shape (reps, grid_size + 1, d).
    Increments are drawn as one (reps, grid_size, d) block, row-major.
    """
    if n < 1 or grid_size < 1 or reps < 0:
        raise ParameterError(f"need n >= 1, grid_size >= 1 and reps >= 0, got {n}, {grid_size}, {reps}")
    if not c_n > 0:
        raise ParameterError(f"c_n must be positive, got {c_n}")
    mat = _scale_matrix(scale_matrix)
    gen = getattr(rng, "generator", rng)
    steps = gen.standard_normal((reps, grid_size, mat.shape[0])) * math.sqrt(n / grid_size)
    steps = steps @ mat.T / c_n
    out = np.zeros((reps, grid_size + 1, mat.shape[0]))
    out[:, 1:, :] = np.cumsum(steps, axis=1)
    return out


def brownian_path(n: int, grid_size: int, scale_matrix, c_n: float, rng) -> GridFn:
    return GridFn.from_values(brownian_paths(n, grid_size, scale_matrix, c_n, rng, 1)[0])


def _sup_distances(f: GridFn, scale_matrix, c_n: float, n: int, reps: int, rng, batch: int = BATCH) -> np.ndarray:
    mat = _scale_matrix(scale_matrix)
    if mat.shape[0] != f.dim:
        raise DimensionError(f"scale matrix is {mat.shape[0]}-dimensional, f has dim {f.dim}")
    out = np.empty(reps)
    done = 0
    while done < reps:
        m = min(batch, reps - done)
        paths = brownian_paths(n, f.n_grid, mat, c_n, rng, m)
        out[done : done + m] = np.max(np.linalg.norm(paths - f.values[None, :, :], axis=2), axis=1)
        done += m
    return out


@dataclass(frozen=True)
class SmallBallEstimate:
    epsilon: float
    p_hat: float
    se: float
    hits: int
    reps: int

    def to_json(self) -> dict:
        return {"epsilon": self.epsilon, "p_hat": self.p_hat, "se": self.se, "hits": self.hits, "reps": self.reps}


def _estimate(distances: np.ndarray, epsilon: float) -> SmallBallEstimate:
    reps = distances.size
    hits = int(np.count_nonzero(distances < epsilon))
    p = hits / reps if reps else math.nan
    se = math.sqrt(p * (1.0 - p) / reps) if reps else math.nan
    return SmallBallEstimate(epsilon, p, se, hits, reps)


def small_ball_estimate(
    f: GridFn, scale_matrix, c_n: float, n: int, epsilon: float, reps: int, rng
) -> SmallBallEstimate:
    """Frequency of ||Gamma W_(n) / c_n - f|| < epsilon with its binomial standard error."""
    if reps < 1:
        raise ParameterError(f"reps must be positive, got {reps}")
    est = _estimate(_sup_distances(f, scale_matrix, c_n, n, reps, rng), epsilon)
    logger.debug(f"small ball eps={epsilon}: p={est.p_hat:.4g} +- {est.se:.2g} ({est.hits}/{reps})")
    return est


def small_ball_bounds(f: GridFn, lam: float, c_n: float, n: int, epsilon: float) -> tuple[float, float]:
    """
    Scalar case: with r = I(f_eps) c_n^2 / (2 n lam^2),
    P(ball of radius 2 eps) >= exp(-r) / 2 and P(ball of radius eps) <= exp(-r).
    """
    if f.dim != 1:
        raise DimensionError("the small-ball bounds are stated for scalar paths")
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    rate = min_energy_in_ball(f, epsilon).value * c_n * c_n / (2.0 * n * lam * lam)
    return 0.5 * math.exp(-rate), math.exp(-rate)


@dataclass(frozen=True)
class SmallBallSandwich:
    inner: SmallBallEstimate
    outer: SmallBallEstimate
    lower: float
    upper: float
    min_hits: int = 100

    def holds(self, k: float = 3.0) -> bool:
        """Both bounds within k standard errors, wherever the estimate has enough hits."""
        ok = True
        if self.outer.hits >= self.min_hits:
            ok &= self.lower <= self.outer.p_hat + k * self.outer.se
        if self.inner.hits >= self.min_hits:
            ok &= self.inner.p_hat - k * self.inner.se <= self.upper
        return bool(ok)

    def to_json(self) -> dict:
        return {
            "inner": self.inner.to_json(),
            "outer": self.outer.to_json(),
            "lower_bound": self.lower,
            "upper_bound": self.upper,
            "holds": self.holds(),
        }


def small_ball_sandwich(
    f: GridFn, lam: float, c_n: float, n: int, epsilon: float, reps: int, rng
) -> SmallBallSandwich:
    """Estimates for radii eps and 2 eps from one batch of paths next to both bounds."""
    distances = _sup_distances(f, [[lam]], c_n, n, reps, rng)
    lower, upper = small_ball_bounds(f, lam, c_n, n, epsilon)
    return SmallBallSandwich(_estimate(distances, epsilon), _estimate(distances, 2.0 * epsilon), lower, upper)
