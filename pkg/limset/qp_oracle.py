"""Reference solver for the tube problem: min N*sum(dh^2) s.t. |h_i - g_i| <= eps, h_0 = 0."""

from dataclasses import dataclass

import numpy as np
from loguru import logger

from limset.errors import ParameterError
from limset.strassen_core import GridFn


@dataclass
class QPResult:
    h: np.ndarray
    energy: float
    iterations: int
    converged: bool


def _objective(h: np.ndarray, n: int) -> float:
    return float(n * np.sum(np.diff(h, prepend=0.0) ** 2))


def _gradient(h: np.ndarray, n: int) -> np.ndarray:
    r = np.diff(h, prepend=0.0)
    grad = r.copy()
    grad[:-1] -= r[1:]
    return 2.0 * n * grad


def solve_tube_qp(g: GridFn, epsilon: float, max_iter: int = 200_000, tol: float = 1e-12) -> QPResult:
    """
    Accelerated projected gradient with adaptive restart on the box-constrained
    quadratic. Slow but independent of the taut-string walk; used as an oracle.
    """
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    n = g.n_grid
    vals = g.scalar[1:]
    lo, hi = vals - epsilon, vals + epsilon
    step = 1.0 / (8.0 * n)

    x = np.clip(np.zeros(n), lo, hi)
    y = x.copy()
    f_x = _objective(x, n)
    t = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x_new = np.clip(y - step * _gradient(y, n), lo, hi)
        f_new = _objective(x_new, n)
        if f_new > f_x:
            # restart momentum
            y, t = x.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        delta = float(np.max(np.abs(x_new - x)))
        x, f_x, t = x_new, f_new, t_new
        if delta < tol:
            converged = True
            break
    if not converged:
        logger.warning(f"tube QP did not converge in {max_iter} iterations (N={n}, eps={epsilon})")
    h = np.concatenate([[0.0], x])
    return QPResult(h=h, energy=_objective(x, n), iterations=it, converged=converged)
