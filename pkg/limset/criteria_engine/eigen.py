import math
from dataclasses import dataclass

import numpy as np

from limset.errors import DimensionError, ParameterError

MAX_JACOBI_DIM = 8
RANK_TOL = 1e-12
MAX_SWEEPS = 64


def jacobi_eigh(mat, tol: float = 1e-15, max_sweeps: int = MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """
    Cyclic Jacobi rotations for a small symmetric matrix.

    Returns eigenvalues in descending order and the matching eigenvectors as rows.
    """
    a = np.array(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    d = a.shape[0]
    if d > MAX_JACOBI_DIM:
        raise ParameterError(f"Jacobi eigensolver supports d <= {MAX_JACOBI_DIM}, got d={d}")
    a = 0.5 * (a + a.T)
    v = np.eye(d)
    scale = max(float(np.linalg.norm(a)), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.tril(a, -1) ** 2)))
        if off <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= tol * scale * 1e-3:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(d)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
                v = v @ rot
    evals = np.diag(a).copy()
    order = np.argsort(-evals, kind="stable")
    return evals[order], v[:, order].T


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Gamma_n^2 = sum_i lambda_i^2 u_i u_i^T with lambda_1 >= ... >= lambda_rank > 0."""

    ln_n: float
    lambdas: np.ndarray
    vectors: np.ndarray
    rank: int

    @property
    def variances(self) -> np.ndarray:
        return self.lambdas**2

    @property
    def ln_top_variance(self) -> float:
        """ln lambda_1^2; -inf for the zero matrix."""
        return 2.0 * math.log(self.lambdas[0]) if self.rank else -math.inf

    def reconstruct(self) -> np.ndarray:
        return (self.vectors.T * self.variances) @ self.vectors

    def key(self) -> bytes:
        return np.round(self.vectors, 12).tobytes()

    def to_json(self) -> dict:
        return {
            "ln_n": self.ln_n,
            "lambdas": self.lambdas.tolist(),
            "vectors": self.vectors.tolist(),
            "rank": self.rank,
        }


def eigensystem_from_cov(cov, ln_n: float = math.nan) -> EigenSystem:
    """Eigenvalues below 1e-12 * trace are clamped to zero and excluded from the rank."""
    evals, vecs = jacobi_eigh(cov)
    trace = float(np.trace(cov))
    evals = np.where(evals > RANK_TOL * trace, evals, 0.0)
    rank = int(np.count_nonzero(evals))
    return EigenSystem(ln_n=float(ln_n), lambdas=np.sqrt(evals), vectors=vecs, rank=rank)


def eigensystem(model, seq, n: int | None = None, ln_n: float | None = None) -> EigenSystem:
    """Eigen-system of Gamma_n^2 = trunc_cov(c_n); give n or ln n."""
    if (n is None) == (ln_n is None):
        raise ParameterError("give exactly one of n and ln_n")
    if ln_n is None:
        if n < 1:
            raise ParameterError(f"n must be positive, got {n}")
        ln_n = math.log(n)
    if model.dim > MAX_JACOBI_DIM:
        raise ParameterError(f"eigen-systems are supported for d <= {MAX_JACOBI_DIM}, got d={model.dim}")
    return eigensystem_from_cov(model.trunc_cov_log(float(seq.log_c(ln_n))), ln_n)
