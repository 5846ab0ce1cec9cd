import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist
from scipy.stats import norm, qmc

from limset.criteria_engine.membership import AlphaEstimate, BlockPlan, alpha0, build_plan, coordinate_alphas, point_membership
from limset.criteria_engine.normalizers import NormalizerSeq
from limset.errors import DimensionError
from limset.heavy_tail_models.base import StarSet
from limset.strassen_core import GridFn, dirichlet_energy, dist_to_scaled_strassen, strassen_sample

BOUNDARY_POINTS = 720
SOBOL_LOG2_POINTS = 14


@lru_cache(maxsize=8)
def _sphere_points(dim: int) -> np.ndarray:
    """Scrambled Sobol points pushed to the unit sphere in R^dim (fixed seed)."""
    u = qmc.Sobol(dim, scramble=True, seed=7).random_base2(SOBOL_LOG2_POINTS)
    z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _unit_directions(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        phi = np.linspace(0.0, 2.0 * math.pi, count, endpoint=False)
        return np.column_stack([np.cos(phi), np.sin(phi)])
    return _sphere_points(dim)


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """{shape @ y : |y| <= 1}."""

    shape: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.shape.shape[0])

    def boundary(self, count: int = BOUNDARY_POINTS) -> np.ndarray:
        return _unit_directions(self.dim, count) @ self.shape.T

    def contains(self, p, tol: float = 1e-9) -> bool:
        return self.distance(p) <= tol

    def distance(self, p) -> float:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim,):
            raise DimensionError(f"point has shape {p.shape}, set dimension is {self.dim}")
        y, *_ = np.linalg.lstsq(self.shape, p, rcond=None)
        if np.allclose(self.shape @ y, p, atol=1e-12) and np.linalg.norm(y) <= 1.0:
            return 0.0
        return float(np.min(cdist(p[None, :], self.boundary())))

    def probe_points(self) -> np.ndarray:
        pts = self.boundary(16) if self.dim <= 2 else np.vstack([self.shape.T, -self.shape.T])
        return np.unique(np.round(np.vstack([pts, 0.5 * pts]), 15), axis=0)

    def coordinate_extent(self) -> np.ndarray:
        return np.sqrt(np.sum(self.shape**2, axis=1))

    def dominates(self, y, tol: float = 1e-9) -> bool:
        """
        Some x in the ellipsoid has |x_i| >= y_i for every i.

        For each sign pattern s this is min |u| subject to s_i (shape @ u)_i >= y_i being at
        most 1; the minimizer solves the constraints of some active subset with equality.
        """
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,):
            raise DimensionError(f"point has shape {y.shape}, set dimension is {self.dim}")
        if np.all(y <= tol):
            return True
        # x and -x both lie in the set, so the first sign can stay fixed
        for tail in itertools.product((1.0, -1.0), repeat=self.dim - 1):
            rows = np.array((1.0, *tail))[:, None] * self.shape
            for size in range(1, self.dim + 1):
                for active in itertools.combinations(range(self.dim), size):
                    idx = list(active)
                    u = np.linalg.pinv(rows[idx]) @ y[idx]
                    if not np.allclose(rows[idx] @ u, y[idx], atol=1e-10):
                        continue
                    if np.all(rows @ u >= y - tol) and np.linalg.norm(u) <= 1.0 + tol:
                        return True
        return False

    def describe(self) -> dict:
        return {"type": "ellipsoid", "shape": self.shape.tolist()}


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    def distance(self, p) -> float:
        p = np.asarray(p, dtype=float)
        if self.points.size == 0:
            return math.inf
        return float(np.min(cdist(p[None, :], self.points)))

    def contains(self, p, tol: float = 1e-9) -> bool:
        return self.distance(p) <= tol

    def probe_points(self) -> np.ndarray:
        return self.points

    def coordinate_extent(self) -> np.ndarray:
        if self.points.size == 0:
            return np.zeros(self.dim)
        return np.max(np.abs(self.points), axis=0)

    def dominates(self, y, tol: float = 1e-9) -> bool:
        if self.points.size == 0:
            return False
        y = np.asarray(y, dtype=float)
        return bool(np.any(np.all(np.abs(self.points) >= y[None, :] - tol, axis=1)))

    def describe(self) -> dict:
        return {"type": "points", "points": self.points.tolist()}


@dataclass
class PredictedSets:
    """
    upper: alpha_1 K x ... x alpha_d K; lower: {x g : x in A, g in K};
    for d = 2 also {(x_1 g_1, x_2 g_2) : x in A, g_i in K}.
    """

    alphas: list[AlphaEstimate]
    lower: StarSet | Ellipsoid | PointCloud
    d2_upper: dict | None = None
    alpha0: AlphaEstimate | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def upper_box(self) -> np.ndarray:
        return np.array([a.value for a in self.alphas])

    def upper_distance(self, f: GridFn) -> float:
        """max_i d(f_i, alpha_i K), using the upper end of each alpha bracket."""
        if f.dim != len(self.alphas):
            raise DimensionError(f"function has dim {f.dim}, expected {len(self.alphas)}")
        return max(dist_to_scaled_strassen(fi, a.hi) for fi, a in zip(f.coords(), self.alphas))

    def lower_samples(self, n_grid: int = 64) -> list[GridFn]:
        """x g for x among the probe points of A and g in the fixed sample of K."""
        gs = list(strassen_sample(n_grid).values())
        return [g.outer(x) for x in self.lower.probe_points() for g in gs]

    def d2_upper_contains(self, f: GridFn, tol: float = 1e-6) -> bool:
        """
        f = (x_1 g_1, x_2 g_2) for some x in A and I(g_i) <= 1.

        Holds iff some x in A has |x_i| >= I(f_i)^(1/2) in both coordinates.
        """
        if self.d2_upper is None:
            raise DimensionError("the product upper set is defined for d = 2 only")
        y = np.array([dirichlet_energy(fi).sqrt for fi in f.coords()])
        return self.lower.dominates(y, tol)

    def consistent(self, tol: float = 1e-9) -> bool:
        """Every x g in the lower set has I(x_i g)^(1/2) <= alpha_i + bracket."""
        extent = self.lower.coordinate_extent()
        return bool(np.all(extent <= np.array([a.hi for a in self.alphas]) + tol))

    @classmethod
    def from_star(cls, star: StarSet) -> "PredictedSets":
        """Sets prescribed by a star-like A: alpha_i = max |x_i| over A and alpha0 = max |x| = 1."""
        extent = star.coordinate_extent()
        alphas = [
            AlphaEstimate(float(a), float(a), float(a), float(a), "construction", f"alpha_{i + 1}")
            for i, a in enumerate(extent)
        ]
        a0 = AlphaEstimate(1.0, 1.0, 1.0, 1.0, "construction")
        d2 = {"type": "product", "A": star.describe()} if star.dim == 2 else None
        return cls(alphas, star, d2, a0, ["upper box and A taken from the prescribed star set"])

    def to_json(self) -> dict:
        return {
            "upper_box": [a.to_json() for a in self.alphas],
            "alpha0": self.alpha0.to_json() if self.alpha0 else None,
            "lower": self.lower.describe(),
            "d2_upper": self.d2_upper,
            "consistent": self.consistent(),
            "notes": self.notes,
        }


def _lower_set(model, a0: AlphaEstimate, alphas: list[AlphaEstimate], notes: list[str]):
    if hasattr(model, "star"):
        return model.star
    if model.kind == "gaussian":
        evals, evecs = np.linalg.eigh(model.cov)
        top = float(max(evals[-1], 0.0))
        if top == 0.0:
            return Ellipsoid(np.zeros((model.dim, model.dim)))
        root = (evecs * np.sqrt(np.maximum(evals, 0.0))) @ evecs.T
        notes.append("A = alpha0 / sigma_max * cov^(1/2) B")
        return Ellipsoid(root * (a0.value / math.sqrt(top)))
    notes.append("A approximated by the ellipsoid with semi-axes alpha_i")
    return Ellipsoid(np.diag([a.value for a in alphas]))


def predicted_sets(
    model, seq: NormalizerSeq, config, a_points=None, plan: BlockPlan | None = None
) -> PredictedSets:
    """Upper box from the coordinate alphas and a lower-set descriptor for A (star, ellipsoid or member points)."""
    plan = plan or build_plan(model, seq, config)
    alphas = coordinate_alphas(model, seq, config, plan=plan)
    a0 = alpha0(model, seq, config, plan=plan)
    notes: list[str] = []
    if a_points is not None:
        pts = np.atleast_2d(np.asarray(a_points, dtype=float))
        members = [p for p in pts if point_membership(p, model, seq, config, plan=plan).member]
        lower = PointCloud(np.array(members).reshape(-1, model.dim))
        notes.append(f"A sampled: {len(members)} of {len(pts)} candidate points are members")
    else:
        lower = _lower_set(model, a0, alphas, notes)
    d2 = {"type": "product", "A": lower.describe()} if model.dim == 2 else None
    sets = PredictedSets(alphas, lower, d2, a0, notes)
    if not sets.consistent(tol=0.05):
        logger.warning("predicted lower set reaches beyond the upper box")
    return sets
