"""
Dirichlet energy on uniform grids, its minimizer over sup-norm tubes (taut string)
and the geometry of the Strassen ball {g : I(g) <= alpha^2}.

Functions are piecewise linear on t_i = i / N with g(0) = 0; every quantity here is
exact for the interpolant, so nothing depends on a quadrature rule.
"""

import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from loguru import logger

from limset.errors import DimensionError, InputError, ParameterError

UNIT_TOL = 1e-12
ORTHONORMAL_TOL = 1e-10
DIST_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class GridFn:
    """Piecewise-linear R^d-valued function on a uniform grid of [0, 1], vanishing at 0."""

    dim: int
    n_grid: int
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if self.dim < 1 or self.n_grid < 1:
            raise ParameterError(f"dim and n_grid must be positive, got {self.dim}, {self.n_grid}")
        if values.shape != (self.n_grid + 1, self.dim):
            raise DimensionError(
                f"values must have shape {(self.n_grid + 1, self.dim)}, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InputError("grid values must be finite")
        if np.any(values[0] != 0.0):
            raise InputError("grid functions must vanish at t=0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values) -> "GridFn":
        arr = np.asarray(values, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        return cls(dim=arr.shape[1], n_grid=arr.shape[0] - 1, values=arr)

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], n_grid: int) -> "GridFn":
        t = np.linspace(0.0, 1.0, n_grid + 1)
        arr = np.array(fn(t), dtype=float)
        arr[0] = 0.0
        return cls.from_values(arr)

    @classmethod
    def zeros(cls, n_grid: int, dim: int = 1) -> "GridFn":
        return cls(dim=dim, n_grid=n_grid, values=np.zeros((n_grid + 1, dim)))

    @classmethod
    def stack(cls, coords: Iterable["GridFn"]) -> "GridFn":
        coords = list(coords)
        if not coords:
            raise DimensionError("cannot stack an empty list of grid functions")
        n_grid = coords[0].n_grid
        if any(c.n_grid != n_grid or c.dim != 1 for c in coords):
            raise DimensionError("stack expects scalar grid functions on a common grid")
        return cls.from_values(np.hstack([c.values for c in coords]))

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_grid + 1)

    @property
    def scalar(self) -> np.ndarray:
        if self.dim != 1:
            raise DimensionError(f"expected a scalar grid function, got dim={self.dim}")
        return self.values[:, 0]

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.stack([np.interp(t, self.nodes, self.values[:, i]) for i in range(self.dim)], axis=-1)
        return out[..., 0] if self.dim == 1 else out

    def coord(self, i: int) -> "GridFn":
        return GridFn(dim=1, n_grid=self.n_grid, values=self.values[:, i : i + 1])

    def coords(self) -> list["GridFn"]:
        return [self.coord(i) for i in range(self.dim)]

    def _check_same_grid(self, other: "GridFn"):
        if other.dim != self.dim or other.n_grid != self.n_grid:
            raise DimensionError(
                f"grid mismatch: ({self.dim}, {self.n_grid}) vs ({other.dim}, {other.n_grid})"
            )

    def __add__(self, other: "GridFn") -> "GridFn":
        self._check_same_grid(other)
        return GridFn(self.dim, self.n_grid, self.values + other.values)

    def __sub__(self, other: "GridFn") -> "GridFn":
        self._check_same_grid(other)
        return GridFn(self.dim, self.n_grid, self.values - other.values)

    def __neg__(self) -> "GridFn":
        return GridFn(self.dim, self.n_grid, -self.values)

    def __mul__(self, scale: float) -> "GridFn":
        return GridFn(self.dim, self.n_grid, float(scale) * self.values)

    __rmul__ = __mul__

    def outer(self, x) -> "GridFn":
        """x * g for a scalar g and a vector x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return GridFn.from_values(self.scalar[:, None] * x[None, :])

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def distance(self, other: "GridFn") -> float:
        return (self - other).sup_norm()

    def to_json(self) -> dict:
        return {"dim": self.dim, "n_grid": self.n_grid, "values": self.values.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "GridFn":
        try:
            dim, n_grid = int(data["dim"]), int(data["n_grid"])
            values = np.asarray(data["values"], dtype=float)
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"malformed grid function document: {e}") from e
        return cls(dim=dim, n_grid=n_grid, values=values)

    def to_csv(self) -> str:
        header = ",".join(["t"] + [f"f_{i + 1}" for i in range(self.dim)])
        data = np.column_stack([self.nodes, self.values])
        buf = io.StringIO()
        np.savetxt(buf, data, delimiter=",", header=header, comments="", fmt="%.17g")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridFn":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise InputError("empty CSV")
        header = [h.strip() for h in lines[0].split(",")]
        if len(header) < 2 or header[0] != "t" or header[1:] != [f"f_{i + 1}" for i in range(len(header) - 1)]:
            raise InputError(f"CSV header must be 't,f_1,...,f_d', got {lines[0]!r}")
        try:
            data = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
        except ValueError as e:
            raise InputError(f"malformed CSV row: {e}") from e
        if data.shape[1] != len(header) or data.shape[0] < 2:
            raise InputError(f"CSV needs at least 2 rows of {len(header)} columns")
        n_grid = data.shape[0] - 1
        if not np.allclose(data[:, 0], np.linspace(0.0, 1.0, n_grid + 1), atol=1e-9):
            raise InputError("CSV t column must be the uniform grid i/N")
        return cls(dim=len(header) - 1, n_grid=n_grid, values=data[:, 1:])


@dataclass(frozen=True)
class EnergyValue:
    value: float
    finite: bool = True

    def __post_init__(self):
        if self.finite and not self.value >= 0:
            raise ParameterError(f"energy must be nonnegative, got {self.value}")

    @property
    def sqrt(self) -> float:
        return math.sqrt(self.value) if self.finite else math.inf


@dataclass(frozen=True)
class TubeSolution:
    minimizer: GridFn
    energy: EnergyValue
    epsilon: float


def _energy(values: np.ndarray, n_grid: int) -> float:
    return float(n_grid * np.sum(np.diff(values, axis=0) ** 2))


def dirichlet_energy(g: GridFn) -> EnergyValue:
    if g.dim != 1:
        raise DimensionError(f"dirichlet_energy expects a scalar function, got dim={g.dim}")
    return EnergyValue(_energy(g.scalar, g.n_grid))


def vector_energy(f: GridFn) -> float:
    """Basis-free energy: integral of |f'|^2."""
    return _energy(f.values, f.n_grid)


def _taut_path(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """
    Shortest path through the node tube [lower, upper] with both ends pinned
    (lower[0] == upper[0], lower[-1] == upper[-1]).

    Funnel walk: from the current contact point, extend the visibility cone node by
    node; when it closes, the path bends at the wall vertex that bounded the cone.
    """
    m = len(lower) - 1
    bend_idx = [0]
    bend_val = [float(lower[0])]
    p, y = 0, float(lower[0])
    while p < m:
        js = np.arange(p + 1, m + 1)
        dj = js - p
        lo_s = (lower[js] - y) / dj
        hi_s = (upper[js] - y) / dj
        run_lo = np.maximum.accumulate(lo_s)
        run_hi = np.minimum.accumulate(hi_s)
        slack = 1e-14 * (1.0 + np.abs(run_hi))
        closed = np.flatnonzero(run_lo > run_hi + slack)
        if closed.size == 0:
            p, y = m, float(lower[m])
        else:
            b = int(closed[0])
            if lo_s[b] > run_hi[b - 1] + slack[b - 1]:
                q = int(np.flatnonzero(hi_s[:b] == run_hi[b - 1])[-1])
                p, y = p + 1 + q, float(upper[p + 1 + q])
            else:
                q = int(np.flatnonzero(lo_s[:b] == run_lo[b - 1])[-1])
                p, y = p + 1 + q, float(lower[p + 1 + q])
        bend_idx.append(p)
        bend_val.append(y)
    return np.interp(np.arange(m + 1), bend_idx, bend_val)


def taut_string(g: GridFn, epsilon: float) -> TubeSolution:
    """Unique minimizer g_eps of the energy over {h : h(0)=0, max_i |h_i - g_i| <= eps}."""
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    vals = g.scalar
    n = g.n_grid
    if np.max(np.abs(vals)) <= epsilon:
        zero = GridFn.zeros(n)
        return TubeSolution(zero, EnergyValue(0.0), float(epsilon))

    # Free right end: mirror the tube about t=1; the symmetric minimizer of the
    # doubled problem restricts to the free-end minimizer.
    lower = np.concatenate([vals, vals[-2::-1]]) - epsilon
    upper = lower + 2.0 * epsilon
    lower[0] = upper[0] = 0.0
    lower[-1] = upper[-1] = 0.0
    path = _taut_path(lower, upper)[: n + 1]
    path[0] = 0.0
    path = np.clip(path, vals - epsilon, vals + epsilon)
    path[0] = 0.0
    minimizer = GridFn(dim=1, n_grid=n, values=path)
    return TubeSolution(minimizer, dirichlet_energy(minimizer), float(epsilon))


def min_energy_in_ball(g: GridFn, epsilon: float) -> EnergyValue:
    return taut_string(g, epsilon).energy


def _check_unit(u: np.ndarray, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=float).ravel()
    if u.shape != (dim,):
        raise DimensionError(f"direction has dimension {u.shape[0]}, expected {dim}")
    if abs(float(np.linalg.norm(u)) - 1.0) > UNIT_TOL:
        raise ParameterError(f"direction must be a unit vector, |u| = {np.linalg.norm(u)!r}")
    return u


def project_direction(f: GridFn, u) -> GridFn:
    u = _check_unit(u, f.dim)
    return GridFn(dim=1, n_grid=f.n_grid, values=f.values @ u)


def dist_to_scaled_strassen(g: GridFn, alpha: float, tol: float = DIST_TOL) -> float:
    """Sup-norm distance from g to alpha * K on the grid, by bisection on the tube radius."""
    if alpha < 0:
        raise ParameterError(f"alpha must be nonnegative, got {alpha}")
    target = alpha * alpha
    if dirichlet_energy(g).value <= target:
        return 0.0
    hi = float(np.max(np.abs(g.scalar)))
    if alpha == 0:
        return hi
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if min_energy_in_ball(g, mid).value <= target:
            hi = mid
        else:
            lo = mid
    logger.debug(f"dist_to_scaled_strassen alpha={alpha} -> [{lo:.3g}, {hi:.3g}]")
    return hi


def representation_decompose(f: GridFn) -> tuple[np.ndarray, list[GridFn]]:
    """f = (x_1 g_1, ..., x_d g_d) with x_i = I(f_i)^(1/2) and I(g_i) <= 1."""
    xs = np.zeros(f.dim)
    gs = []
    for i, fi in enumerate(f.coords()):
        x = dirichlet_energy(fi).sqrt
        xs[i] = x
        if x > 0:
            gs.append(GridFn(dim=1, n_grid=f.n_grid, values=fi.values / x))
        else:
            gs.append(GridFn.zeros(f.n_grid))
    return xs, gs


def check_orthonormal(basis, dim: int, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    """Rows of `basis` must form an orthonormal basis of R^dim."""
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    if basis.shape != (dim, dim):
        raise DimensionError(f"basis must be {dim}x{dim}, got {basis.shape}")
    if np.max(np.abs(basis @ basis.T - np.eye(dim))) > tol:
        raise ParameterError("basis is not orthonormal")
    return basis


def direction_energies(f: GridFn, basis) -> np.ndarray:
    """I(<u_i, f>) for the rows u_i of an orthonormal basis."""
    basis = check_orthonormal(basis, f.dim)
    proj = f.values @ basis.T
    return f.n_grid * np.sum(np.diff(proj, axis=0) ** 2, axis=0)


def parseval_energy(f: GridFn, basis) -> float:
    return float(np.sum(direction_energies(f, basis)))


# A fixed sample of unit-energy elements of K: lines and one-bend
# piecewise-linear functions (bend, slope before, slope after).
STRASSEN_BENDS = {
    "line": (1.0, 1.0, 0.0),
    "neg_line": (1.0, -1.0, 0.0),
    "rise_flat": (0.5, math.sqrt(2.0), 0.0),
    "flat_rise": (0.5, 0.0, math.sqrt(2.0)),
    "up_down": (0.5, 1.0, -1.0),
    "down_up": (0.5, -1.0, 1.0),
    "steep_flat": (0.25, 2.0, 0.0),
    "flat_steep": (0.75, 0.0, 2.0),
}


def strassen_element(name: str, n_grid: int = 64) -> GridFn:
    try:
        bend, s1, s2 = STRASSEN_BENDS[name]
    except KeyError:
        raise ParameterError(f"unknown Strassen element {name!r}; choose from {sorted(STRASSEN_BENDS)}")
    t = np.linspace(0.0, 1.0, n_grid + 1)
    vals = np.where(t <= bend, s1 * t, s1 * bend + s2 * (t - bend))
    return GridFn.from_values(vals)


def strassen_sample(n_grid: int = 64) -> dict[str, GridFn]:
    return {name: strassen_element(name, n_grid) for name in STRASSEN_BENDS}


def line(slope: float, n_grid: int = 64) -> GridFn:
    return GridFn.from_values(slope * np.linspace(0.0, 1.0, n_grid + 1))
