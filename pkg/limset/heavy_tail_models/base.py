import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from limset.errors import CapabilityError, DimensionError, ParameterError

LOG_FLOAT_MAX = math.log(np.finfo(float).max)


class MomentModel(ABC):
    """
    Distribution descriptor exposing tail probabilities and truncated second moments.

    Thresholds are accepted on the log scale (`*_log`) so that t = c_n may exceed
    double range; the plain variants are thin wrappers.
    """

    kind: str = ""
    dim: int = 1
    supports_sampling: bool = False

    @abstractmethod
    def tail(self, t: float) -> float:
        """P(|X| > t)."""

    @abstractmethod
    def trunc_cov_log(self, ln_t: float) -> np.ndarray:
        """E[X X^T 1{|X| <= exp(ln_t)}]."""

    @abstractmethod
    def coord_trunc_var_log(self, i: int, ln_t: float) -> float:
        """E[(X^(i))^2 1{|X^(i)| <= exp(ln_t)}]."""

    @abstractmethod
    def describe(self) -> dict:
        pass

    def trunc_cov(self, t: float) -> np.ndarray:
        if not t > 0:
            return np.zeros((self.dim, self.dim))
        return self.trunc_cov_log(math.log(t))

    def trunc_cov_loglog(self, w: float) -> np.ndarray:
        """Truncated covariance at t = exp(exp(w))."""
        return self.trunc_cov_log(math.exp(min(w, LOG_FLOAT_MAX)))

    def coord_trunc_var_loglog(self, i: int, w: float) -> float:
        """Coordinate truncated variance at t = exp(exp(w))."""
        self._check_coord(i)
        return self.coord_trunc_var_log(i, math.exp(min(w, LOG_FLOAT_MAX)))

    def coord_trunc_var(self, i: int, t: float) -> float:
        self._check_coord(i)
        if not t > 0:
            return 0.0
        return self.coord_trunc_var_log(i, math.log(t))

    def directional_sup_log(self, ln_t: float) -> float:
        """sup_{|u|=1} E[<u, X>^2 1{|X| <= t}]: the largest eigenvalue of trunc_cov."""
        return float(max(np.linalg.eigvalsh(self.trunc_cov_log(ln_t))[-1], 0.0))

    def H_X(self, t: float) -> float:
        if not t > 0:
            return 0.0
        return self.directional_sup_log(math.log(t))

    def H(self, t: float) -> float:
        """Truncated second-moment function; the directional sup unless a model defines its own."""
        return self.H_X(t)

    def sample(self, gen: np.random.Generator, count: int) -> np.ndarray:
        raise CapabilityError(f"{self.kind} model does not support sampling")

    def _check_coord(self, i: int):
        if not 0 <= i < self.dim:
            raise DimensionError(f"coordinate {i} out of range for dim={self.dim}")


def _open_uniforms(gen: np.random.Generator, shape) -> np.ndarray:
    """Uniforms in the open interval (0, 1); row-major so prefixes of a batch agree."""
    u = gen.random(shape)
    return np.where(u == 0.0, 2.0**-54, u)


@dataclass(frozen=True, eq=False)
class StarSet:
    """Symmetric star-like set: closure of the union of segments [-sigma_j z_j, sigma_j z_j]."""

    sigmas: np.ndarray
    directions: np.ndarray
    closure: bool = True
    padded: int = field(default=0)

    @classmethod
    def from_segments(cls, segments, closure: bool = True) -> "StarSet":
        """
        Normalize directions, sort by sigma (descending) and pad with copies of the
        first segment until sigma_j^2 >= 1/j.
        """
        parsed = []
        for sigma, z in segments:
            z = np.asarray(z, dtype=float).ravel()
            norm = float(np.linalg.norm(z))
            if norm == 0 or not np.all(np.isfinite(z)):
                raise ParameterError("segment directions must be finite and nonzero")
            if not 0 < sigma <= 1:
                raise ParameterError(f"segment sigma must lie in (0, 1], got {sigma}")
            parsed.append((float(sigma), z / norm))
        if not parsed:
            raise ParameterError("a star set needs at least one segment")
        dims = {z.shape[0] for _, z in parsed}
        if len(dims) != 1:
            raise DimensionError(f"segment directions have mixed dimensions {sorted(dims)}")
        parsed.sort(key=lambda s: -s[0])
        if abs(parsed[0][0] - 1.0) > 1e-12:
            raise ParameterError(
                "normalization rule violated: the largest segment must have sigma_1 = 1 "
                f"(max |x| over the star equals 1), got sigma_1 = {parsed[0][0]}"
            )
        out = []
        padded = 0
        for seg in parsed:
            while seg[0] ** 2 < 1.0 / (len(out) + 1):
                out.append(parsed[0])
                padded += 1
            out.append(seg)
        return cls(
            sigmas=np.array([s for s, _ in out]),
            directions=np.array([z for _, z in out]),
            closure=closure,
            padded=padded,
        )

    @classmethod
    def from_json(cls, data: dict) -> "StarSet":
        return cls.from_segments(
            [(seg["sigma"], seg["z"]) for seg in data["segments"]], closure=data.get("closure", True)
        )

    def to_json(self) -> dict:
        return {
            "segments": [{"sigma": float(s), "z": z.tolist()} for s, z in zip(self.sigmas, self.directions)],
            "closure": self.closure,
        }

    @property
    def dim(self) -> int:
        return int(self.directions.shape[1])

    def __len__(self) -> int:
        return len(self.sigmas)

    def segment(self, j: int) -> tuple[float, np.ndarray]:
        """1-based segment; indices beyond the list reuse the first segment."""
        if j < 1:
            raise ParameterError(f"segment index is 1-based, got {j}")
        if j > len(self):
            j = 1
        return float(self.sigmas[j - 1]), self.directions[j - 1]

    def distance(self, p) -> float:
        p = np.asarray(p, dtype=float)
        proj = np.clip(self.directions @ p, -self.sigmas, self.sigmas)
        return float(np.min(np.linalg.norm(p[None, :] - proj[:, None] * self.directions, axis=1)))

    def contains(self, p, tol: float = 1e-9) -> bool:
        return self.distance(p) <= tol

    def probe_points(self) -> np.ndarray:
        """Segment endpoints and midpoints on both sides."""
        pts = []
        for s, z in zip(self.sigmas, self.directions):
            for c in (1.0, 0.5, -0.5, -1.0):
                pts.append(c * s * z)
        return np.unique(np.round(np.array(pts), 15), axis=0)

    def coordinate_extent(self) -> np.ndarray:
        """max over the star of |x_i| per coordinate."""
        return np.max(self.sigmas[:, None] * np.abs(self.directions), axis=0)

    def dominates(self, y, tol: float = 1e-9) -> bool:
        """Some x in the star has |x_i| >= y_i for every i; the segment endpoints are the extreme points."""
        y = np.asarray(y, dtype=float)
        reach = self.sigmas[:, None] * np.abs(self.directions)
        return bool(np.any(np.all(reach >= y[None, :] - tol, axis=1)))

    def boundary_points(self) -> list[np.ndarray]:
        return [np.array([-s * z, s * z]) for s, z in zip(self.sigmas, self.directions)]

    def describe(self) -> dict:
        return {"type": "star", **self.to_json()}
