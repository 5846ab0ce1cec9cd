"""Finite surrogates for cluster sets: delta-nets of tail-window visits."""

import io
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist

from limset.errors import DimensionError, InputError, ParameterError
from limset.strassen_core import GridFn
from limset.sumsim.simulate import Visit


def delta_net(points, delta: float) -> np.ndarray:
    """
    Greedy delta-net over the points in lexicographic order: a point is kept when it lies
    farther than delta from every kept point. The result does not depend on input order.
    """
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise DimensionError(f"points must be a 2-d array, got shape {pts.shape}")
    if pts.shape[0] == 0:
        return pts
    kept: list[np.ndarray] = []
    for p in np.unique(pts, axis=0):
        if not kept or np.min(cdist(p[None, :], np.array(kept))) > delta:
            kept.append(p)
    return np.array(kept)


def merge_nets(nets: Iterable[np.ndarray], delta: float) -> np.ndarray:
    nets = [np.asarray(n, dtype=float) for n in nets]
    if not nets:
        raise ParameterError("nothing to merge")
    return delta_net(np.vstack(nets), delta)


def function_net(snapshots: list[GridFn], delta: float) -> list[GridFn]:
    """delta-net of grid functions under the sup norm, in lexicographic order of their values."""
    if not snapshots:
        return []
    shape = snapshots[0].values.shape
    if any(s.values.shape != shape for s in snapshots):
        raise DimensionError("snapshots must share dimension and grid")
    flat = np.unique(np.array([s.values.ravel() for s in snapshots]), axis=0)
    kept: list[np.ndarray] = []
    for row in flat:
        f = row.reshape(shape)
        if not kept or min(np.max(np.linalg.norm(f - k, axis=1)) for k in kept) > delta:
            kept.append(f)
    return [GridFn.from_values(k) for k in kept]


@dataclass
class ClusterReport:
    delta: float
    burn_in: int
    checkpoints: list[int]
    point_ns: np.ndarray
    points: np.ndarray
    net: np.ndarray
    snapshots: list[tuple[int, GridFn]] = field(default_factory=list)
    snapshot_net: list[GridFn] = field(default_factory=list)
    replicas: int = 1
    # per tail-window visit: distance to each predicted set, filled by the containment check
    distances: dict[str, list[float]] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def max_ratio(self) -> float:
        """max |S_n| / c_n over the tail window."""
        return float(np.max(np.linalg.norm(self.points, axis=1)))

    def inside_ball(self, radius: float) -> bool:
        return bool(np.all(np.linalg.norm(self.net, axis=1) <= radius))

    def sector_coverage(self, sectors: int = 16, radius: float = 0.5) -> int:
        """Number of equal angular sectors holding a retained point of norm at least `radius`."""
        if self.dim != 2:
            raise DimensionError("sector coverage is defined for d = 2")
        far = self.net[np.linalg.norm(self.net, axis=1) >= radius]
        if far.size == 0:
            return 0
        angles = np.mod(np.arctan2(far[:, 1], far[:, 0]), 2.0 * math.pi)
        idx = np.minimum((angles / (2.0 * math.pi) * sectors).astype(int), sectors - 1)
        return int(np.unique(idx).size)

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "burn_in": self.burn_in,
            "replicas": self.replicas,
            "checkpoints": self.checkpoints,
            "tail_points": int(self.points.shape[0]),
            "max_ratio": self.max_ratio,
            "net": self.net.tolist(),
            "snapshots": len(self.snapshots),
            "snapshot_net": len(self.snapshot_net),
            "distances": self.distances,
            "summary": self.summary,
        }

    def to_csv(self) -> str:
        """kind,index,n,t,x_1..x_d; one row per retained point and per snapshot node."""
        header = ["kind", "index", "n", "t"] + [f"x_{i + 1}" for i in range(self.dim)]
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for i, p in enumerate(self.net):
            buf.write(",".join(["point", str(i), "", ""] + [repr(float(v)) for v in p]) + "\n")
        for i, (n, f) in enumerate(self.snapshots):
            for t, row in zip(f.nodes, f.values):
                buf.write(",".join(["snapshot", str(i), str(n), repr(float(t))] + [repr(float(v)) for v in row]) + "\n")
        return buf.getvalue()


def cluster_from_csv(text: str) -> tuple[np.ndarray, list[tuple[int, GridFn]]]:
    """Inverse of `ClusterReport.to_csv`: (net points, snapshots)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InputError("empty CSV")
    header = lines[0].split(",")
    if header[:4] != ["kind", "index", "n", "t"] or len(header) < 5:
        raise InputError(f"CSV header must start with 'kind,index,n,t,x_1', got {lines[0]!r}")
    dim = len(header) - 4
    points, rows = [], {}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} cells, got {len(cells)}")
        if cells[0] not in ("point", "snapshot"):
            raise InputError(f"line {lineno}: unknown row kind {cells[0]!r}")
        try:
            values = [float(c) for c in cells[4:]]
            if cells[0] == "point":
                points.append(values)
            else:
                rows.setdefault(int(cells[1]), (int(cells[2]), []))[1].append(values)
        except ValueError as e:
            raise InputError(f"line {lineno}: {e}") from e
    snaps = [(n, GridFn.from_values(np.array(vals))) for _, (n, vals) in sorted(rows.items())]
    return np.array(points).reshape(-1, dim), snaps


def empirical_cluster(
    visits: Iterable[Visit], delta: float, burn_in: int = 0, replicas: int = 1
) -> ClusterReport:
    """delta-net of the visits with n >= burn_in, plus the delta-net of their snapshots."""
    visits = list(visits)
    tail = [v for v in visits if v.n >= burn_in]
    if not tail:
        raise ParameterError(f"empty tail window: no visit with n >= {burn_in}")
    points = np.array([np.atleast_1d(v.point) for v in tail], dtype=float)
    snapshots = [(v.n, v.snapshot) for v in tail if v.snapshot is not None]
    report = ClusterReport(
        delta=delta,
        burn_in=burn_in,
        checkpoints=sorted({v.n for v in visits}),
        point_ns=np.array([v.n for v in tail]),
        points=points,
        net=delta_net(points, delta),
        snapshots=snapshots,
        snapshot_net=function_net([f for _, f in snapshots], delta),
        replicas=replicas,
    )
    logger.debug(
        f"empirical cluster: {len(tail)} tail visits -> {report.net.shape[0]} net points, "
        f"{len(report.snapshot_net)} net functions (delta={delta})"
    )
    return report


def burn_in_for(n_max: int, power: float) -> int:
    """Visits with n < n_max^power are discarded."""
    return int(math.ceil(n_max**power))


def cluster_replicas(results, config) -> ClusterReport:
    """One report over all replicas; visits are taken in stream order."""
    visits = [v for r in results for v in r.visits]
    burn_in = burn_in_for(config.n_max, config.burn_in_power)
    return empirical_cluster(visits, config.delta, burn_in, replicas=len(results))
