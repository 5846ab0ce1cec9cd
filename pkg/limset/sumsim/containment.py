import math
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from limset.criteria_engine.predicted import PredictedSets
from limset.sumsim.cluster import ClusterReport

SQRT_T_MIN = 0.1


@dataclass
class ContainmentSummary:
    tol: float
    upper_distances: list[float] = field(default_factory=list)
    upper_violations: int = 0
    probes: int = 0
    covered: int = 0
    sqrt_t_checked: int = 0
    sqrt_t_violations: int = 0
    point_distances: list[float] = field(default_factory=list)
    points_outside: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def coverage(self) -> float:
        return 1.0 if self.probes == 0 else self.covered / self.probes

    @property
    def vacuous(self) -> bool:
        return self.probes == 0

    @property
    def max_upper_excess(self) -> float:
        return max(self.upper_distances, default=0.0)

    def to_json(self) -> dict:
        return {
            "tol": self.tol,
            "upper_violations": self.upper_violations,
            "max_upper_excess": self.max_upper_excess,
            "coverage": self.coverage,
            "covered": self.covered,
            "probes": self.probes,
            "vacuous_coverage": self.vacuous,
            "sqrt_t_checked": self.sqrt_t_checked,
            "sqrt_t_violations": self.sqrt_t_violations,
            "points_outside": self.points_outside,
            "max_point_distance": max(self.point_distances, default=0.0),
            "notes": self.notes,
        }


def containment_check(report: ClusterReport, predicted: PredictedSets, tol: float) -> ContainmentSummary:
    """
    Snapshots against the upper box, lower-set probes against the snapshots, and the
    sqrt(t) property f(t) / sqrt(t) in A on nodes t >= 0.1; tail points against A.
    """
    summary = ContainmentSummary(tol=tol)
    snapshots = [f for _, f in report.snapshots]

    for f in snapshots:
        d = predicted.upper_distance(f)
        summary.upper_distances.append(d)
        summary.upper_violations += d > tol

    if snapshots:
        probes = predicted.lower_samples(snapshots[0].n_grid)
        summary.probes = len(probes)
        values = np.array([f.values for f in snapshots])
        for g in probes:
            gaps = np.max(np.linalg.norm(values - g.values[None, :, :], axis=2), axis=1)
            summary.covered += bool(np.min(gaps) <= tol)
        for f in snapshots:
            keep = f.nodes >= SQRT_T_MIN
            for t, x in zip(f.nodes[keep], f.values[keep]):
                summary.sqrt_t_checked += 1
                summary.sqrt_t_violations += predicted.lower.distance(x / math.sqrt(t)) > tol
    else:
        summary.notes.append("no snapshots: functional checks skipped, coverage vacuous")
    if summary.vacuous:
        logger.warning("lower-set coverage is vacuous (no probes)")

    for p in report.points:
        d = predicted.lower.distance(p)
        summary.point_distances.append(d)
        summary.points_outside += d > tol

    report.distances = {"A": summary.point_distances, "upper": summary.upper_distances}
    logger.info(
        f"containment: {summary.upper_violations} upper violations, coverage {summary.coverage:.2f}, "
        f"{summary.points_outside} points beyond A + {tol}"
    )
    return summary
