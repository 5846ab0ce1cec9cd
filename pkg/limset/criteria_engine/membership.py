"""
Membership criteria for the cluster sets A (points) and the functional cluster set (grid
functions), and the alpha constants, all through one block plan per (model, c_n, config).
"""

import math
from concurrent import futures
from dataclasses import dataclass
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from functools import cached_property

import numpy as np
from loguru import logger
from scipy.special import logsumexp

from limset.criteria_engine.eigen import MAX_JACOBI_DIM, EigenSystem, eigensystem_from_cov
from limset.criteria_engine.normalizers import NormalizerSeq
from limset.criteria_engine.series import (
    Classification,
    SeriesVerdict,
    classify_block_masses,
    log_grid,
    window_log_mass,
)
from limset.errors import ClassifierError, DimensionError, InputError, ParameterError
from limset.strassen_core import GridFn, direction_energies


@dataclass(frozen=True, eq=False)
class Block:
    group: int
    eigen: EigenSystem
    # log scale: ln n, ln c_n and ln(c_n^2 / 2n); loglog scale: the v-window and ln ln c_n at its start
    ln_n: float = math.nan
    ln_c: float = math.nan
    ratio: float = math.nan
    v0: float = math.nan
    v1: float = math.nan
    w: float = math.nan


def resolve_scale(model, seq: NormalizerSeq, config) -> str:
    if config.scale != "auto":
        scale = config.scale
    elif getattr(model, "kind", "") == "example8_exact" and seq.supports_loglog:
        scale = "loglog"
    else:
        scale = "log"
    if scale == "loglog" and (not hasattr(model, "schedule") or not seq.supports_loglog):
        raise ParameterError("the loglog scale needs the heavy-tailed ladder model and a p-family normalizer")
    return scale


class BlockPlan:
    """Blocks of the series with their eigen-systems, computed once and shared across queries."""

    def __init__(self, model, seq: NormalizerSeq, config):
        if model.dim > MAX_JACOBI_DIM:
            raise ParameterError(f"criteria are supported for d <= {MAX_JACOBI_DIM}, got d={model.dim}")
        self.model = model
        self.seq = seq
        self.config = config
        self.scale = resolve_scale(model, seq, config)
        self.independent = getattr(model, "kind", "") == "independent_components"
        self.blocks = self._loglog_blocks() if self.scale == "loglog" else self._log_blocks()
        self.n_groups = max(b.group for b in self.blocks)
        logger.debug(f"block plan: {len(self.blocks)} blocks on the {self.scale} scale for {model.kind}")

    def _log_blocks(self) -> list[Block]:
        blocks = []
        for k, ln_n in enumerate(log_grid(self.config), start=1):
            ln_c = float(self.seq.log_c(ln_n))
            eigen = eigensystem_from_cov(self.model.trunc_cov_log(ln_c), ln_n)
            blocks.append(Block(k, eigen, ln_n=float(ln_n), ln_c=ln_c, ratio=float(self.seq.ratio_log(ln_n))))
        return blocks

    def _loglog_blocks(self) -> list[Block]:
        anchors = self.model.schedule.anchors
        k_max = self.config.loglog_k_max
        if k_max > self.model.schedule.generations:
            raise ParameterError(
                f"loglog_k_max={k_max} exceeds the {self.model.schedule.generations} generations of the ladder"
            )
        blocks = []
        for a in range(len(anchors) - 1):
            if anchors[a].k > k_max:
                break
            w0, w1 = anchors[a].ln_m, anchors[a + 1].ln_m
            eigen = eigensystem_from_cov(self.model.trunc_cov_loglog(w0))
            blocks.append(
                Block(
                    anchors[a].k,
                    eigen,
                    v0=self.seq.inverse_loglog_c(w0),
                    v1=self.seq.inverse_loglog_c(w1),
                    w=w0,
                )
            )
        return blocks

    @cached_property
    def coord_vars(self) -> np.ndarray:
        """sigma_{n,i}^2 per block."""
        d = self.model.dim
        if self.scale == "loglog":
            rows = [[self.model.coord_trunc_var_loglog(i, b.w) for i in range(d)] for b in self.blocks]
        else:
            rows = [[self.model.coord_trunc_var_log(i, b.ln_c) for i in range(d)] for b in self.blocks]
        return np.array(rows)

    def log_masses(self, ln_coef: np.ndarray, included: np.ndarray | None = None) -> np.ndarray:
        """
        Log block masses of sum_n n^-1 exp(-coef_n c_n^2 / (2n)); `ln_coef` per block
        (-inf: zero exponent, +inf: vanishing term); excluded blocks are empty.
        """
        ln_coef = np.asarray(ln_coef, dtype=float)
        keep = np.ones(len(self.blocks), dtype=bool) if included is None else np.asarray(included, dtype=bool)
        if self.scale == "log":
            ratio = np.array([b.ratio for b in self.blocks])
            with np.errstate(over="ignore"):
                e = np.where(ln_coef == -np.inf, 0.0, np.exp(np.where(ln_coef == -np.inf, 0.0, ln_coef) + ratio))
            out = math.log(math.log(self.config.rho)) - e
            return np.where(keep, out, -np.inf)
        per_block = np.array(
            [
                window_log_mass(b.v0, b.v1, c, self.seq) if ok else -math.inf
                for b, c, ok in zip(self.blocks, ln_coef, keep)
            ]
        )
        groups = np.array([b.group for b in self.blocks])
        out = np.full(self.n_groups, -np.inf)
        for k in range(1, self.n_groups + 1):
            vals = per_block[groups == k]
            if np.any(vals > -np.inf):
                out[k - 1] = float(logsumexp(vals[vals > -np.inf]))
        return out

    def classify(self, ln_coef: np.ndarray, included: np.ndarray | None = None) -> SeriesVerdict:
        return classify_block_masses(self.log_masses(ln_coef, included), self.config.margin, self.scale)


def build_plan(model, seq: NormalizerSeq, config) -> BlockPlan:
    return BlockPlan(model, seq, config)


def _ln_weighted(num: np.ndarray, var: np.ndarray) -> float:
    """ln sum_i num_i^2 / var_i; +inf when a live term has zero variance."""
    live = num > 0
    if not np.any(live):
        return -math.inf
    if np.any(var[live] <= 0):
        return math.inf
    return float(logsumexp(2.0 * np.log(num[live]) - np.log(var[live])))


@dataclass(frozen=True)
class AlphaEstimate:
    value: float
    lo: float
    hi: float
    alpha_hi: float
    scale: str
    label: str = "alpha0"
    probes: tuple[tuple[float, str], ...] = ()

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "value": self.value,
            "bracket": [self.lo, self.hi],
            "width": self.width,
            "alpha_hi": self.alpha_hi,
            "scale": self.scale,
            "probes": [{"alpha": a, "class": c} for a, c in self.probes],
        }


def _alpha_search(plan: BlockPlan, ln_var: np.ndarray, label: str) -> AlphaEstimate:
    """
    Bisections for the last Divergent and the first Convergent alpha of
    sum n^-1 exp(-alpha^2 c_n^2 / (2n H(c_n))), with ln H per block in `ln_var`.
    """
    config = plan.config
    if np.all(ln_var == -np.inf):
        logger.debug(f"{label}: zero truncated variance everywhere")
        return AlphaEstimate(0.0, 0.0, 0.0, config.alpha_hi, plan.scale, label)
    seen: dict[float, Classification] = {}

    def verdict(alpha: float) -> Classification:
        if alpha not in seen:
            ln_coef = np.full(ln_var.shape, -np.inf) if alpha == 0 else 2.0 * math.log(alpha) - ln_var
            seen[alpha] = plan.classify(ln_coef).classification
            logger.debug(f"{label}: alpha={alpha:.5g} -> {seen[alpha]}")
        return seen[alpha]

    alpha_hi = config.alpha_hi
    doublings = 0
    while verdict(alpha_hi) != Classification.CONVERGENT:
        if doublings >= config.alpha_doublings:
            raise ClassifierError(
                f"{label}: series not Convergent at alpha={alpha_hi:g} after {doublings} doublings",
                {"probes": {str(a): str(c) for a, c in sorted(seen.items())}, "scale": plan.scale},
            )
        alpha_hi *= 2.0
        doublings += 1

    tol = config.alpha_tol
    lo, hi = 0.0, alpha_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if verdict(mid) == Classification.DIVERGENT:
            lo = mid
        else:
            hi = mid
    last_div = lo
    lo, hi = 0.0, alpha_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if verdict(mid) == Classification.CONVERGENT:
            hi = mid
        else:
            lo = mid
    first_conv = hi

    probes = tuple((a, str(c)) for a, c in sorted(seen.items()))
    interior = [c for a, c in seen.items() if 0.0 < a < alpha_hi]
    if interior and all(c == Classification.UNDECIDED for c in interior):
        raise ClassifierError(
            f"{label}: classifier Undecided across the whole bracket [0, {alpha_hi:g}]",
            {"probes": {str(a): c for a, c in probes}, "scale": plan.scale},
        )
    if last_div > first_conv:
        logger.warning(f"{label}: non-monotone verdicts, bracket [{first_conv:.4g}, {last_div:.4g}] reordered")
        last_div, first_conv = first_conv, last_div
    est = AlphaEstimate(0.5 * (last_div + first_conv), last_div, first_conv, alpha_hi, plan.scale, label, probes)
    logger.debug(f"{label} = {est.value:.4g} in [{est.lo:.4g}, {est.hi:.4g}]")
    return est


def alpha0(model, seq: NormalizerSeq, config, plan: BlockPlan | None = None) -> AlphaEstimate:
    """sup{alpha >= 0: sum n^-1 exp(-alpha^2 c_n^2 / (2n H(c_n))) = inf} with H the directional sup."""
    plan = plan or build_plan(model, seq, config)
    ln_var = np.array([b.eigen.ln_top_variance for b in plan.blocks])
    return _alpha_search(plan, ln_var, "alpha0")


def coordinate_alphas(model, seq: NormalizerSeq, config, plan: BlockPlan | None = None) -> list[AlphaEstimate]:
    """alpha0 per coordinate with H replaced by the coordinate truncated variance."""
    plan = plan or build_plan(model, seq, config)
    with np.errstate(divide="ignore"):
        ln_vars = np.log(np.maximum(plan.coord_vars, 0.0))
    return [_alpha_search(plan, ln_vars[:, i], f"alpha_{i + 1}") for i in range(model.dim)]


class MemberStatus(StrEnum):
    MEMBER = "member"
    NON_MEMBER = "non_member"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class MembershipVerdict:
    query: str
    verdicts: tuple[tuple[float, SeriesVerdict], ...]
    scale: str = "log"
    fast_path: bool = False

    @property
    def status(self) -> MemberStatus:
        classes = [v.classification for _, v in self.verdicts]
        if all(c == Classification.DIVERGENT for c in classes):
            return MemberStatus.MEMBER
        if any(c == Classification.CONVERGENT for c in classes):
            return MemberStatus.NON_MEMBER
        return MemberStatus.UNDECIDED

    @property
    def member(self) -> bool:
        return self.status == MemberStatus.MEMBER

    @property
    def epsilon_star(self) -> float | None:
        """Largest tested epsilon at which the series stops being Divergent."""
        for eps, v in self.verdicts:
            if not v.divergent:
                return eps
        return None

    @property
    def monotone(self) -> bool:
        """Divergent at some epsilon implies Divergent at every larger tested epsilon."""
        flags = [v.divergent for _, v in self.verdicts]
        return all(a or not b for a, b in zip(flags[:-1], flags[1:]))

    def to_json(self) -> dict:
        return {
            "query": self.query,
            "status": str(self.status),
            "epsilon_star": self.epsilon_star,
            "monotone": self.monotone,
            "scale": self.scale,
            "fast_path": self.fast_path,
            "verdicts": [{"epsilon": eps, **v.to_json()} for eps, v in self.verdicts],
        }


def _over_epsilons(plan: BlockPlan, query: str, per_epsilon, workers: int, fast_path: bool) -> MembershipVerdict:
    eps_grid = list(plan.config.epsilons)
    if workers > 1:
        with futures.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(per_epsilon, eps_grid))
    else:
        results = [per_epsilon(eps) for eps in eps_grid]
    verdict = MembershipVerdict(query, tuple(zip(eps_grid, results)), plan.scale, fast_path)
    if not verdict.monotone:
        logger.warning(f"{query} membership verdicts are not monotone in epsilon")
    logger.debug(f"{query} membership: {verdict.status} (epsilon*={verdict.epsilon_star})")
    return verdict


def point_membership(
    x, model, seq: NormalizerSeq, config, plan: BlockPlan | None = None, workers: int = 1
) -> MembershipVerdict:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.dim,):
        raise DimensionError(f"point has shape {x.shape}, model dimension is {model.dim}")
    if not np.all(np.isfinite(x)):
        raise InputError("point coordinates must be finite")
    plan = plan or build_plan(model, seq, config)

    if plan.independent:
        coord_vars = plan.coord_vars

        def per_epsilon(eps: float) -> SeriesVerdict:
            num = np.maximum(np.abs(x) - eps, 0.0)
            return plan.classify([_ln_weighted(num, row) for row in coord_vars])

        return _over_epsilons(plan, "point", per_epsilon, workers, True)

    projections = [b.eigen.vectors @ x for b in plan.blocks]

    def per_epsilon(eps: float) -> SeriesVerdict:
        ln_coef, included = [], []
        for b, proj in zip(plan.blocks, projections):
            r = b.eigen.rank
            included.append(bool(np.all(np.abs(proj[r:]) < eps)))
            ln_coef.append(_ln_weighted(np.maximum(np.abs(proj[:r]) - eps, 0.0), b.eigen.variances[:r]))
        return plan.classify(ln_coef, included)

    return _over_epsilons(plan, "point", per_epsilon, workers, False)


def function_membership(
    f: GridFn, model, seq: NormalizerSeq, config, plan: BlockPlan | None = None, workers: int = 1
) -> MembershipVerdict:
    if f.dim != model.dim:
        raise DimensionError(f"function has dim {f.dim}, model dimension is {model.dim}")
    if not np.all(np.isfinite(f.values)):
        raise InputError("function values must be finite")
    plan = plan or build_plan(model, seq, config)

    if plan.independent:
        roots = np.sqrt(direction_energies(f, np.eye(f.dim)))
        coord_vars = plan.coord_vars

        def per_epsilon(eps: float) -> SeriesVerdict:
            num = np.maximum(roots - eps, 0.0)
            return plan.classify([_ln_weighted(num, row) for row in coord_vars])

        return _over_epsilons(plan, "function", per_epsilon, workers, True)

    # energies and sup norms per distinct eigenbasis
    cache: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}
    per_block = []
    for b in plan.blocks:
        key = b.eigen.key()
        if key not in cache:
            basis = b.eigen.vectors
            cache[key] = (np.sqrt(direction_energies(f, basis)), np.max(np.abs(f.values @ basis.T), axis=0))
        per_block.append(cache[key])
    logger.debug(f"function membership: {len(cache)} distinct eigenbases over {len(plan.blocks)} blocks")

    def per_epsilon(eps: float) -> SeriesVerdict:
        ln_coef, included = [], []
        for b, (roots, sups) in zip(plan.blocks, per_block):
            r = b.eigen.rank
            included.append(bool(np.all(sups[r:] < eps)))
            ln_coef.append(_ln_weighted(np.maximum(roots[:r] - eps, 0.0), b.eigen.variances[:r]))
        return plan.classify(ln_coef, included)

    return _over_epsilons(plan, "function", per_epsilon, workers, False)
