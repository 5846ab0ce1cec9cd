"""
Normalizing sequences c_n, evaluated on the log scale so that n may exceed double range.

Families (LL n = max(ln ln n, 1)):
    sqrt_2n_loglog        c_n = sqrt(2 n LL n)
    sqrt_2n_loglog_pow    c_n = sqrt(2 n) LL n^((1 + p) / 2)
    power                 c_n = scale * n^gamma
    tabulated             c_1, c_2, ... given explicitly
"""

import math
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from scipy.optimize import brentq

from config.run_config import ClassifierConfig
from limset.criteria_engine.series import log_grid, series_classify
from limset.errors import ParameterError

LN2 = math.log(2.0)
CN2_EPSILONS = (0.5, 0.1, 0.01)
VALIDATION_POINTS = 4096
# past this, v and ln ln c_n agree to double precision for the p-family
LOGLOG_EXACT_LIMIT = 1e15


def _ln_ll(ln_n):
    """ln LL n from ln n."""
    ln_n = np.asarray(ln_n, dtype=float)
    safe = np.where(ln_n > 1.0, ln_n, math.e)
    return np.where(ln_n > math.e, np.log(np.log(safe)), 0.0)


@dataclass(frozen=True)
class NormalizerSeq:
    family: str
    p: float = 0.0
    gamma: float = 0.5
    scale: float = 1.0
    values: tuple[float, ...] | None = None
    n_min: int = 10
    n_max: int = 1_000_000
    _table: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def sqrt_2n_loglog(cls, **kw) -> "NormalizerSeq":
        return cls("sqrt_2n_loglog", **kw)

    @classmethod
    def sqrt_2n_loglog_pow(cls, p: float = 1.0, **kw) -> "NormalizerSeq":
        if p < 0:
            raise ParameterError(f"p must be nonnegative, got {p}")
        return cls("sqrt_2n_loglog_pow", p=float(p), **kw)

    @classmethod
    def power(cls, gamma: float, scale: float = 1.0, **kw) -> "NormalizerSeq":
        if not gamma > 0 or not scale > 0:
            raise ParameterError(f"power normalizer needs gamma > 0 and scale > 0, got {gamma}, {scale}")
        return cls("power", gamma=float(gamma), scale=float(scale), **kw)

    @classmethod
    def tabulated(cls, values, **kw) -> "NormalizerSeq":
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 1 or vals.size < 4 or np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise ParameterError("tabulated normalizer needs at least 4 positive finite values c_1, c_2, ...")
        kw.setdefault("n_min", min(10, vals.size - 1))
        kw.setdefault("n_max", vals.size)
        table = np.column_stack([np.log(np.arange(1, vals.size + 1)), np.log(vals)])
        return cls("tabulated", values=tuple(vals.tolist()), _table=table, **kw)

    @classmethod
    def from_config(cls, cfg) -> "NormalizerSeq":
        spec = cfg if isinstance(cfg, dict) else cfg.model_dump()
        family = spec.get("family", "sqrt_2n_loglog")
        rng = {"n_min": int(spec.get("n_min", 10)), "n_max": int(spec.get("n_max", 1_000_000))}
        if family == "sqrt_2n_loglog":
            return cls.sqrt_2n_loglog(**rng)
        if family == "sqrt_2n_loglog_pow":
            return cls.sqrt_2n_loglog_pow(spec.get("p", 1.0), **rng)
        if family == "power":
            return cls.power(spec.get("gamma", 0.5), spec.get("scale", 1.0), **rng)
        if family == "tabulated":
            vals = spec.get("values") or []
            rng["n_max"] = min(rng["n_max"], len(vals))
            rng["n_min"] = min(rng["n_min"], max(len(vals) - 1, 1))
            return cls.tabulated(vals, **rng)
        raise ParameterError(f"unknown normalizer family {family!r}")

    @property
    def loglog_power(self) -> float | None:
        """q with c_n^2 / (2n) = LL n^q for the p-family; None otherwise."""
        if self.family == "sqrt_2n_loglog":
            return 1.0
        if self.family == "sqrt_2n_loglog_pow":
            return 1.0 + self.p
        return None

    @property
    def supports_loglog(self) -> bool:
        return self.loglog_power is not None

    def log_c(self, ln_n):
        ln_n = np.asarray(ln_n, dtype=float)
        q = self.loglog_power
        if q is not None:
            out = 0.5 * (LN2 + ln_n) + 0.5 * q * _ln_ll(ln_n)
        elif self.family == "power":
            out = math.log(self.scale) + self.gamma * ln_n
        else:
            lo, hi = self._table[0, 0], self._table[-1, 0]
            if np.any(ln_n < lo - 1e-12) or np.any(ln_n > hi + 1e-12):
                raise ParameterError(f"tabulated normalizer covers n in [1, {len(self.values)}]")
            out = np.interp(ln_n, self._table[:, 0], self._table[:, 1])
        return float(out) if out.ndim == 0 else out

    def c(self, n):
        return np.exp(self.log_c(np.log(np.asarray(n, dtype=float))))

    def ratio_log(self, ln_n):
        """ln(c_n^2 / (2n))."""
        return 2.0 * np.asarray(self.log_c(ln_n)) - LN2 - np.asarray(ln_n, dtype=float)

    def loglog_c(self, v: float) -> float:
        """ln ln c_n at v = ln ln n, without forming n."""
        q = self.loglog_power
        if q is not None:
            ln_ll = math.log(v) if v > 1.0 else 0.0
            return v - LN2 + math.log1p((LN2 + q * ln_ll) * math.exp(-v))
        if self.family == "power":
            return v + math.log(self.gamma) + math.log1p(math.log(self.scale) / self.gamma * math.exp(-v))
        ln_c = self.log_c(math.exp(v))
        if ln_c <= 0:
            raise ParameterError(f"c_n <= 1 at ln ln n = {v}")
        return math.log(ln_c)

    def ratio_log_loglog(self, v):
        """ln(c_n^2 / (2n)) at v = ln ln n."""
        v = np.asarray(v, dtype=float)
        q = self.loglog_power
        if q is not None:
            return q * np.log(np.maximum(v, 1.0))
        with np.errstate(over="ignore"):
            return self.ratio_log(np.exp(v))

    def inverse_loglog_c(self, w: float) -> float:
        """v = ln ln n with ln ln c_n = w."""
        if self.supports_loglog and w > LOGLOG_EXACT_LIMIT:
            return w + LN2
        fn = lambda v: self.loglog_c(v) - w
        lo, hi = max(0.0, w - 8.0), w + 8.0
        while fn(lo) > 0:
            if lo == 0.0:
                raise ParameterError(f"ln ln c_n = {w} lies below the start of the sequence")
            lo = max(0.0, lo - 2.0 * (hi - lo))
        while fn(hi) < 0:
            hi += 2.0 * (hi - lo)
        return float(brentq(fn, lo, hi, xtol=1e-12 * max(1.0, abs(w)), rtol=4 * np.finfo(float).eps))

    def describe(self) -> dict:
        out = {"family": self.family, "n_min": self.n_min, "n_max": self.n_max}
        if self.family == "sqrt_2n_loglog_pow":
            out["p"] = self.p
        elif self.family == "power":
            out.update(gamma=self.gamma, scale=self.scale)
        elif self.family == "tabulated":
            out["values"] = list(self.values)
        return out


@dataclass(frozen=True)
class RegularityCheck:
    name: str
    passed: bool
    detail: str
    m_epsilon: int | None = None
    offending: tuple[int, int] | None = None

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "m_epsilon": self.m_epsilon,
            "offending": list(self.offending) if self.offending else None,
        }


@dataclass
class NormalizerReport:
    normalizer: dict
    n_min: int
    n_max: int
    checks: list[RegularityCheck]
    tail_summability: object = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def tail_summable(self) -> bool | None:
        if self.tail_summability is None:
            return None
        return self.tail_summability.classification == "Convergent"

    def violations(self) -> list[RegularityCheck]:
        return [c for c in self.checks if not c.passed]

    def to_json(self) -> dict:
        out = {
            "normalizer": self.normalizer,
            "n_min": self.n_min,
            "n_max": self.n_max,
            "passed": self.passed,
            "checks": [c.to_json() for c in self.checks],
        }
        if self.tail_summability is not None:
            out["tail_summability"] = {
                "summable": self.tail_summable,
                "verdict": self.tail_summability.to_json(),
            }
        return out


def _validation_grid(n_min: int, n_max: int) -> np.ndarray:
    grid = np.unique(np.round(np.geomspace(n_min, n_max, VALIDATION_POINTS)))
    return grid[(grid >= n_min) & (grid <= n_max)]


def _check_cn1(ns: np.ndarray, ln_c: np.ndarray) -> RegularityCheck:
    r = ln_c - 0.5 * np.log(ns)
    drops = np.nonzero(np.diff(r) < -1e-12 * np.maximum(1.0, np.abs(r[1:])))[0]
    if drops.size:
        i = int(drops[0])
        pair = (int(ns[i]), int(ns[i + 1]))
        return RegularityCheck("cn1", False, f"c_n/sqrt(n) decreases between m={pair[0]} and n={pair[1]}", offending=pair)
    if r[-1] - r[0] <= 1e-9:
        pair = (int(ns[0]), int(ns[-1]))
        return RegularityCheck(
            "cn1", False, f"c_n/sqrt(n) does not increase over [{pair[0]}, {pair[1]}]", offending=pair
        )
    return RegularityCheck(
        "cn1", True, f"c_n/sqrt(n) nondecreasing, grows by a factor {math.exp(r[-1] - r[0]):.4g}"
    )


def _check_cn2(ns: np.ndarray, ln_c: np.ndarray, eps: float) -> RegularityCheck:
    """c_n/c_m <= (1+eps) n/m for m_eps <= m < n; passes when m_eps is at most the geometric midpoint."""
    phi = ln_c - np.log(ns)
    suffix = np.maximum.accumulate(phi[::-1])[::-1]
    ahead = np.append(suffix[1:], -np.inf)
    bad = np.nonzero(ahead - phi > math.log1p(eps) + 1e-12)[0]
    name = f"cn2(eps={eps:g})"
    if bad.size == 0:
        return RegularityCheck(name, True, f"holds from m={int(ns[0])}", m_epsilon=int(ns[0]))
    i = int(bad[-1])
    j = i + 1 + int(np.argmax(phi[i + 1:]))
    pair = (int(ns[i]), int(ns[j]))
    m_eps = int(ns[i + 1]) if i + 1 < ns.size else None
    midpoint = math.sqrt(ns[0] * ns[-1])
    ok = m_eps is not None and m_eps <= midpoint
    detail = f"last violation c_n/c_m > (1+eps) n/m at (m, n) = {pair}"
    if ok:
        detail = f"holds from m={m_eps}; " + detail
    return RegularityCheck(name, ok, detail, m_epsilon=m_eps, offending=pair)


def tail_summability(model, seq: NormalizerSeq, config):
    """Sum_n P(|X| > c_n) through the series classifier with e_n = -ln(n P(|X| > c_n))."""
    ln_n = log_grid(config)
    ln_c = np.asarray(seq.log_c(ln_n))
    exps = np.empty_like(ln_n)
    for k, (a, b) in enumerate(zip(ln_n, ln_c)):
        tail = model.tail(math.exp(b)) if b < 709.0 else 0.0
        exps[k] = math.inf if tail <= 0.0 else -a - math.log(tail)
    return series_classify(exps, config)


def validate_normalizer(
    seq: NormalizerSeq, n_min: int | None = None, n_max: int | None = None, model=None, config=None
) -> NormalizerReport:
    """Numerical (cn1)/(cn2) checks on [n_min, n_max]; tail summability when a model is supplied."""
    n_min = seq.n_min if n_min is None else int(n_min)
    n_max = seq.n_max if n_max is None else int(n_max)
    if n_min < 3 or n_max <= n_min:
        raise ParameterError(f"validation range must satisfy 3 <= n_min < n_max, got [{n_min}, {n_max}]")
    ns = _validation_grid(n_min, n_max)
    ln_c = np.asarray(seq.log_c(np.log(ns)))
    checks = [_check_cn1(ns, ln_c)] + [_check_cn2(ns, ln_c, eps) for eps in CN2_EPSILONS]
    report = NormalizerReport(seq.describe(), n_min, n_max, checks)
    if model is not None:
        report.tail_summability = tail_summability(model, seq, config or ClassifierConfig())
    for check in report.violations():
        logger.warning(f"normalizer {seq.family}: {check.name} violated ({check.detail})")
    return report
