"""
Discrete symmetric Z with a slowly varying truncated second moment H, and the vector
X = sigma_l z_l Z routed through a star-like set by the block of |Z|.

The level sequence d_n (H(t) = d_n for e^n <= t < e^(n+1)) is flat at the anchors
m = 3^(2^e) and climbs geometrically on a ramp of length k^3 just below each next
anchor. Exact magnitudes are carried as exponents and (sign, log-magnitude) pairs; the
scaled surrogate shrinks the exponents so that atoms fit in double precision and can be
sampled.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np
from loguru import logger
from scipy.special import logsumexp

from limset.errors import CapabilityError, ParameterError
from limset.heavy_tail_models.base import MomentModel, StarSet
from limset.heavy_tail_models.sampling import AliasTable
from limset.logspace import LogValue

LN2 = math.log(2.0)
LN3 = math.log(3.0)
LNLN3 = math.log(LN3)
LOG2_3 = math.log2(3.0)

# the last exact anchor (10, 0) has ln m = ln 3 * 2^1000, still a finite double
EXACT_GENERATIONS = 9
SCALED_LN_LIMIT = 709
# atoms e^n with n beyond this have q_n below the smallest subnormal
ATOM_LN_CAP = 400
EXACT_INT_LIMIT = 2**53
MATERIALIZE_BITS = 1 << 24


def _as_float(n: int) -> float:
    try:
        return float(n)
    except OverflowError:
        return math.inf


def ladder_exponent(k: int, ell: int) -> int:
    """e(k, ell) with log_3 m_{k,ell} = 2^e; ell = k + 1 is the seam m_{k,k+1} = m_{k+1}."""
    if k < 1 or not 0 <= ell <= k + 1:
        raise ParameterError(f"block coordinate ({k}, {ell}) outside k >= 1, 0 <= ell <= k + 1")
    if ell == k + 1:
        return (k + 1) ** 3
    return k**3 + ell * k


def anchor_index(k: int, ell: int) -> int:
    """Position of m_{k,ell} in the flattened ladder (generation k has k + 1 anchors)."""
    if ell == k + 1:
        return anchor_index(k + 1, 0)
    ladder_exponent(k, ell)
    return (k - 1) * (k + 2) // 2 + ell


def _ladder(generations: int) -> Iterator[tuple[int, int]]:
    for k in range(1, generations + 1):
        for ell in range(k + 1):
            yield k, ell
    yield generations + 1, 0


@dataclass(frozen=True)
class Anchor:
    index: int
    k: int
    ell: int
    exponent: int
    ln_m: float
    ln_ln_m: float
    m: int | None = None

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "ell": self.ell,
            "exponent": self.exponent,
            "ln_m": self.ln_m,
            "ln_ln_m": self.ln_ln_m,
            **({"m": self.m} if self.m is not None else {}),
        }


@dataclass(frozen=True)
class BlockPosition:
    """n = m_anchor + offset; offsets in [-k^3, 0) sit on the ramp into the anchor."""

    anchor: int
    offset: int = 0


@dataclass(frozen=True, eq=False)
class BlockSchedule:
    anchors: tuple[Anchor, ...]
    scaled: bool = False
    kappa: int = 1
    base: int = 2

    @classmethod
    def exact(cls, generations: int = EXACT_GENERATIONS) -> "BlockSchedule":
        if not 1 <= generations <= EXACT_GENERATIONS:
            raise ParameterError(f"exact ladder supports 1..{EXACT_GENERATIONS} generations, got {generations}")
        anchors = []
        for k, ell in _ladder(generations):
            e = ladder_exponent(k, ell)
            anchors.append(Anchor(len(anchors), k, ell, e, math.ldexp(LN3, e), LNLN3 + e * LN2))
        return cls(tuple(anchors))

    @classmethod
    def scaled_surrogate(cls, kappa: int = 8, k_max: int = 2, base: int = 2) -> "BlockSchedule":
        """
        Exponents e -> max(ceil(e / kappa), previous + 1) and anchors m = base * 2^(e - 1).
        Raises CapabilityError naming the first block that leaves double range or whose
        ramp does not fit above the previous anchor.
        """
        if int(kappa) != kappa or kappa < 1:
            raise ParameterError(f"kappa must be an integer >= 1, got {kappa}")
        if k_max < 1:
            raise ParameterError(f"k_max must be >= 1, got {k_max}")
        if base < 2:
            raise ParameterError(f"base must be >= 2, got {base}")
        kappa = int(kappa)
        anchors: list[Anchor] = []
        prev_e = 0
        for k, ell in _ladder(k_max):
            e_hat = max(-(-ladder_exponent(k, ell) // kappa), prev_e + 1)
            # huge exponents are rejected before the power is formed
            if e_hat > SCALED_LN_LIMIT or base * 2 ** (e_hat - 1) > SCALED_LN_LIMIT:
                raise CapabilityError(
                    f"scaled anchor m_({k},{ell}) = {base}*2^{e_hat - 1} exceeds the double-precision "
                    f"exponent range ({SCALED_LN_LIMIT}); increase kappa or lower k_max"
                )
            m = base * 2 ** (e_hat - 1)
            if anchors:
                last = anchors[-1]
                ramp = last.k**3
                if m - ramp < last.m:
                    raise CapabilityError(
                        f"ramp of length {ramp} into block ({k},{ell}) does not fit: "
                        f"m_({k},{ell}) - {ramp} = {m - ramp} < previous anchor {last.m}"
                    )
            ln_m = math.log(m)
            anchors.append(Anchor(len(anchors), k, ell, e_hat, ln_m, math.log(ln_m), m))
            prev_e = e_hat
        return cls(tuple(anchors), scaled=True, kappa=kappa, base=base)

    def __len__(self) -> int:
        return len(self.anchors)

    @property
    def generations(self) -> int:
        return self.anchors[-1].k - 1

    def ramp_length(self, a: int) -> int:
        """Length of the ramp from anchor a up to anchor a + 1."""
        return self.anchors[a].k ** 3

    def block_segment(self, b: int) -> int:
        """Star segment of block b (atoms in (m_{b-1}, m_b]); the base atom joins block 1."""
        anchor = self.anchors[max(b, 1)]
        return anchor.ell if anchor.ell >= 1 else anchor.k

    def m_int(self, a: int) -> int:
        anchor = self.anchors[a]
        if anchor.m is not None:
            return anchor.m
        if anchor.exponent > 60 or math.ldexp(LOG2_3, anchor.exponent) > MATERIALIZE_BITS:
            raise CapabilityError(
                f"m_({anchor.k},{anchor.ell}) = 3^(2^{anchor.exponent}) is too large to materialize"
            )
        return 3 ** (2**anchor.exponent)

    def compare_m(self, n: int, a: int) -> int:
        """sign(n - m_a) without forming m_a unless n is of comparable size."""
        anchor = self.anchors[a]
        if anchor.m is not None:
            return (n > anchor.m) - (n < anchor.m)
        if n <= 0:
            return -1
        approx_bits = math.ldexp(LOG2_3, anchor.exponent) if anchor.exponent < 1000 else math.inf
        bits = n.bit_length()
        if bits < approx_bits - 2:
            return -1
        if bits > approx_bits + 2:
            return 1
        m = 3 ** (2**anchor.exponent)
        return (n > m) - (n < m)

    def locate(self, n: int) -> BlockPosition | None:
        """Canonical position of the integer n; None below the base atom m_0."""
        if self.compare_m(n, 0) < 0:
            return None
        a = 0
        while a + 1 < len(self) and self.compare_m(n, a + 1) >= 0:
            a += 1
        if a + 1 < len(self) and self.compare_m(n + self.ramp_length(a), a + 1) > 0:
            return BlockPosition(a + 1, n - self.m_int(a + 1))
        return BlockPosition(a, n - self.m_int(a))

    def ramp(self, pos: BlockPosition) -> tuple[int, Fraction]:
        """(lower anchor, fraction j / k^3 of the ramp travelled); flat stretches give 0."""
        if pos.offset >= 0:
            return pos.anchor, Fraction(0)
        if pos.anchor == 0:
            raise ParameterError("position lies below the base atom")
        r = self.ramp_length(pos.anchor - 1)
        j = r + pos.offset
        if j < 0:
            raise ParameterError(f"offset {pos.offset} lies before the ramp into anchor {pos.anchor}")
        return pos.anchor - 1, Fraction(j, r)

    def position_value(self, pos: BlockPosition) -> int:
        return self.m_int(pos.anchor) + pos.offset

    def position_float(self, pos: BlockPosition) -> float:
        """n as a double; inf once m leaves double range."""
        if self.anchors[pos.anchor].ln_m >= 709.0:
            return math.inf
        return _as_float(self.position_value(pos))

    def to_json(self) -> dict:
        return {
            "scaled": self.scaled,
            "kappa": self.kappa,
            "base": self.base,
            "anchors": [a.to_json() for a in self.anchors],
        }


@dataclass(frozen=True)
class AtomTable:
    n: np.ndarray
    ln_q: np.ndarray
    block: np.ndarray
    positions: tuple[BlockPosition, ...]


class Example8Model(MomentModel):
    """
    Analytic queries in exact_log mode; sampling in the scaled mode only.

    Truncation is on |Z| (E[X X^T 1{|Z| <= t}]), which coincides with truncation on |X|
    for a single unit segment.
    """

    def __init__(self, star: StarSet, schedule: BlockSchedule):
        self.star = star
        self.schedule = schedule
        self.dim = star.dim
        self.mode = "scaled" if schedule.scaled else "exact_log"
        self.kind = "example8_scaled" if schedule.scaled else "example8_exact"
        self.supports_sampling = schedule.scaled

        self._ln_m = np.array([a.ln_m for a in schedule.anchors])
        self._ln_ln_m = np.array([a.ln_ln_m for a in schedule.anchors])
        outer = []
        for b in range(len(schedule)):
            sigma, z = star.segment(schedule.block_segment(b))
            outer.append(sigma**2 * np.outer(z, z))
        self._block_outer = np.array(outer)
        masses = np.diff(self._ln_m, prepend=0.0)
        self._cum_cov = np.cumsum(masses[:, None, None] * self._block_outer, axis=0)

        n_cap = None if schedule.scaled else ATOM_LN_CAP
        self.atoms = self._atom_table(n_cap)
        if schedule.scaled:
            self._build_sampler()
        logger.debug(
            f"built {self.kind} model: {len(schedule)} anchors, {self.atoms.n.size} atoms, "
            f"{len(star)} segments"
        )

    # level sequence

    def ln_level_at(self, pos: BlockPosition) -> float:
        """ln d_n at a block position."""
        lower, frac = self.schedule.ramp(pos)
        if frac == 0:
            return float(self._ln_ln_m[lower])
        ln_d = float(self._ln_ln_m[lower] + float(frac) * (self._ln_ln_m[lower + 1] - self._ln_ln_m[lower]))
        if self.schedule.scaled:
            # the surrogate ramp is clamped under the envelope d_n <= ln n
            ln_d = min(ln_d, math.log(math.log(self.schedule.position_value(pos))))
        return ln_d

    def level_exponent_at(self, pos: BlockPosition) -> Fraction:
        """E with d_n = ln 3 * 2^E at the position (exact ladder only)."""
        if self.schedule.scaled:
            raise CapabilityError("level exponents are defined for the exact ladder only")
        lower, frac = self.schedule.ramp(pos)
        anchors = self.schedule.anchors
        if frac == 0:
            return Fraction(anchors[lower].exponent)
        return anchors[lower].exponent + frac * (anchors[lower + 1].exponent - anchors[lower].exponent)

    def ln_level(self, n: int) -> float:
        """ln d_n; -inf below the support."""
        pos = self.schedule.locate(n)
        return -math.inf if pos is None else self.ln_level_at(pos)

    def level(self, n: int) -> float:
        ln_d = self.ln_level(n)
        return 0.0 if ln_d == -math.inf else math.exp(ln_d)

    # q_n

    def _ln_q(self, ln_d: float, ln_d_prev: float, n: float) -> float:
        if ln_d <= ln_d_prev:
            return -math.inf
        if ln_d_prev == -math.inf:
            ln_diff = ln_d
        else:
            ln_diff = ln_d + math.log(-math.expm1(ln_d_prev - ln_d))
        return ln_diff - 2.0 * n - LN2

    def q(self, n: int) -> LogValue:
        """q_n = (d_n - d_{n-1}) e^(-2n) / 2 in log-domain; zero below the support."""
        if n < 1 or self.schedule.compare_m(n, 0) < 0:
            return LogValue.zero()
        return LogValue.from_log(self._ln_q(self.ln_level(n), self.ln_level(n - 1), _as_float(n)))

    def q_at(self, pos: BlockPosition) -> LogValue:
        """q_n at a block position, for n too large to handle as an integer."""
        ln_d = self.ln_level_at(pos)
        if pos.anchor == 0 and pos.offset == 0:
            ln_prev = -math.inf
        elif pos.offset > 0:
            return LogValue.zero()
        else:
            ln_prev = self.ln_level_at(BlockPosition(pos.anchor, pos.offset - 1))
        return LogValue.from_log(self._ln_q(ln_d, ln_prev, self.schedule.position_float(pos)))

    def change_points(self, n_max: int | None = None) -> Iterator[tuple[BlockPosition, int]]:
        """Atoms of Z (n with q_n > 0) in increasing order, up to n_max."""
        sched = self.schedule
        if n_max is None and not sched.scaled:
            raise ParameterError("the exact ladder needs an enumeration cap n_max")
        if n_max is not None and sched.compare_m(n_max, 0) < 0:
            return
        yield BlockPosition(0, 0), sched.m_int(0)
        for a in range(len(sched) - 1):
            r = sched.ramp_length(a)
            for j in range(1, r + 1):
                off = j - r
                if n_max is not None and sched.compare_m(n_max - off, a + 1) < 0:
                    return
                yield BlockPosition(a + 1, off), sched.m_int(a + 1) + off

    def _atom_table(self, n_cap: int | None) -> AtomTable:
        ns, ln_qs, blocks, positions = [], [], [], []
        for pos, n in self.change_points(n_cap):
            ns.append(float(n))
            ln_qs.append(self.q_at(pos).ln_mag)
            blocks.append(pos.anchor)
            positions.append(pos)
        return AtomTable(
            n=np.array(ns), ln_q=np.array(ln_qs), block=np.array(blocks, dtype=int), positions=tuple(positions)
        )

    @property
    def ln_q_total(self) -> float:
        """ln sum_n q_n over the enumerated atoms."""
        if self.atoms.n.size == 0:
            return -math.inf
        return float(logsumexp(self.atoms.ln_q))

    @property
    def p_zero(self) -> float:
        """P(Z = 0) = 1 - 2 sum_n q_n."""
        return float(-math.expm1(self.ln_q_total + LN2))

    # moments

    def _level_from_log(self, x: float) -> tuple[int, float]:
        """(last anchor a with m_a <= floor(x), ln d_floor(x)); (-1, -inf) below the support."""
        if x < EXACT_INT_LIMIT:
            # thresholds within rounding of e^n count as reaching n
            pos = self.schedule.locate(math.floor(x * (1.0 + 1e-12)))
            if pos is None:
                return -1, -math.inf
            lower, _ = self.schedule.ramp(pos)
            return lower, self.ln_level_at(pos)
        # m_a <= x iff ln m_a <= ln x; ramps are below float resolution here
        a = int(np.searchsorted(self._ln_m, math.log(x), side="right")) - 1
        return a, float(self._ln_ln_m[a])

    def _level_from_loglog(self, w: float) -> tuple[int, float]:
        if w < math.log(EXACT_INT_LIMIT):
            return self._level_from_log(math.exp(w))
        a = int(np.searchsorted(self._ln_m, w, side="right")) - 1
        return a, float(self._ln_ln_m[a])

    def _cov(self, a: int, ln_d: float) -> np.ndarray:
        if a < 0:
            return np.zeros((self.dim, self.dim))
        cov = np.array(self._cum_cov[a])
        if a + 1 < len(self._ln_m):
            partial = math.exp(ln_d) - float(self._ln_m[a])
            if partial > 0:
                cov += partial * self._block_outer[a + 1]
        return cov

    def trunc_cov_log(self, ln_t: float) -> np.ndarray:
        if ln_t == -math.inf or ln_t < 0:
            return np.zeros((self.dim, self.dim))
        return self._cov(*self._level_from_log(ln_t))

    def trunc_cov_loglog(self, w: float) -> np.ndarray:
        return self._cov(*self._level_from_loglog(w))

    def coord_trunc_var_log(self, i: int, ln_t: float) -> float:
        self._check_coord(i)
        return float(self.trunc_cov_log(ln_t)[i, i])

    def coord_trunc_var_loglog(self, i: int, w: float) -> float:
        self._check_coord(i)
        return float(self.trunc_cov_loglog(w)[i, i])

    def ln_H_log(self, ln_t: float) -> float:
        """ln H(t) for t = exp(ln_t); -inf below the support."""
        if ln_t < 0:
            return -math.inf
        return self._level_from_log(ln_t)[1]

    def ln_H_loglog(self, w: float) -> float:
        """ln H(t) for t = exp(exp(w))."""
        return self._level_from_loglog(w)[1]

    def anchor_ln_levels(self) -> np.ndarray:
        """ln d at the anchors, which equals ln ln m."""
        return np.array(self._ln_ln_m)

    def block_cov(self, a: int) -> np.ndarray:
        """Truncated covariance on the flat stretch starting at anchor a."""
        return np.array(self._cum_cov[a])

    def H(self, t: float) -> float:
        if not t > 0:
            return 0.0
        ln_h = self.ln_H_log(math.log(t))
        return 0.0 if ln_h == -math.inf else math.exp(ln_h)

    def tail_Z(self, t: float) -> float:
        """P(|Z| > t) from the enumerated atoms."""
        ln_t = math.log(t) if t > 0 else -math.inf
        return self._tail_sum(self.atoms.n > ln_t)

    def tail(self, t: float) -> float:
        """P(|X| > t) with |X| = sigma |Z| on each block."""
        ln_t = math.log(t) if t > 0 else -math.inf
        ln_sigma = np.array([math.log(self.star.segment(self.schedule.block_segment(b))[0]) for b in self.atoms.block])
        return self._tail_sum(ln_sigma + self.atoms.n > ln_t)

    def _tail_sum(self, mask: np.ndarray) -> float:
        if not np.any(mask):
            return 0.0
        return float(min(1.0, math.exp(LN2 + logsumexp(self.atoms.ln_q[mask]))))

    # sampling

    def _build_sampler(self):
        q = np.exp(self.atoms.ln_q)
        weights = np.concatenate([[self.p_zero], np.repeat(q, 2)])
        self._alias = AliasTable.from_weights(weights)
        signs = np.tile([1.0, -1.0], q.size)
        self._outcome_z = np.concatenate([[0.0], signs * np.exp(np.repeat(self.atoms.n, 2))])
        dirs = [np.zeros(self.dim)]
        for b in self.atoms.block:
            sigma, z = self.star.segment(self.schedule.block_segment(int(b)))
            dirs.extend([sigma * z, sigma * z])
        self._outcome_dir = np.array(dirs)

    def sample_pairs(self, gen: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Draws of (Z, X)."""
        if not self.supports_sampling:
            raise CapabilityError(
                "exact_log example8 model supports analytic queries only; build it with mode=scaled to sample"
            )
        idx = self._alias.draw(gen, count)
        z = self._outcome_z[idx]
        return z, z[:, None] * self._outcome_dir[idx]

    def sample(self, gen: np.random.Generator, count: int) -> np.ndarray:
        return self.sample_pairs(gen, count)[1]

    def describe(self) -> dict:
        out = {"kind": self.kind, "mode": self.mode, "star_set": self.star.to_json()}
        if self.schedule.scaled:
            out.update(
                kappa=self.schedule.kappa,
                k_max=self.schedule.generations,
                base=self.schedule.base,
                anchors=[a.to_json() for a in self.schedule.anchors],
            )
        return out


def build_example8(
    star: StarSet, mode: str = "exact_log", kappa: int = 8, k_max: int = 2, base: int = 2
) -> Example8Model:
    if mode == "exact_log":
        return Example8Model(star, BlockSchedule.exact())
    if mode == "scaled":
        return Example8Model(star, BlockSchedule.scaled_surrogate(kappa=kappa, k_max=k_max, base=base))
    raise ParameterError(f"unknown example8 mode {mode!r}; choose exact_log or scaled")


def q_of(model: Example8Model, n) -> LogValue:
    """q_n for an integer n or a BlockPosition."""
    if isinstance(n, BlockPosition):
        return model.q_at(n)
    return model.q(int(n))


@dataclass(frozen=True)
class QMassReport:
    n_enum: int
    partial: LogValue
    tail_bound: float
    total: float
    n_terms: int

    @property
    def below_half(self) -> bool:
        return self.total < 0.5

    def to_json(self) -> dict:
        return {
            "n_enum": self.n_enum,
            "partial": self.partial.to_json(),
            "partial_value": self.partial.to_float(),
            "tail_bound": self.tail_bound,
            "total": self.total,
            "n_terms": self.n_terms,
            "below_half": self.below_half,
        }


def q_mass_bound(model: Example8Model, n_enum: int) -> QMassReport:
    """
    sum_{n <= n_enum} q_n plus a closed-form bound on the rest: q_n <= ln(n+1) e^(-2n) / 2
    <= n r^n / 2 with r = e^-2, and sum_{n >= M} n r^n = r^M (M - (M-1) r) / (1-r)^2.
    """
    if n_enum < 0:
        raise ParameterError(f"n_enum must be nonnegative, got {n_enum}")
    ln_qs = [model.q_at(pos).ln_mag for pos, _ in model.change_points(n_enum)]
    partial = LogValue.from_log(float(logsumexp(ln_qs))) if ln_qs else LogValue.zero()
    M = max(n_enum + 1, model.schedule.m_int(0))
    r = math.exp(-2.0)
    if M > 10**6:
        tail = 0.0
    else:
        tail = 0.5 * math.exp(-2.0 * M) * (M - (M - 1) * r) / (1.0 - r) ** 2
    report = QMassReport(
        n_enum=n_enum, partial=partial, tail_bound=tail, total=partial.to_float() + tail, n_terms=len(ln_qs)
    )
    if not report.below_half:
        logger.error(f"q-mass bound {report.total} is not below 1/2")
    return report


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    k: int
    ell: int
    passed: bool
    detail: str

    def to_json(self) -> dict:
        return {"name": self.name, "k": self.k, "ell": self.ell, "passed": self.passed, "detail": self.detail}


@dataclass
class BlockIdentityReport:
    checks: list[IdentityCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[IdentityCheck]:
        return [c for c in self.checks if not c.passed]

    def to_json(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_json() for c in self.checks]}


def _check_anchor(model: Example8Model, k: int, ell: int) -> IdentityCheck:
    sched = model.schedule
    a = anchor_index(k, ell)
    anchor = sched.anchors[a]
    name = "seam" if ell == k + 1 else "anchor"
    if sched.scaled:
        got = model.ln_level_at(BlockPosition(a, 0))
        expected = math.log(math.log(anchor.m))
        ok = abs(got - expected) <= 1e-12 and (ell != k + 1 or (anchor.k, anchor.ell) == (k + 1, 0))
        return IdentityCheck(name, k, ell, ok, f"ln d(m) = {got:.15g}, ln ln m = {expected:.15g} (m = {anchor.m})")
    got = model.level_exponent_at(BlockPosition(a, 0))
    expected = ladder_exponent(k, ell)
    ok = got == expected
    if ell == k + 1:
        ok = ok and (anchor.k, anchor.ell) == (k + 1, 0) and expected == ladder_exponent(k + 1, 0)
        detail = f"m_({k},{k + 1}) = m_{k + 1}: d = log 3 * 2^{got}, expected 2^{(k + 1) ** 3}"
    else:
        detail = f"d(m_({k},{ell})) = log 3 * 2^{got}, expected 2^{expected}"
    return IdentityCheck(name, k, ell, ok, detail)


def _ramp_checks(model: Example8Model, k: int, ell: int) -> list[IdentityCheck]:
    sched = model.schedule
    a = anchor_index(k, ell)
    r = sched.ramp_length(a)
    if sched.scaled:
        levels = [model.ln_level_at(BlockPosition(a + 1, j - r)) for j in range(r + 1)]
        lands = abs(levels[-1] - float(model._ln_ln_m[a + 1])) <= 1e-12
        rising = all(b > c for b, c in zip(levels[1:], levels[:-1]))
        return [
            IdentityCheck("ramp", k, ell, rising, f"{r} strictly increasing ramp steps"),
            IdentityCheck("ramp_landing", k, ell, lands, f"ramp ends at ln ln m = {levels[-1]:.15g}"),
        ]
    e_lo = sched.anchors[a].exponent
    e_hi = sched.anchors[a + 1].exponent
    slope = Fraction(2 * k * k + 3 * k + 1, k**3) if ell == k else Fraction(1, k * k)
    bad = [
        j
        for j in range(1, r + 1)
        if model.level_exponent_at(BlockPosition(a + 1, j - r)) != e_lo + slope * j
    ]
    landed = model.level_exponent_at(BlockPosition(a + 1, 0))
    return [
        IdentityCheck(
            "ramp", k, ell, not bad,
            f"exponent rises by {slope} per step over {r} steps" + (f"; mismatch at j={bad[:5]}" if bad else ""),
        ),
        IdentityCheck("ramp_landing", k, ell, landed == e_hi, f"ramp ends at 2^{landed}, next anchor 2^{e_hi}"),
    ]


def _envelope_margin(model: Example8Model, a_next: int, j: int, r: int) -> float:
    """ln ln n - ln d_n at n = m_{a_next} - r + j."""
    sched = model.schedule
    pos = BlockPosition(a_next, j - r)
    if sched.scaled:
        return math.log(math.log(sched.position_value(pos))) - model.ln_level_at(pos)
    anchor = sched.anchors[a_next]
    s = r - j
    corr = 0.0
    if s > 0:
        ln_frac = math.log(s) - anchor.ln_m
        if ln_frac > -745.0:
            corr = math.log1p(math.log1p(-math.exp(ln_frac)) / anchor.ln_m)
    return float(anchor.exponent - model.level_exponent_at(pos)) * LN2 + corr


def _check_envelope(model: Example8Model, k: int, ell: int) -> IdentityCheck:
    a = anchor_index(k, ell)
    r = model.schedule.ramp_length(a)
    samples = sorted({1, max(r // 2, 1), r})
    margins = [_envelope_margin(model, a + 1, j, r) for j in samples]
    worst = min(margins)
    return IdentityCheck(
        "envelope", k, ell, worst >= -1e-12, f"min ln ln n - ln d_n = {worst:.3e} over j in {samples}"
    )


def slow_variation_profile(model: Example8Model, k_max: int) -> list[tuple[int, float]]:
    """Per generation k, the largest ln(d_{n+1} / d_n) over the ramps of that generation."""
    sched = model.schedule
    profile = []
    for k in range(1, k_max + 1):
        worst = 0.0
        for ell in range(k + 1):
            a = anchor_index(k, ell)
            r = sched.ramp_length(a)
            levels = [model.ln_level_at(BlockPosition(a + 1, j - r)) for j in range(r + 1)]
            worst = max(worst, max(b - c for b, c in zip(levels[1:], levels[:-1])))
        profile.append((k, worst))
    return profile


def verify_block_identities(model: Example8Model, k_max: int) -> BlockIdentityReport:
    """Anchor, seam, ramp, envelope and slow-variation checks for generations 1..k_max."""
    report = BlockIdentityReport()
    if k_max <= 0:
        return report
    if k_max > model.schedule.generations:
        raise ParameterError(f"k_max={k_max} exceeds the {model.schedule.generations} generations of the ladder")
    for k in range(1, k_max + 1):
        for ell in range(k + 2):
            report.checks.append(_check_anchor(model, k, ell))
            if ell <= k:
                report.checks.extend(_ramp_checks(model, k, ell))
                report.checks.append(_check_envelope(model, k, ell))

    prev = math.inf
    for k, worst in slow_variation_profile(model, k_max):
        ok = 0.0 < worst
        if not model.schedule.scaled:
            ok = ok and worst <= prev + 1e-12
            if k >= 2:
                # the inner ramps climb by exactly 2^(1/k^2) per step
                inner = max(
                    model.ln_level_at(BlockPosition(anchor_index(k, ell) + 1, 1 - k**3))
                    - model.ln_level_at(BlockPosition(anchor_index(k, ell) + 1, -k**3))
                    for ell in range(k)
                )
                ok = ok and inner <= LN2 / k**2 + 1e-12
        report.checks.append(
            IdentityCheck("slow_variation", k, 0, ok, f"max d_(n+1)/d_n = exp({worst:.6g}) = {math.exp(worst):.6g}")
        )
        prev = worst
    logger.debug(f"block identities up to k={k_max}: {len(report.failures())} failures of {len(report.checks)}")
    return report


def envelope_check(model: Example8Model, probes: int = 1000) -> IdentityCheck:
    """H(t) <= ln ln t at `probes` values of ln t spread geometrically up to the last anchor."""
    if probes < 1:
        raise ParameterError(f"probes must be positive, got {probes}")
    top = min(float(model.anchor_ln_levels()[-1]), 690.0)
    worst, checked = math.inf, 0
    for x in np.geomspace(1.0001, math.exp(top), probes):
        ln_h = model.ln_H_log(float(x))
        if ln_h == -math.inf:
            continue
        checked += 1
        worst = min(worst, math.log(x) - ln_h)
    ok = worst >= -1e-12
    return IdentityCheck(
        "H_envelope", 0, 0, ok, f"min ln ln t - ln H(t) = {worst:.3e} over {checked} of {probes} probes"
    )
