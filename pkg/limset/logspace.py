"""Sign / natural-log-magnitude arithmetic for quantities far outside double range."""

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class LogValue:
    sign: int
    ln_mag: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign}")
        if self.sign == 0 and self.ln_mag != -math.inf:
            object.__setattr__(self, "ln_mag", -math.inf)
        if self.sign != 0 and self.ln_mag == -math.inf:
            object.__setattr__(self, "sign", 0)

    @classmethod
    def zero(cls) -> "LogValue":
        return cls(0, -math.inf)

    @classmethod
    def from_log(cls, ln_mag: float, sign: int = 1) -> "LogValue":
        return cls(sign, float(ln_mag))

    @classmethod
    def from_float(cls, x: float) -> "LogValue":
        if x == 0:
            return cls.zero()
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    def to_float(self) -> float:
        if self.sign == 0:
            return 0.0
        try:
            return self.sign * math.exp(self.ln_mag)
        except OverflowError:
            return self.sign * math.inf

    def __neg__(self) -> "LogValue":
        return LogValue(-self.sign, self.ln_mag)

    def __mul__(self, other: "LogValue") -> "LogValue":
        if self.sign == 0 or other.sign == 0:
            return LogValue.zero()
        return LogValue(self.sign * other.sign, self.ln_mag + other.ln_mag)

    def __add__(self, other: "LogValue") -> "LogValue":
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        ln, sign = logsumexp(
            [self.ln_mag, other.ln_mag], b=[self.sign, other.sign], return_sign=True
        )
        if sign == 0 or ln == -math.inf:
            return LogValue.zero()
        return LogValue(int(sign), float(ln))

    def __sub__(self, other: "LogValue") -> "LogValue":
        return self + (-other)

    def __lt__(self, other: "LogValue") -> bool:
        return (self - other).sign < 0

    def __le__(self, other: "LogValue") -> bool:
        return (self - other).sign <= 0

    def to_json(self) -> dict:
        ln = self.ln_mag if math.isfinite(self.ln_mag) else None
        return {"sign": self.sign, "ln_mag": ln}

    @classmethod
    def from_json(cls, data: dict) -> "LogValue":
        ln = data.get("ln_mag")
        return cls(int(data["sign"]), -math.inf if ln is None else float(ln))


def log_sum(values: Iterable[LogValue]) -> LogValue:
    """Sum of log-domain values of mixed sign."""
    items = [v for v in values if v.sign != 0]
    if not items:
        return LogValue.zero()
    ln, sign = logsumexp(
        np.array([v.ln_mag for v in items]),
        b=np.array([v.sign for v in items], dtype=float),
        return_sign=True,
    )
    if sign == 0 or ln == -math.inf:
        return LogValue.zero()
    return LogValue(int(sign), float(ln))


def log_expm1(x: float) -> float:
    """log(exp(x) - 1) for x > 0, stable at both ends."""
    if x > 30:
        return x + math.log1p(-math.exp(-x))
    return math.log(math.expm1(x))
