"""Confidence intervals, paired differences and interval-comparison verdicts.

Quantiles are computed here rather than taken from scipy: the normal one by
Acklam's rational approximation polished with a Halley step, Student's t by
inverting the regularized incomplete beta function.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, InsufficientTasksError

DEFAULT_P_LIMIT = 0.95

# Acklam's coefficients for the inverse normal CDF
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    lo = 0.02425
    if p < lo:
        q = math.sqrt(-2 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    elif p <= 1 - lo:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    # one Halley step brings the relative error near machine precision
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz continued fraction for the incomplete beta function
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 100_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def student_two_sided_tail(t: float, dof: float) -> float:
    """P(|T| > t) for Student's t with ``dof`` degrees of freedom."""
    t = abs(t)
    return betainc(dof / 2.0, 0.5, dof / (dof + t * t))


@lru_cache(maxsize=4096)
def student_critical(dof: int, p_limit: float = DEFAULT_P_LIMIT) -> float:
    """Two-sided critical value t with P(|T| <= t) = p_limit."""
    if dof < 1:
        raise ConfigError(f"degrees of freedom must be >= 1, got {dof}")
    _check_p(p_limit)
    target = 1.0 - p_limit
    # the normal quantile is a lower bound; grow the bracket until it straddles
    lo = normal_quantile(0.5 + p_limit / 2.0)
    hi = 2.0 * lo
    while student_two_sided_tail(hi, dof) > target:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_two_sided_tail(mid, dof) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


def _check_p(p_limit: float) -> None:
    if not 0.0 < p_limit < 1.0:
        raise ConfigError(f"p_limit must be in (0, 1), got {p_limit}")


class Mode(str, enum.Enum):
    NORMAL = "normal"
    STUDENT = "student"


@dataclass(frozen=True)
class IntervalEstimate:
    mean: float
    half_width: float
    p_limit: float
    mode: Mode
    T: int

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    def __str__(self) -> str:
        return f"{self.mean:.4f} ± {self.half_width:.4f}"


def _as_series(values: Sequence[float]) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise DataError("accuracy series must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(a)):
        raise DataError("accuracy series contains non-finite values")
    return a


def mean_and_variance(values: Sequence[float]) -> tuple[float, float]:
    """Mean and Bessel-corrected sample variance."""
    a = _as_series(values)
    if a.size < 2:
        raise InsufficientTasksError("variance needs at least 2 values", int(a.size))
    mean = _mean(a)
    return mean, math.fsum((a - mean) ** 2) / (a.size - 1)


def _mean(a: np.ndarray) -> float:
    return math.fsum(a) / a.size


def _interval(values, p_limit: float, mode: Mode, label: str, center: float | None = None) -> IntervalEstimate:
    _check_p(p_limit)
    a = _as_series(values)
    T = int(a.size)
    if T < 2:
        raise InsufficientTasksError(f"insufficient tasks for {label} CI: got {T}, need >= 2", T)
    mean, var = mean_and_variance(a)
    if center is not None:
        mean = center
    if mode is Mode.NORMAL:
        crit = normal_quantile(0.5 + p_limit / 2.0)
    else:
        crit = student_critical(T - 1, p_limit)
    return IntervalEstimate(mean, crit * math.sqrt(var / T), p_limit, mode, T)


def normal_ci(values: Sequence[float], p_limit: float = DEFAULT_P_LIMIT) -> IntervalEstimate:
    """Closed CI: mean ± z·σ/√T, used for tasks sampled with replacement."""
    return _interval(values, p_limit, Mode.NORMAL, "closed")


def student_ci(values: Sequence[float], p_limit: float = DEFAULT_P_LIMIT) -> IntervalEstimate:
    """Open CI: mean ± t(T-1)·σ/√T, used for tasks drawn until depletion."""
    return _interval(values, p_limit, Mode.STUDENT, "open")


@dataclass(frozen=True)
class PairedSeries:
    """Per-task differences of two methods on one task list.

    ``mean`` is mean(a) - mean(b) computed from the parents, so its sign can
    never disagree with a comparison of the two unpaired means.
    """

    deltas: np.ndarray
    correlation: float  # NaN when either parent series is constant
    mean: float

    @property
    def T(self) -> int:
        return int(self.deltas.size)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denom == 0.0:
        return float("nan")
    return max(-1.0, min(1.0, float(np.dot(da, db)) / denom))


def paired_series(a: Sequence[float], b: Sequence[float],
                  task_hash_a: str | None = None, task_hash_b: str | None = None) -> PairedSeries:
    """Per-task differences ``a - b``; both must come from the same task list."""
    a, b = _as_series(a), _as_series(b)
    if a.size != b.size:
        raise DataError(f"paired series length mismatch: {a.size} vs {b.size}")
    if task_hash_a is not None and task_hash_b is not None and task_hash_a != task_hash_b:
        raise DataError("paired series were not evaluated on the same tasks")
    return PairedSeries(a - b, pearson(a, b), _mean(a) - _mean(b))


def paired_ci(ps: PairedSeries, p_limit: float = DEFAULT_P_LIMIT) -> IntervalEstimate:
    """Student CI on the deltas, centred on the difference of means."""
    return _interval(ps.deltas, p_limit, Mode.STUDENT, "paired", center=ps.mean)


class Verdict(str, enum.Enum):
    PLUS = "+"
    ZERO = "0"
    MINUS = "-"

    def flipped(self) -> Verdict:
        return {Verdict.PLUS: Verdict.MINUS, Verdict.MINUS: Verdict.PLUS}.get(self, self)

    @property
    def conclusive(self) -> bool:
        return self is not Verdict.ZERO


@dataclass(frozen=True)
class ComparisonVerdict:
    symbol: Verdict
    mode: str  # closed | open | paired
    p_limit: float


def compare_intervals(x1: IntervalEstimate, x2: IntervalEstimate, mode: str | None = None) -> ComparisonVerdict:
    """``+`` if x1 lies entirely above x2, ``-`` if entirely below, else ``0``."""
    if x1.p_limit != x2.p_limit:
        raise ConfigError(f"p_limit mismatch: {x1.p_limit} vs {x2.p_limit}")
    if mode is None:
        mode = "closed" if x1.mode is Mode.NORMAL else "open"
    if x1.high < x2.low:
        symbol = Verdict.MINUS
    elif x2.high < x1.low:
        symbol = Verdict.PLUS
    else:
        symbol = Verdict.ZERO
    return ComparisonVerdict(symbol, mode, x1.p_limit)


def paired_verdict(delta_ci: IntervalEstimate) -> ComparisonVerdict:
    """Verdict of a paired-difference interval against zero."""
    zero = IntervalEstimate(0.0, 0.0, delta_ci.p_limit, delta_ci.mode, delta_ci.T)
    return compare_intervals(delta_ci, zero, mode="paired")


def conclusive_probability_bound(p_limit: float = DEFAULT_P_LIMIT) -> float:
    """Probability that two disjoint p_limit intervals rank their true means correctly.

    Each true mean escapes its interval on the wrong side with probability at
    most (1-p)/2, and the two events are independent.
    """
    if not 0.0 < p_limit < 1.0:
        raise ConfigError(f"p_limit must be in (0, 1), got {p_limit}")
    p = Fraction(repr(float(p_limit)))  # the decimal as written, not its binary neighbour
    return float((1 - (1 - p) / 2) ** 2)
