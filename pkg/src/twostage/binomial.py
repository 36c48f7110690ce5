"""Exact binomial kernel: pmf/cdf, monotone root finding, normal quantile.

All probabilities are computed in log-space with compensated summation so
that double precision suffices for the sample sizes seen in practice
(n of a few hundred at most).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from statistics import NormalDist
from typing import Callable

_STD_NORMAL = NormalDist()


@lru_cache(maxsize=1 << 20)
def binom_pmf(s: int, m: int, p: float) -> float:
    """P(X = s) for X ~ Bin(m, p)."""
    _check_trial(m, p)
    if s > m:
        raise ValueError(f"number of successes {s} exceeds sample size {m}")
    if s < 0:
        return 0.0
    if p == 0.0:
        return 1.0 if s == 0 else 0.0
    if p == 1.0:
        return 1.0 if s == m else 0.0
    log_pmf = (
        math.lgamma(m + 1)
        - math.lgamma(s + 1)
        - math.lgamma(m - s + 1)
        + s * math.log(p)
        + (m - s) * math.log1p(-p)
    )
    return math.exp(log_pmf)


@lru_cache(maxsize=1 << 20)
def binom_cdf(s: int, m: int, p: float) -> float:
    """P(X <= s) for X ~ Bin(m, p); s = -1 (or below) gives 0 exactly."""
    _check_trial(m, p)
    if s > m:
        raise ValueError(f"number of successes {s} exceeds sample size {m}")
    if s < 0:
        return 0.0
    if s == m:
        return 1.0
    return min(1.0, math.fsum(binom_pmf(i, m, p) for i in range(s + 1)))


@lru_cache(maxsize=1 << 20)
def binom_upper_tail(s: int, m: int, p: float) -> float:
    """P(X >= s) for X ~ Bin(m, p), summed directly for small-tail accuracy.

    s <= 0 gives 1 exactly and s > m gives 0 exactly, so callers can use
    unclamped indices.
    """
    _check_trial(m, p)
    if s <= 0:
        return 1.0
    if s > m:
        return 0.0
    return min(1.0, math.fsum(binom_pmf(i, m, p) for i in range(s, m + 1)))


@dataclass(frozen=True)
class RootResult:
    """Result of a bracketed root search on [0, 1]."""

    value: float
    out_of_bracket: bool = False

    def __float__(self) -> float:
        return self.value


def solve_monotone_root(
    f: Callable[[float], float],
    target: float,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> RootResult:
    """Solve f(p) = target for a monotone f on [0, 1] by bisection.

    If the target is not bracketed by f(0) and f(1), the nearer boundary is
    returned with ``out_of_bracket`` set.
    """
    f0 = f(0.0)
    f1 = f(1.0)
    increasing = f1 >= f0
    lo_val, hi_val = (f0, f1) if increasing else (f1, f0)
    if target < lo_val:
        return RootResult(0.0 if increasing else 1.0, out_of_bracket=True)
    if target > hi_val:
        return RootResult(1.0 if increasing else 0.0, out_of_bracket=True)
    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == target:
            return RootResult(mid)
        if (fm < target) == increasing:
            lo = mid
        else:
            hi = mid
    return RootResult(0.5 * (lo + hi))


def normal_quantile(q: float) -> float:
    """Inverse standard-normal CDF."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie strictly in (0, 1), got {q}")
    return _STD_NORMAL.inv_cdf(q)


def _check_trial(m: int, p: float) -> None:
    if m < 0:
        raise ValueError(f"sample size must be non-negative, got {m}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"success probability must lie in [0, 1], got {p}")
