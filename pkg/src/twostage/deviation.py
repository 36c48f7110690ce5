"""Analyses whose realised final sample size differs from the plan.

Covers the discrete conditional-error test (second-stage p-value compared
against the error the planned rule would have spent given the interim
result), the error rates of naively retaining the final rejection bound,
and the probabilities behind informal estimate-versus-target
interpretations of trial results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .binomial import binom_pmf, binom_upper_tail
from .design import TwoStageDesign, reject_prob, terminal_distribution


@dataclass(frozen=True)
class DeviatedAnalysis:
    """A planned design together with the realised stage data."""

    design: TwoStageDesign
    n_an: int
    s1: int
    s_an: int
    n1_realized: Optional[int] = None

    def __post_init__(self) -> None:
        d = self.design.require_valid()
        if self.n1_realized is not None and self.n1_realized != d.n1:
            raise ValueError(
                "deviation in the interim timing is not supported: the interim "
                f"analysis must use the planned n1={d.n1}, got {self.n1_realized}"
            )
        if self.n_an <= d.n1:
            raise ValueError(
                f"final analysis at n_an={self.n_an} <= n1={d.n1} leaves no "
                "second-stage data; report a stage-1 analysis instead"
            )
        if not d.a1 < self.s1 <= d.n1:
            raise ValueError(
                f"continuation requires a1 < s1 <= n1, got s1={self.s1}"
            )
        if not self.s1 <= self.s_an <= self.n_an:
            raise ValueError(
                f"total successes must satisfy s1 <= s_an <= n_an, got s_an={self.s_an}"
            )


def _p0_of(design: TwoStageDesign) -> float:
    if design.targets is None:
        raise ValueError("design targets (p0) are required for deviation analysis")
    return design.targets.p0


def conditional_error(s: int, design: TwoStageDesign) -> float:
    """Null rejection probability the planned rule grants a second stage
    that starts from s stage-1 successes."""
    d = design.require_valid()
    p0 = _p0_of(d)
    if not 0 <= s <= d.n1:
        raise ValueError(f"stage-1 successes must satisfy 0 <= s <= n1={d.n1}, got {s}")
    if s <= d.a1:
        return 0.0
    if s > d.a:
        return 1.0
    # 1 - B(a - s | n - n1, p0)
    return binom_upper_tail(d.a - s + 1, d.n - d.n1, p0)


def stage2_pvalue(s2: int, n2: int, p0: float) -> float:
    """Exact p-value from the second-stage data alone."""
    if n2 < 1:
        raise ValueError(f"second-stage sample size must be at least 1, got {n2}")
    if s2 > n2:
        raise ValueError(f"successes {s2} exceed sample size {n2}")
    return binom_upper_tail(s2, n2, p0)


def ek_reject(analysis: DeviatedAnalysis) -> bool:
    """Conditional-error decision at the realised final sample size."""
    d = analysis.design
    p0 = _p0_of(d)
    p2 = stage2_pvalue(analysis.s_an - analysis.s1, analysis.n_an - d.n1, p0)
    return p2 <= conditional_error(analysis.s1, d)


def reject_prob_retained(p: float, design: TwoStageDesign, n_an: int) -> float:
    """Rejection probability when the planned bound a is kept at n_an."""
    d = design.require_valid()
    if n_an <= d.n1:
        raise ValueError(f"n_an={n_an} must exceed n1={d.n1}")
    return min(
        1.0,
        math.fsum(
            terminal_distribution(s, 2, p, d, n_final=n_an)
            for s in range(d.a + 1, n_an + 1)
        ),
    )


def reject_prob_ek(p: float, design: TwoStageDesign, n_an: int) -> float:
    """Rejection probability of the conditional-error test at n_an."""
    d = design.require_valid()
    p0 = _p0_of(d)
    if n_an <= d.n1:
        raise ValueError(f"n_an={n_an} must exceed n1={d.n1}")
    n2 = n_an - d.n1
    terms = []
    for s1 in range(d.n1 + 1):
        err = conditional_error(s1, d)
        if err == 0.0:
            continue
        inner = math.fsum(
            binom_pmf(s2, n2, p)
            for s2 in range(n2 + 1)
            if stage2_pvalue(s2, n2, p0) <= err
        )
        terms.append(binom_pmf(s1, d.n1, p) * inner)
    return min(1.0, math.fsum(terms))


@dataclass(frozen=True)
class InterpretationProbabilities:
    """Chances of the informal estimate-versus-target comparisons trials use."""

    naive_above_p0_at_p0: float
    naive_above_p0_at_p1: float
    naive_at_least_p1_at_p0: float
    naive_at_least_p1_at_p1: float

    def to_json_dict(self) -> dict:
        return {
            "naive_above_p0_at_p0": self.naive_above_p0_at_p0,
            "naive_above_p0_at_p1": self.naive_above_p0_at_p1,
            "naive_at_least_p1_at_p0": self.naive_at_least_p1_at_p0,
            "naive_at_least_p1_at_p1": self.naive_at_least_p1_at_p1,
        }


def interpretation_probabilities(
    design: TwoStageDesign,
    n_an: Optional[int] = None,
    p0: Optional[float] = None,
    p1: Optional[float] = None,
) -> InterpretationProbabilities:
    """P(naive estimate beats p0 / reaches p1) under p0 and under p1."""
    d = design.require_valid()
    if n_an is None:
        n_an = d.n
    if n_an <= d.n1:
        raise ValueError(f"n_an={n_an} must exceed n1={d.n1}")
    if p0 is None or p1 is None:
        if d.targets is None:
            raise ValueError("p0 and p1 are required (no design targets present)")
        p0 = d.targets.p0 if p0 is None else p0
        p1 = d.targets.p1 if p1 is None else p1

    def prob(indicator, p: float) -> float:
        terms = [
            terminal_distribution(s, 1, p, d)
            for s in range(d.a1 + 1)
            if indicator(s / d.n1)
        ]
        terms += [
            terminal_distribution(s, 2, p, d, n_final=n_an)
            for s in range(d.a1 + 1, n_an + 1)
            if indicator(s / n_an)
        ]
        return min(1.0, math.fsum(terms))

    above_p0 = lambda est: est > p0
    at_least_p1 = lambda est: est >= p1
    return InterpretationProbabilities(
        naive_above_p0_at_p0=prob(above_p0, p0),
        naive_above_p0_at_p1=prob(above_p0, p1),
        naive_at_least_p1_at_p0=prob(at_least_p1, p0),
        naive_at_least_p1_at_p1=prob(at_least_p1, p1),
    )
