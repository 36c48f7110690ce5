"""Post-trial inference for two-stage designs.

Point estimation (naive plus six adjusted procedures), stagewise p-values,
adjusted and unadjusted confidence intervals, and exact coverage.

When a trial is analysed at a realised final sample size different from the
planned n, all procedures that depend on the full design use the realised
size in place of n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional

from .binomial import (
    RootResult,
    binom_cdf,
    binom_pmf,
    binom_upper_tail,
    normal_quantile,
    solve_monotone_root,
)
from .design import TerminalOutcome, TwoStageDesign, terminal_distribution, terminal_outcomes

ROOT_TOL = 1e-10


@dataclass(frozen=True)
class AnalysisState:
    """The data available at the final analysis of a two-stage trial."""

    design: TwoStageDesign
    s: int
    m: int
    stage: int
    s1: Optional[int] = None

    def __post_init__(self) -> None:
        d = self.design.require_valid()
        if self.stage == 1:
            if self.m != d.n1:
                raise ValueError(f"stage-1 analysis must use m = n1 = {d.n1}, got {self.m}")
            if not 0 <= self.s <= d.a1:
                raise ValueError(
                    f"stage-1 termination requires 0 <= s <= a1 = {d.a1}, got s={self.s}"
                )
        elif self.stage == 2:
            if self.m <= d.n1:
                raise ValueError(f"stage-2 analysis needs m > n1 = {d.n1}, got {self.m}")
            if not d.a1 < self.s <= self.m:
                raise ValueError(
                    f"stage-2 termination requires a1 < s <= m, got s={self.s}, m={self.m}"
                )
        else:
            raise ValueError(f"stage must be 1 or 2, got {self.stage}")
        if self.s1 is not None:
            if not d.a1 < self.s1 <= d.n1:
                raise ValueError(f"stage-1 successes must satisfy a1 < s1 <= n1, got {self.s1}")
            if self.s1 > self.s:
                raise ValueError(f"s1={self.s1} cannot exceed total successes s={self.s}")

    @property
    def analysis_design(self) -> TwoStageDesign:
        """The design with n replaced by the realised final sample size."""
        if self.stage == 2 and self.m != self.design.n:
            return self.design.with_final_n(self.m)
        return self.design


@dataclass(frozen=True)
class Estimate:
    value: float
    clamped: bool = False
    note: Optional[str] = None

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class EstimateSet:
    naive: float
    bias_subtracted: float
    bias_adjusted: float
    umvue: float
    umvcue: float
    conditional: float
    median_unbiased: float

    def to_json_dict(self) -> dict:
        return {
            "naive": self.naive,
            "bias_subtracted": self.bias_subtracted,
            "bias_adjusted": self.bias_adjusted,
            "umvue": self.umvue,
            "umvcue": self.umvcue,
            "conditional": self.conditional,
            "median_unbiased": self.median_unbiased,
        }


@dataclass(frozen=True)
class ConfidenceInterval:
    low: float
    upp: float
    level: float
    method: str

    def __post_init__(self) -> None:
        if self.low > self.upp:
            raise ValueError(f"interval limits out of order: ({self.low}, {self.upp})")

    @property
    def length(self) -> float:
        return self.upp - self.low

    def contains(self, p: float) -> bool:
        return self.low <= p <= self.upp

    def to_json_dict(self) -> dict:
        return {"low": self.low, "upp": self.upp, "level": self.level, "method": self.method}


def _check_level(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    return 1.0 - level


# ---------------------------------------------------------------------------
# point estimation


def estimate_naive(s: int, m: int) -> float:
    if m <= 0:
        raise ValueError(f"sample size must be positive, got {m}")
    if s > m:
        raise ValueError(f"successes {s} exceed sample size {m}")
    return s / m


def _naive_procedure(s: int, m: int, design: TwoStageDesign) -> float:
    return s / m


def estimator_bias(
    estimator,
    p: float,
    design: TwoStageDesign,
) -> tuple[float, float]:
    """Expected value and bias of a point-estimation procedure.

    ``estimator`` is either a procedure name ("naive", "umvue", ...) or a
    callable (s, m, design) -> value defined on every terminal outcome.
    """
    design.require_valid()
    fn = _PROCEDURES[estimator] if isinstance(estimator, str) else estimator
    expected = math.fsum(
        fn(o.s, o.m, design) * terminal_distribution(o.s, o.stage, p, design)
        for o in terminal_outcomes(design)
    )
    return expected, expected - p


def _naive_expectation(p: float, design: TwoStageDesign) -> float:
    return estimator_bias("naive", p, design)[0]


def estimate_bias_subtracted(state: AnalysisState) -> Estimate:
    """Naive estimate minus the naive procedure's bias evaluated at it."""
    d = state.analysis_design
    naive = estimate_naive(state.s, state.m)
    _, bias = estimator_bias("naive", naive, d)
    value = naive - bias
    clamped = not 0.0 <= value <= 1.0
    return Estimate(value=min(1.0, max(0.0, value)), clamped=clamped)


def estimate_bias_adjusted(state: AnalysisState) -> Estimate:
    """The p solving p = naive - Bias(naive | p), i.e. E(naive | p) = naive."""
    d = state.analysis_design
    naive = estimate_naive(state.s, state.m)
    root = solve_monotone_root(lambda p: _naive_expectation(p, d), naive, tol=ROOT_TOL)
    note = "no root in [0, 1]; clamped to boundary" if root.out_of_bracket else None
    return Estimate(value=root.value, clamped=root.out_of_bracket, note=note)


def umvue_fraction(s: int, m: int, design: TwoStageDesign) -> Fraction:
    """Uniform minimum variance unbiased estimate, in exact arithmetic."""
    d = design.require_valid()
    if m == d.n1:
        return Fraction(s, d.n1)
    n2 = m - d.n1
    lo = max(d.a1 + 1, s - n2)
    hi = min(s, d.n1)
    num = sum(math.comb(d.n1 - 1, i - 1) * math.comb(n2, s - i) for i in range(lo, hi + 1))
    den = sum(math.comb(d.n1, i) * math.comb(n2, s - i) for i in range(lo, hi + 1))
    return Fraction(num, den)


def estimate_umvue(state: AnalysisState) -> float:
    return float(umvue_fraction(state.s, state.m, state.analysis_design))


def umvcue_fraction(s: int, m: int, design: TwoStageDesign) -> Fraction:
    """Conditionally (on reaching stage 2) unbiased estimate, exact."""
    d = design.require_valid()
    if m == d.n1:
        return Fraction(s, d.n1)
    n2 = m - d.n1
    lo = max(d.a1 + 1, s - n2)
    hi = min(s, d.n1)
    num = sum(
        math.comb(d.n1, i) * math.comb(n2 - 1, s - i - 1)
        for i in range(lo, hi + 1)
        if 0 <= s - i - 1 <= n2 - 1
    )
    den = sum(math.comb(d.n1, i) * math.comb(n2, s - i) for i in range(lo, hi + 1))
    return Fraction(num, den)


def estimate_umvcue(state: AnalysisState) -> float:
    return float(umvcue_fraction(state.s, state.m, state.analysis_design))


def _log_continuation_prob(p: float, design: TwoStageDesign) -> float:
    total = math.fsum(
        binom_pmf(i, design.n1, p) for i in range(design.a1 + 1, design.n1 + 1)
    )
    return math.log(total)


def estimate_conditional(
    state: AnalysisState, printed_success_coefficient: bool = False
) -> float:
    """Maximiser of the log-likelihood conditional on continuation.

    The failure count multiplying log(1-p) is n - s; setting
    ``printed_success_coefficient`` uses (n - n1) - s instead, for
    compatibility with an alternative parameterisation.
    """
    if state.stage == 1:
        return estimate_naive(state.s, state.m)
    d = state.analysis_design
    s, n = state.s, state.m
    if s == n and not printed_success_coefficient:
        # likelihood is increasing up to the boundary
        return 1.0
    fail = (n - d.n1) - s if printed_success_coefficient else n - s

    def loglik(p: float) -> float:
        return (
            s * math.log(p) + fail * math.log1p(-p) - _log_continuation_prob(p, d)
        )

    return _golden_max(loglik, 1e-12, 1.0 - 1e-12, tol=ROOT_TOL)


def _golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Golden-section maximiser, with a coarse scan to bracket the mode."""
    grid = [lo + (hi - lo) * k / 400 for k in range(401)]
    vals = [f(x) for x in grid]
    k = max(range(len(grid)), key=vals.__getitem__)
    a = grid[max(0, k - 1)]
    b = grid[min(len(grid) - 1, k + 1)]
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    e = a + inv_phi * (b - a)
    fc, fe = f(c), f(e)
    while b - a > tol:
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + inv_phi * (b - a)
            fe = f(e)
    x = 0.5 * (a + b)
    return min(1.0, max(0.0, x))


def q_value(
    s: int,
    m: int,
    p: float,
    design: TwoStageDesign,
    n_final: Optional[int] = None,
) -> float:
    """Stagewise-ordering tail probability of the terminal outcome (s, m).

    At m = n1 this is P(at least s stage-1 successes); at the final sample
    size it sums over continuation paths whose total reaches at least s.
    """
    d = design.require_valid()
    nf = d.n if n_final is None else n_final
    if m == d.n1:
        if not 0 <= s <= d.a1:
            raise ValueError(
                f"(s={s}, m={m}) is not a stage-1 terminal outcome (need s <= a1={d.a1})"
            )
        return binom_upper_tail(s, d.n1, p)
    if m == nf:
        if not d.a1 < s <= nf:
            raise ValueError(
                f"(s={s}, m={m}) is not a stage-2 terminal outcome of the design"
            )
        n2 = nf - d.n1
        return min(
            1.0,
            math.fsum(
                binom_pmf(i, d.n1, p) * binom_upper_tail(s - i, n2, p)
                for i in range(d.a1 + 1, d.n1 + 1)
            ),
        )
    raise ValueError(f"analysis sample size {m} is neither n1={d.n1} nor the final size {nf}")


def q_lower_value(
    s: int,
    m: int,
    p: float,
    design: TwoStageDesign,
    n_final: Optional[int] = None,
) -> float:
    """Probability of an outcome at or below (s, m) in the stagewise order.

    Complements q_value but includes the observed outcome, so the two sum
    to 1 plus the outcome's own probability.
    """
    d = design.require_valid()
    nf = d.n if n_final is None else n_final
    if m == d.n1:
        if not 0 <= s <= d.a1:
            raise ValueError(
                f"(s={s}, m={m}) is not a stage-1 terminal outcome (need s <= a1={d.a1})"
            )
        return binom_cdf(s, d.n1, p)
    if m == nf:
        if not d.a1 < s <= nf:
            raise ValueError(
                f"(s={s}, m={m}) is not a stage-2 terminal outcome of the design"
            )
        n2 = nf - d.n1
        above = math.fsum(
            binom_pmf(i, d.n1, p) * binom_upper_tail(s + 1 - i, n2, p)
            for i in range(d.a1 + 1, d.n1 + 1)
        )
        return max(0.0, 1.0 - above)
    raise ValueError(f"analysis sample size {m} is neither n1={d.n1} nor the final size {nf}")


def estimate_median_unbiased(state: AnalysisState) -> Estimate:
    """The p at which the observed outcome's tail probability equals 0.5."""
    if state.s == 0:
        return Estimate(value=0.0, note="q is identically 1; no median root")
    d = state.analysis_design
    root = solve_monotone_root(
        lambda p: q_value(state.s, state.m, p, d), 0.5, tol=ROOT_TOL
    )
    note = "target not bracketed; clamped to boundary" if root.out_of_bracket else None
    return Estimate(value=root.value, clamped=root.out_of_bracket, note=note)


def estimate_all(state: AnalysisState) -> EstimateSet:
    """All seven point estimates for one analysis state."""
    return EstimateSet(
        naive=estimate_naive(state.s, state.m),
        bias_subtracted=estimate_bias_subtracted(state).value,
        bias_adjusted=estimate_bias_adjusted(state).value,
        umvue=estimate_umvue(state),
        umvcue=estimate_umvcue(state),
        conditional=estimate_conditional(state),
        median_unbiased=estimate_median_unbiased(state).value,
    )


def _umvue_procedure(s: int, m: int, design: TwoStageDesign) -> float:
    return float(umvue_fraction(s, m, design))


def _umvcue_procedure(s: int, m: int, design: TwoStageDesign) -> float:
    return float(umvcue_fraction(s, m, design))


_PROCEDURES: dict[str, Callable[[int, int, TwoStageDesign], float]] = {
    "naive": _naive_procedure,
    "umvue": _umvue_procedure,
    "umvcue": _umvcue_procedure,
}


# ---------------------------------------------------------------------------
# p-values


def p_value(state: AnalysisState, p0: Optional[float] = None) -> float:
    """Stagewise-ordering p-value for H0: p <= p0."""
    if p0 is None:
        if state.design.targets is None:
            raise ValueError("p0 is required (no design targets present)")
        p0 = state.design.targets.p0
    d = state.analysis_design
    return q_value(state.s, state.m, p0, d)


# ---------------------------------------------------------------------------
# confidence intervals


def ci_jennison_turnbull(state: AnalysisState, level: float = 0.95) -> ConfidenceInterval:
    """Stagewise-ordering (adjusted) exact interval.

    The lower limit equates the outcome's upper-tail probability (the q
    function) to half the error budget, the upper limit its
    outcome-inclusive lower-tail probability. Outcomes whose tail never
    reaches the target map to the corresponding boundary. This tail pairing
    is what keeps exact coverage at or above the nominal level; pairing both
    limits with roots of q alone does not.
    """
    alpha_ci = _check_level(level)
    d = state.analysis_design

    low = solve_monotone_root(
        lambda p: q_value(state.s, state.m, p, d), alpha_ci / 2.0, tol=ROOT_TOL
    )
    upp = solve_monotone_root(
        lambda p: q_lower_value(state.s, state.m, p, d), alpha_ci / 2.0, tol=ROOT_TOL
    )
    low_val = 0.0 if low.out_of_bracket else low.value
    upp_val = 1.0 if upp.out_of_bracket else upp.value
    return ConfidenceInterval(low=low_val, upp=upp_val, level=level, method="JT")


def ci_midp(state: AnalysisState, level: float = 0.95) -> ConfidenceInterval:
    """Mid-p interval under the UMVUE ordering of terminal outcomes."""
    alpha_ci = _check_level(level)
    d = state.analysis_design
    observed = umvue_fraction(state.s, state.m, d)
    outcomes = list(terminal_outcomes(d))
    ranks = [umvue_fraction(o.s, o.m, d) for o in outcomes]

    def tail(p: float) -> float:
        terms = []
        for o, r in zip(outcomes, ranks):
            if r < observed:
                continue
            weight = 0.5 if r == observed else 1.0
            terms.append(weight * terminal_distribution(o.s, o.stage, p, d))
        return math.fsum(terms)

    low = solve_monotone_root(tail, alpha_ci / 2.0, tol=ROOT_TOL)
    upp = solve_monotone_root(tail, 1.0 - alpha_ci / 2.0, tol=ROOT_TOL)
    low_val = 0.0 if low.out_of_bracket else low.value
    upp_val = 1.0 if upp.out_of_bracket else upp.value
    return ConfidenceInterval(low=low_val, upp=upp_val, level=level, method="midp")


def ci_clopper_pearson(s: int, m: int, level: float = 0.95) -> ConfidenceInterval:
    """Exact tail-inversion interval for a plain binomial proportion."""
    alpha_ci = _check_level(level)
    if m <= 0:
        raise ValueError(f"sample size must be positive, got {m}")
    if not 0 <= s <= m:
        raise ValueError(f"successes must satisfy 0 <= s <= m, got s={s}, m={m}")
    half = alpha_ci / 2.0
    if s == 0:
        return ConfidenceInterval(0.0, 1.0 - half ** (1.0 / m), level, "CP")
    if s == m:
        return ConfidenceInterval(half ** (1.0 / m), 1.0, level, "CP")
    low = solve_monotone_root(lambda p: binom_upper_tail(s, m, p), half, tol=ROOT_TOL)
    upp = solve_monotone_root(lambda p: binom_cdf(s, m, p), half, tol=ROOT_TOL)
    return ConfidenceInterval(low.value, upp.value, level, "CP")


def ci_wald(s: int, m: int, level: float = 0.95) -> ConfidenceInterval:
    alpha_ci = _check_level(level)
    if m <= 0:
        raise ValueError(f"sample size must be positive, got {m}")
    phat = s / m
    z = normal_quantile(1.0 - alpha_ci / 2.0)
    half_width = z * math.sqrt(phat * (1.0 - phat) / m)
    return ConfidenceInterval(
        max(0.0, phat - half_width), min(1.0, phat + half_width), level, "Wald"
    )


def ci_wilson(s: int, m: int, level: float = 0.95) -> ConfidenceInterval:
    alpha_ci = _check_level(level)
    if m <= 0:
        raise ValueError(f"sample size must be positive, got {m}")
    phat = s / m
    z = normal_quantile(1.0 - alpha_ci / 2.0)
    z2 = z * z
    centre = phat + z2 / (2 * m)
    spread = z * math.sqrt(phat * (1.0 - phat) / m + z2 / (4 * m * m))
    denom = 1.0 + z2 / m
    return ConfidenceInterval(
        max(0.0, (centre - spread) / denom), min(1.0, (centre + spread) / denom), level, "Wilson"
    )


CI_METHODS = ("JT", "midp", "CP", "Wald", "Wilson")


@lru_cache(maxsize=1 << 16)
def interval_for_outcome(
    method: str,
    outcome: TerminalOutcome,
    design: TwoStageDesign,
    level: float = 0.95,
) -> ConfidenceInterval:
    """The interval a method reports for one terminal outcome."""
    key = method.lower()
    if key in ("cp", "clopper-pearson"):
        return ci_clopper_pearson(outcome.s, outcome.m, level)
    if key == "wald":
        return ci_wald(outcome.s, outcome.m, level)
    if key == "wilson":
        return ci_wilson(outcome.s, outcome.m, level)
    state = AnalysisState(design=design, s=outcome.s, m=outcome.m, stage=outcome.stage)
    if key in ("jt", "jennison-turnbull"):
        return ci_jennison_turnbull(state, level)
    if key in ("midp", "mid-p"):
        return ci_midp(state, level)
    raise ValueError(f"unknown CI method {method!r}")


def coverage(
    method,
    p: float,
    design: TwoStageDesign,
    n_final: Optional[int] = None,
    level: float = 0.95,
) -> float:
    """Exact probability that the method's interval contains p.

    ``method`` is a CI method name or a callable
    (outcome, design, level) -> ConfidenceInterval. Interval membership
    uses closed endpoints.
    """
    d = design.require_valid()
    nf = d.n if n_final is None else n_final
    if nf < d.n1 + 1:
        raise ValueError(f"final sample size {nf} must exceed n1={d.n1}")
    d_an = d if nf == d.n else d.with_final_n(nf)
    if callable(method):
        build = method
    else:
        def build(outcome, design_, level_):
            return interval_for_outcome(method, outcome, design_, level_)
    terms = []
    for o in terminal_outcomes(d_an):
        ci = build(o, d_an, level)
        if ci.contains(p):
            terms.append(terminal_distribution(o.s, o.stage, p, d_an))
    return min(1.0, math.fsum(terms))
