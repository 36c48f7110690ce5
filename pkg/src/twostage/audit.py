"""Batch re-analysis of reported trial results.

Ingests one row per published trial arm (design parameters, realised
sample sizes, reported estimate and confidence interval), infers the
termination stage, checks the reported numbers for consistency with
unadjusted and adjusted procedures at the reported precision, and
aggregates reporting and consistency statistics plus figure datasets.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, ROUND_HALF_UP, Decimal
from typing import Iterable, Optional, TextIO, Union

from .design import DesignTargets, TerminalOutcome, TwoStageDesign
from .deviation import reject_prob_ek, reject_prob_retained
from .inference import (
    AnalysisState,
    ConfidenceInterval,
    ci_clopper_pearson,
    ci_wald,
    ci_wilson,
    coverage,
    estimate_all,
    estimate_naive,
    estimate_umvue,
    interval_for_outcome,
)

UNADJUSTED_ESTIMATORS = ("naive",)
ADJUSTED_ESTIMATORS = (
    "bias_subtracted",
    "bias_adjusted",
    "umvue",
    "umvcue",
    "conditional",
    "median_unbiased",
)
UNADJUSTED_CIS = ("CP", "Wald", "Wilson")
ADJUSTED_CIS = ("JT", "midp")

# methods named in reports that we recognise but cannot re-derive
OUT_OF_SCOPE_CI_METHODS = {"blyth-still-casella", "bsc", "blyth-still", "blyth still casella"}

_PROPORTION_COLUMNS = {"p0", "p1", "alpha", "beta", "est", "ci_level", "ci_low", "ci_upp"}
_INT_COLUMNS = {
    "year", "a1", "a", "n1", "n", "s1", "n1_realized", "n_enrolled",
    "n_analysis", "s_analysis", "est_decimals", "ci_decimals",
}
_BOOL_COLUMNS = {"p0_justified", "est_adjusted", "pvalue_adjusted", "ci_adjusted"}
_TEXT_COLUMNS = {"id", "journal", "cancer", "criterion", "ci_method"}
_OTHER_COLUMNS = {"stage", "pvalue"}
KNOWN_COLUMNS = (
    _PROPORTION_COLUMNS | _INT_COLUMNS | _BOOL_COLUMNS | _TEXT_COLUMNS | _OTHER_COLUMNS
)


@dataclass
class TrialRecord:
    """One extracted published-trial arm; every field may be absent."""

    id: str = ""
    year: Optional[int] = None
    journal: Optional[str] = None
    cancer: Optional[str] = None
    p0: Optional[float] = None
    p0_justified: Optional[bool] = None
    p1: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    criterion: Optional[str] = None
    a1: Optional[int] = None
    a: Optional[int] = None
    n1: Optional[int] = None
    n: Optional[int] = None
    stage_claimed: Optional[int] = None
    s1: Optional[int] = None
    n1_realized: Optional[int] = None
    n_enrolled: Optional[int] = None
    n_analysis: Optional[int] = None
    s_analysis: Optional[int] = None
    est_reported: Optional[float] = None
    est_decimals: Optional[int] = None
    est_stated_adjusted: Optional[bool] = None
    pvalue_reported: Optional[float] = None
    pvalue_stated_adjusted: Optional[bool] = None
    ci_level: Optional[float] = None
    ci_low: Optional[float] = None
    ci_upp: Optional[float] = None
    ci_decimals: Optional[int] = None
    ci_stated_adjusted: Optional[bool] = None
    ci_method_stated: Optional[str] = None
    percent_normalised: list[str] = field(default_factory=list)


@dataclass
class RowError:
    row: int
    record_id: str
    message: str


@dataclass
class ParseResult:
    records: list[TrialRecord]
    errors: list[RowError]
    warnings: list[str]


_FIELD_BY_COLUMN = {
    "stage": "stage_claimed",
    "est": "est_reported",
    "est_adjusted": "est_stated_adjusted",
    "pvalue": "pvalue_reported",
    "pvalue_adjusted": "pvalue_stated_adjusted",
    "ci_adjusted": "ci_stated_adjusted",
    "ci_method": "ci_method_stated",
}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "y"):
        return True
    if low in ("0", "false", "no", "n"):
        return False
    raise ValueError(f"cannot interpret {raw!r} as yes/no")


def _decimals_in(raw: str) -> Optional[int]:
    text = raw.strip().rstrip("%")
    if "." in text:
        return len(text.split(".", 1)[1])
    return 0


def parse_records(
    source: Union[str, TextIO, Iterable[str]], delimiter: Optional[str] = None
) -> ParseResult:
    """Read trial records from delimited text (comma default, tab accepted).

    Proportion columns given on a 0-100 scale are divided by 100 and
    flagged. Malformed cells produce a row-level error and parsing
    continues; unknown columns produce a warning.
    """
    if isinstance(source, str):
        stream: TextIO = io.StringIO(source)
    else:
        stream = source  # type: ignore[assignment]
    text = stream.read()
    if delimiter is None:
        header_line = text.splitlines()[0] if text.strip() else ""
        delimiter = "\t" if "\t" in header_line else ","
    reader = csv.DictReader(io.StringIO(text), delimiter=delimiter)
    warnings = [
        f"unknown column {name!r} ignored"
        for name in (reader.fieldnames or [])
        if name not in KNOWN_COLUMNS
    ]
    records: list[TrialRecord] = []
    errors: list[RowError] = []
    for row_no, row in enumerate(reader, start=2):
        record = TrialRecord()
        problems: list[str] = []
        for column, raw in row.items():
            if column is None or column not in KNOWN_COLUMNS:
                continue
            if raw is None or raw.strip() == "":
                continue
            raw = raw.strip()
            name = _FIELD_BY_COLUMN.get(column, column)
            try:
                if column in _TEXT_COLUMNS:
                    setattr(record, name, raw)
                elif column in _BOOL_COLUMNS:
                    setattr(record, name, _parse_bool(raw))
                elif column in _INT_COLUMNS:
                    setattr(record, name, int(raw))
                elif column == "stage":
                    stage = int(raw)
                    if stage not in (1, 2):
                        raise ValueError("stage must be 1 or 2")
                    record.stage_claimed = stage
                elif column == "pvalue":
                    record.pvalue_reported = float(raw)
                else:  # proportion columns
                    value = float(raw.rstrip("%"))
                    if value > 1.0 or raw.endswith("%"):
                        value /= 100.0
                        record.percent_normalised.append(column)
                    if not 0.0 <= value <= 1.0:
                        raise ValueError(f"proportion out of range: {value}")
                    setattr(record, name, value)
                    if column == "est" and record.est_decimals is None:
                        decimals = _decimals_in(raw)
                        if column in record.percent_normalised:
                            decimals += 2
                        record.est_decimals = decimals
                    if column in ("ci_low", "ci_upp") and record.ci_decimals is None:
                        decimals = _decimals_in(raw)
                        if column in record.percent_normalised:
                            decimals += 2
                        record.ci_decimals = decimals
            except (TypeError, ValueError) as exc:
                problems.append(f"column {column!r}: {exc}")
        if problems:
            errors.append(RowError(row=row_no, record_id=record.id, message="; ".join(problems)))
            continue
        records.append(record)
    return ParseResult(records=records, errors=errors, warnings=warnings)


def infer_termination_stage(record: TrialRecord) -> Union[int, str]:
    """1, 2, or "unclear": explicit claim, then interim-result evidence,
    then comparison of the analysed and planned sample sizes."""
    if record.stage_claimed in (1, 2):
        return record.stage_claimed
    if record.s1 is not None:
        return 2
    n_an = record.n_analysis
    if n_an is None:
        return "unclear"
    if record.n1 is not None and n_an <= record.n1:
        return 1
    if record.n is not None and n_an >= record.n:
        return 2
    return "unclear"


@dataclass
class ConsistencyResult:
    evaluable: bool
    reason: Optional[str] = None
    matched_estimators: set[str] = field(default_factory=set)
    matched_intervals: set[str] = field(default_factory=set)
    adjusted_evaluable: bool = False
    candidates: dict = field(default_factory=dict)


def _rounds_to(candidate: float, reported: float, decimals: int) -> bool:
    """True when the candidate, rounded to the reported precision by either
    half-up or half-even, equals the reported value."""
    quantum = Decimal(1).scaleb(-decimals)
    cand = Decimal(repr(candidate))
    rep = Decimal(repr(reported)).quantize(quantum, rounding=ROUND_HALF_EVEN)
    for rounding in (ROUND_HALF_UP, ROUND_HALF_EVEN):
        if cand.quantize(quantum, rounding=rounding) == rep:
            return True
    return False


def _analysis_design(record: TrialRecord) -> Optional[TwoStageDesign]:
    """Design usable for adjusted inference at the analysed sample size."""
    if record.a1 is None or record.n1 is None or record.n_analysis is None:
        return None
    if record.n_analysis <= record.n1 or record.a1 >= record.n1:
        return None
    a = record.a if record.a is not None and record.a1 <= record.a < record.n_analysis else record.a1
    try:
        return TwoStageDesign(
            a1=record.a1, a=a, n1=record.n1, n=record.n_analysis
        ).require_valid()
    except ValueError:
        return None


def _analysis_state(record: TrialRecord) -> Optional[AnalysisState]:
    design = _analysis_design(record)
    if design is None or record.s_analysis is None:
        return None
    try:
        return AnalysisState(
            design=design,
            s=record.s_analysis,
            m=record.n_analysis,
            stage=2,
            s1=record.s1,
        )
    except ValueError:
        return None


def check_estimate_consistency(record: TrialRecord) -> ConsistencyResult:
    """Which estimation procedures reproduce the reported point estimate."""
    if infer_termination_stage(record) != 2:
        return ConsistencyResult(False, reason="termination stage not 2")
    if record.s_analysis is None or record.n_analysis is None:
        return ConsistencyResult(False, reason="successes or sample size absent")
    if record.est_reported is None:
        return ConsistencyResult(False, reason="estimate absent")
    decimals = record.est_decimals if record.est_decimals is not None else 2
    candidates = {"naive": estimate_naive(record.s_analysis, record.n_analysis)}
    state = _analysis_state(record)
    adjusted_evaluable = state is not None
    if state is not None:
        estimates = estimate_all(state)
        for name in ADJUSTED_ESTIMATORS:
            candidates[name] = getattr(estimates, name)
    matched = {
        name
        for name, value in candidates.items()
        if _rounds_to(value, record.est_reported, decimals)
    }
    return ConsistencyResult(
        True,
        matched_estimators=matched,
        adjusted_evaluable=adjusted_evaluable,
        candidates=candidates,
    )


def check_ci_consistency(record: TrialRecord) -> ConsistencyResult:
    """Which interval procedures reproduce both reported CI endpoints."""
    if infer_termination_stage(record) != 2:
        return ConsistencyResult(False, reason="termination stage not 2")
    if record.s_analysis is None or record.n_analysis is None:
        return ConsistencyResult(False, reason="successes or sample size absent")
    if record.ci_low is None or record.ci_upp is None:
        return ConsistencyResult(False, reason="interval absent")
    if record.ci_level is None:
        return ConsistencyResult(False, reason="level absent")
    if record.ci_low > record.ci_upp:
        return ConsistencyResult(False, reason="interval endpoints reversed")
    if (
        record.ci_method_stated is not None
        and record.ci_method_stated.strip().lower() in OUT_OF_SCOPE_CI_METHODS
    ):
        return ConsistencyResult(False, reason="not evaluable (method out of scope)")
    decimals = record.ci_decimals if record.ci_decimals is not None else 2
    s, m, level = record.s_analysis, record.n_analysis, record.ci_level
    outcome = TerminalOutcome(s=s, stage=2, m=m)
    candidates: dict[str, ConfidenceInterval] = {
        "CP": ci_clopper_pearson(s, m, level),
        "Wald": ci_wald(s, m, level),
        "Wilson": ci_wilson(s, m, level),
    }
    design = _analysis_design(record)
    adjusted_evaluable = design is not None and _analysis_state(record) is not None
    if adjusted_evaluable:
        for method in ADJUSTED_CIS:
            candidates[method] = interval_for_outcome(method, outcome, design, level)
    matched = {
        name
        for name, ci in candidates.items()
        if _rounds_to(ci.low, record.ci_low, decimals)
        and _rounds_to(ci.upp, record.ci_upp, decimals)
    }
    return ConsistencyResult(
        True,
        matched_intervals=matched,
        adjusted_evaluable=adjusted_evaluable,
        candidates=candidates,
    )


def _stat(count: int, denominator: int) -> dict:
    pct = None if denominator == 0 else round(100.0 * count / denominator, 1)
    return {"count": count, "denominator": denominator, "percent": pct}


def audit_summary(records: list[TrialRecord]) -> dict:
    """Aggregate reporting and consistency statistics.

    Returns a JSON-serialisable dict with explicit denominators for every
    percentage; percentages are given to one decimal place and are None
    when the denominator is zero.
    """
    total = len(records)
    stages = {r.id or str(i): infer_termination_stage(r) for i, r in enumerate(records)}
    stage_of = [infer_termination_stage(r) for r in records]

    def count(pred) -> int:
        return sum(1 for r in records if pred(r))

    design_reporting = {
        "stated_p0": _stat(count(lambda r: r.p0 is not None), total),
        "justified_p0": _stat(count(lambda r: bool(r.p0_justified)), total),
        "stated_p1": _stat(count(lambda r: r.p1 is not None), total),
        "stated_alpha": _stat(count(lambda r: r.alpha is not None), total),
        "stated_beta": _stat(count(lambda r: r.beta is not None), total),
        "stated_criterion": _stat(count(lambda r: r.criterion is not None), total),
        "stated_a1": _stat(count(lambda r: r.a1 is not None), total),
        "stated_a": _stat(count(lambda r: r.a is not None), total),
        "stated_n1": _stat(count(lambda r: r.n1 is not None), total),
        "stated_n": _stat(count(lambda r: r.n is not None), total),
        "stated_p0_p1": _stat(
            count(lambda r: r.p0 is not None and r.p1 is not None), total
        ),
        "stated_p0_p1_alpha_beta": _stat(
            count(
                lambda r: None not in (r.p0, r.p1, r.alpha, r.beta)
            ),
            total,
        ),
        "stated_a1_a_n1_n": _stat(
            count(lambda r: None not in (r.a1, r.a, r.n1, r.n)), total
        ),
        "stated_five_design_components": _stat(
            count(
                lambda r: None not in (r.p0, r.p1, r.alpha, r.beta)
                and r.criterion is not None
            ),
            total,
        ),
        "stated_all_nine_components": _stat(
            count(
                lambda r: None not in (r.p0, r.p1, r.alpha, r.beta, r.a1, r.a, r.n1, r.n)
                and r.criterion is not None
            ),
            total,
        ),
    }

    strata: dict[str, list[TrialRecord]] = {"1": [], "2": [], "unclear": []}
    for r, stage in zip(records, stage_of):
        strata[str(stage)].append(r)
    inference_reporting = {}
    for label, group in list(strata.items()) + [("all", records)]:
        n = len(group)

        def gcount(pred) -> int:
            return sum(1 for r in group if pred(r))

        planned_denominator = gcount(
            lambda r: (
                r.est_reported is not None
                or r.pvalue_reported is not None
                or r.ci_low is not None
            )
            and r.n is not None
            and r.n_analysis is not None
        )
        inference_reporting[label] = {
            "reported_any_inference": _stat(
                gcount(
                    lambda r: r.est_reported is not None
                    or r.pvalue_reported is not None
                    or r.ci_low is not None
                ),
                n,
            ),
            "reported_estimate": _stat(gcount(lambda r: r.est_reported is not None), n),
            "estimate_stated_adjusted": _stat(
                gcount(lambda r: bool(r.est_stated_adjusted)), n
            ),
            "reported_pvalue": _stat(gcount(lambda r: r.pvalue_reported is not None), n),
            "pvalue_stated_adjusted": _stat(
                gcount(lambda r: bool(r.pvalue_stated_adjusted)), n
            ),
            "reported_ci": _stat(gcount(lambda r: r.ci_low is not None), n),
            "ci_stated_adjusted": _stat(gcount(lambda r: bool(r.ci_stated_adjusted)), n),
            "analysis_at_planned_n": _stat(
                gcount(
                    lambda r: (
                        r.est_reported is not None
                        or r.pvalue_reported is not None
                        or r.ci_low is not None
                    )
                    and r.n is not None
                    and r.n_analysis == r.n
                ),
                planned_denominator,
            ),
        }

    stage2 = strata["2"]
    est_checks = [
        (r, check_estimate_consistency(r))
        for r in stage2
        if not r.est_stated_adjusted and r.est_reported is not None
    ]
    est_evaluable = [(r, c) for r, c in est_checks if c.evaluable]
    est_adj_evaluable = [(r, c) for r, c in est_evaluable if c.adjusted_evaluable]
    ci_checks = [
        (r, check_ci_consistency(r))
        for r in stage2
        if not r.ci_stated_adjusted and r.ci_low is not None
    ]
    ci_evaluable = [(r, c) for r, c in ci_checks if c.evaluable]
    ci_adj_evaluable = [(r, c) for r, c in ci_evaluable if c.adjusted_evaluable]
    consistency = {
        "estimate_reanalysable": _stat(len(est_evaluable), len(stage2)),
        "estimate_matches_unadjusted": _stat(
            sum(1 for _, c in est_evaluable if "naive" in c.matched_estimators),
            len(est_evaluable),
        ),
        "estimate_matches_any_adjusted": _stat(
            sum(
                1
                for _, c in est_adj_evaluable
                if c.matched_estimators & set(ADJUSTED_ESTIMATORS)
            ),
            len(est_adj_evaluable),
        ),
        "ci_reanalysable": _stat(len(ci_evaluable), len(stage2)),
        "ci_matches_any_unadjusted": _stat(
            sum(
                1 for _, c in ci_evaluable if c.matched_intervals & set(UNADJUSTED_CIS)
            ),
            len(ci_evaluable),
        ),
        "ci_matches_any_adjusted": _stat(
            sum(1 for _, c in ci_adj_evaluable if c.matched_intervals & set(ADJUSTED_CIS)),
            len(ci_adj_evaluable),
        ),
        "estimate_not_evaluable_reasons": _reason_counts(est_checks),
        "ci_not_evaluable_reasons": _reason_counts(ci_checks),
    }

    return {
        "n_records": total,
        "stage_counts": {
            "1": _stat(len(strata["1"]), total),
            "2": _stat(len(strata["2"]), total),
            "unclear": _stat(len(strata["unclear"]), total),
        },
        "design_reporting": design_reporting,
        "inference_reporting": inference_reporting,
        "consistency": consistency,
    }


def _reason_counts(checks) -> dict:
    out: dict[str, int] = {}
    for _, check in checks:
        if not check.evaluable and check.reason:
            out[check.reason] = out.get(check.reason, 0) + 1
    return dict(sorted(out.items()))


def report_to_json(report: dict) -> str:
    """Deterministic serialisation: identical inputs give identical bytes."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# figure datasets


def export_figure_data(records: list[TrialRecord]) -> dict:
    """The four re-analysis datasets, each a header plus row list, with a
    per-dataset count of records skipped and why."""
    return {
        "estimates_naive_vs_umvue": _estimates_dataset(records),
        "ci_length_and_coverage": _ci_dataset(records),
        "planned_vs_analysed_n": _sample_size_dataset(records),
        "deviation_error_rates": _error_rate_dataset(records),
    }


def _skip(skips: dict, reason: str) -> None:
    skips[reason] = skips.get(reason, 0) + 1


def _estimates_dataset(records: list[TrialRecord]) -> dict:
    header = ["id", "naive", "umvue", "shift_pct_of_effect"]
    rows = []
    skips: dict[str, int] = {}
    for r in records:
        if infer_termination_stage(r) != 2:
            _skip(skips, "termination stage not 2")
            continue
        state = _analysis_state(r)
        if state is None:
            _skip(skips, "design or analysis data absent")
            continue
        naive = estimate_naive(r.s_analysis, r.n_analysis)
        umvue = estimate_umvue(state)
        if r.p0 is None or r.p1 is None or r.p1 <= r.p0:
            _skip(skips, "p0/p1 absent")
            continue
        shift = 100.0 * (naive - umvue) / (r.p1 - r.p0)
        rows.append([r.id, round(naive, 6), round(umvue, 6), round(shift, 2)])
    return {"header": header, "rows": rows, "skipped": skips}


def _ci_dataset(records: list[TrialRecord]) -> dict:
    header = [
        "id", "reported_length", "jt_length", "matched_method",
        "coverage_reported_method", "coverage_jt",
    ]
    rows = []
    skips: dict[str, int] = {}
    for r in records:
        check = check_ci_consistency(r)
        if not check.evaluable:
            _skip(skips, check.reason or "not evaluable")
            continue
        if not check.adjusted_evaluable:
            _skip(skips, "adjusted interval not computable")
            continue
        jt = check.candidates["JT"]
        matched_unadjusted = sorted(check.matched_intervals & set(UNADJUSTED_CIS))
        method = matched_unadjusted[0] if matched_unadjusted else "CP"
        cov_rep = cov_jt = None
        if r.ci_level == 0.95:
            design = _analysis_design(r)
            state = _analysis_state(r)
            p_eval = estimate_umvue(state)
            if 0.0 < p_eval < 1.0:
                cov_rep = round(
                    coverage(method, p_eval, design, level=r.ci_level), 6
                )
                cov_jt = round(coverage("JT", p_eval, design, level=r.ci_level), 6)
        rows.append(
            [
                r.id,
                round(r.ci_upp - r.ci_low, 6),
                round(jt.length, 6),
                method,
                cov_rep,
                cov_jt,
            ]
        )
    return {"header": header, "rows": rows, "skipped": skips}


def _sample_size_dataset(records: list[TrialRecord]) -> dict:
    header = ["id", "planned_n", "analysed_n", "stage"]
    rows = []
    skips: dict[str, int] = {}
    for r in records:
        if r.n is None or r.n_analysis is None:
            _skip(skips, "planned or analysed sample size absent")
            continue
        rows.append([r.id, r.n, r.n_analysis, str(infer_termination_stage(r))])
    return {"header": header, "rows": rows, "skipped": skips}


def _error_rate_dataset(records: list[TrialRecord]) -> dict:
    header = [
        "id", "n_an",
        "retained_alpha", "retained_power", "ek_alpha", "ek_power",
    ]
    rows = []
    skips: dict[str, int] = {}
    for r in records:
        if infer_termination_stage(r) != 2:
            _skip(skips, "termination stage not 2")
            continue
        if r.alpha != 0.05 or r.beta != 0.2:
            _skip(skips, "targets not (alpha=0.05, power=0.8)")
            continue
        if None in (r.p0, r.p1, r.a1, r.a, r.n1, r.n, r.n_analysis):
            _skip(skips, "design or analysis data absent")
            continue
        if r.n_analysis <= r.n1:
            _skip(skips, "no second-stage data")
            continue
        try:
            design = TwoStageDesign(
                a1=r.a1, a=r.a, n1=r.n1, n=r.n,
                targets=DesignTargets(p0=r.p0, p1=r.p1, alpha=r.alpha, beta=r.beta),
            ).require_valid()
        except ValueError:
            _skip(skips, "invalid design")
            continue
        rows.append(
            [
                r.id,
                r.n_analysis,
                round(reject_prob_retained(r.p0, design, r.n_analysis), 6),
                round(reject_prob_retained(r.p1, design, r.n_analysis), 6),
                round(reject_prob_ek(r.p0, design, r.n_analysis), 6),
                round(reject_prob_ek(r.p1, design, r.n_analysis), 6),
            ]
        )
    return {"header": header, "rows": rows, "skipped": skips}


def write_figure_data(datasets: dict, out_dir) -> list[str]:
    """Write each dataset as a CSV file; returns the paths written."""
    import os

    paths = []
    os.makedirs(out_dir, exist_ok=True)
    for name, data in datasets.items():
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(data["header"])
            writer.writerows(data["rows"])
        paths.append(path)
    return paths
