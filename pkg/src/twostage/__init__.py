"""Design, analysis, and audit of two-stage single-arm binomial trials.

Exact operating characteristics and optimal design search, adjusted
post-trial inference (estimates, p-values, confidence intervals with
exact coverage), tests that stay valid when the realised final sample
size deviates from the plan, and batch re-analysis of reported results.
"""

from .binomial import binom_cdf, binom_pmf, binom_upper_tail
from .design import (
    AdmissibleEntry,
    DesignTargets,
    InfeasibleDesignError,
    OperatingCharacteristics,
    TerminalOutcome,
    TwoStageDesign,
    admissible_set,
    expected_sample_size,
    operating_characteristics,
    pet,
    reject_prob,
    search_designs,
    terminal_distribution,
    terminal_outcomes,
    validate_design,
)
from .inference import (
    CI_METHODS,
    AnalysisState,
    ConfidenceInterval,
    Estimate,
    EstimateSet,
    ci_clopper_pearson,
    ci_jennison_turnbull,
    ci_midp,
    ci_wald,
    ci_wilson,
    coverage,
    estimate_all,
    estimate_bias_adjusted,
    estimate_bias_subtracted,
    estimate_conditional,
    estimate_median_unbiased,
    estimate_naive,
    estimate_umvcue,
    estimate_umvue,
    estimator_bias,
    interval_for_outcome,
    p_value,
    q_value,
)
from .deviation import (
    DeviatedAnalysis,
    InterpretationProbabilities,
    conditional_error,
    ek_reject,
    interpretation_probabilities,
    reject_prob_ek,
    reject_prob_retained,
    stage2_pvalue,
)
from .audit import (
    ParseResult,
    TrialRecord,
    audit_summary,
    check_ci_consistency,
    check_estimate_consistency,
    export_figure_data,
    infer_termination_stage,
    parse_records,
    report_to_json,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibleEntry",
    "AnalysisState",
    "CI_METHODS",
    "ConfidenceInterval",
    "DesignTargets",
    "DeviatedAnalysis",
    "Estimate",
    "EstimateSet",
    "InfeasibleDesignError",
    "InterpretationProbabilities",
    "OperatingCharacteristics",
    "ParseResult",
    "TerminalOutcome",
    "TrialRecord",
    "TwoStageDesign",
    "admissible_set",
    "audit_summary",
    "binom_cdf",
    "binom_pmf",
    "binom_upper_tail",
    "check_ci_consistency",
    "check_estimate_consistency",
    "ci_clopper_pearson",
    "ci_jennison_turnbull",
    "ci_midp",
    "ci_wald",
    "ci_wilson",
    "conditional_error",
    "coverage",
    "ek_reject",
    "estimate_all",
    "estimate_bias_adjusted",
    "estimate_bias_subtracted",
    "estimate_conditional",
    "estimate_median_unbiased",
    "estimate_naive",
    "estimate_umvcue",
    "estimate_umvue",
    "estimator_bias",
    "expected_sample_size",
    "export_figure_data",
    "infer_termination_stage",
    "interpretation_probabilities",
    "interval_for_outcome",
    "operating_characteristics",
    "p_value",
    "parse_records",
    "pet",
    "q_value",
    "reject_prob",
    "reject_prob_ek",
    "reject_prob_retained",
    "report_to_json",
    "search_designs",
    "stage2_pvalue",
    "terminal_distribution",
    "terminal_outcomes",
    "validate_design",
]
