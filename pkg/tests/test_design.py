"""Design representation, operating characteristics, and optimal search."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_search, en_oracle, reject_prob_oracle, terminal_probs
from twostage.design import (
    DesignTargets,
    InfeasibleDesignError,
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

TARGETS = DesignTargets(p0=0.1, p1=0.3, alpha=0.05, beta=0.2)
DESIGN = TwoStageDesign(a1=1, a=5, n1=10, n=29, targets=TARGETS)


def test_validation_catches_ordering_violations():
    assert validate_design(DESIGN) == []
    bad = TwoStageDesign(a1=5, a=3, n1=10, n=29)
    assert bad.violations()
    with pytest.raises(ValueError):
        bad.require_valid()
    assert TwoStageDesign(a1=1, a=5, n1=29, n=29).violations()
    assert TwoStageDesign(a1=10, a=12, n1=10, n=29).violations()


def test_compact_round_trip():
    assert DESIGN.compact() == "1/10, 5/29"
    parsed = TwoStageDesign.from_compact("1/10, 5/29", targets=TARGETS)
    assert (parsed.a1, parsed.a, parsed.n1, parsed.n) == (1, 5, 10, 29)
    assert TwoStageDesign.from_compact("1/10,5/29").n == 29
    with pytest.raises(ValueError):
        TwoStageDesign.from_compact("1/10")
    with pytest.raises(ValueError):
        TwoStageDesign.from_compact("one/ten, five/29")


def test_json_round_trip():
    data = json.loads(DESIGN.to_json())
    restored = TwoStageDesign.from_json_dict(data)
    assert restored == DESIGN
    assert restored.targets == TARGETS


def test_terminal_outcomes_enumeration():
    outcomes = list(terminal_outcomes(DESIGN))
    stage1 = [o for o in outcomes if o.stage == 1]
    stage2 = [o for o in outcomes if o.stage == 2]
    assert [o.s for o in stage1] == [0, 1]
    assert all(o.m == 10 for o in stage1)
    assert [o.s for o in stage2] == list(range(2, 30))
    assert all(o.m == 29 for o in stage2)


def test_terminal_distribution_against_path_enumeration():
    for p in (0.05, 0.1, 0.3, 0.55):
        oracle = terminal_probs(1, 10, 29, p)
        for o in terminal_outcomes(DESIGN):
            assert terminal_distribution(o.s, o.stage, p, DESIGN) == pytest.approx(
                oracle[(o.s, o.m)], abs=1e-12
            )


def test_terminal_distribution_known_value():
    # P(stop then continue to exactly 2 total successes) under p = 0.1:
    # only the path (s1=2, s2=0) contributes
    assert terminal_distribution(2, 2, 0.1, DESIGN) == pytest.approx(
        0.02616738165136802, abs=1e-12
    )


@given(
    n1=st.integers(min_value=2, max_value=12),
    extra=st.integers(min_value=1, max_value=12),
    a1=st.integers(min_value=0, max_value=11),
    p=st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
)
@settings(max_examples=100, deadline=None)
def test_terminal_distribution_sums_to_one(n1, extra, a1, p):
    a1 = min(a1, n1 - 1)
    n = n1 + extra
    design = TwoStageDesign(a1=a1, a=min(a1 + 1, n - 1), n1=n1, n=n)
    total = sum(
        terminal_distribution(o.s, o.stage, p, design)
        for o in terminal_outcomes(design)
    )
    assert total == pytest.approx(1.0, abs=1e-10)


def test_operating_characteristics_known_design():
    oc = operating_characteristics(DESIGN)
    assert oc.alpha_attained == pytest.approx(0.04708630664389129, abs=1e-12)
    assert oc.power_attained == pytest.approx(0.8050629131503233, abs=1e-10)
    assert oc.pet_p0 == pytest.approx(0.7360989291, abs=1e-10)
    assert oc.en_p0 == pytest.approx(15.0141203471, abs=1e-9)
    assert pet(0.1, DESIGN) == pytest.approx(oc.pet_p0)
    assert expected_sample_size(0.1, DESIGN) == pytest.approx(oc.en_p0)


def test_reject_prob_matches_oracle():
    for p in (0.05, 0.1, 0.3, 0.5):
        assert reject_prob(p, DESIGN) == pytest.approx(
            reject_prob_oracle(1, 5, 10, 29, p), abs=1e-12
        )


def test_oc_requires_targets():
    bare = TwoStageDesign(a1=1, a=5, n1=10, n=29)
    with pytest.raises(ValueError):
        operating_characteristics(bare)


def test_search_known_designs():
    optimal = search_designs(TARGETS, "null-optimal")
    assert (optimal.a1, optimal.a, optimal.n1, optimal.n) == (1, 5, 10, 29)
    minimax = search_designs(TARGETS, "minimax")
    assert (minimax.a1, minimax.a, minimax.n1, minimax.n) == (1, 5, 15, 25)
    assert search_designs(TARGETS, "optimal") == optimal


@pytest.mark.parametrize("p0,p1", [(0.05, 0.25), (0.2, 0.4), (0.3, 0.5)])
@pytest.mark.parametrize("criterion", ["null-optimal", "minimax"])
def test_search_matches_brute_force(p0, p1, criterion):
    targets = DesignTargets(p0=p0, p1=p1, alpha=0.05, beta=0.2)
    found = search_designs(targets, criterion, n_max=50)
    expected = brute_force_search(p0, p1, 0.05, 0.2, criterion, n_max=50)
    assert (found.a1, found.a, found.n1, found.n) == expected


def test_search_constraints_hold():
    design = search_designs(TARGETS, "null-optimal")
    oc = operating_characteristics(design)
    assert oc.alpha_attained <= 0.05
    assert oc.power_attained >= 0.8


def test_infeasible_reports_binding_constraint():
    with pytest.raises(InfeasibleDesignError) as excinfo:
        search_designs(TARGETS, "null-optimal", n_max=20)
    assert excinfo.value.binding_constraint == "power"
    tight = DesignTargets(p0=0.1, p1=0.11, alpha=1e-6, beta=0.2)
    with pytest.raises(InfeasibleDesignError):
        search_designs(tight, "null-optimal", n_max=5)


def test_unknown_criterion_rejected():
    with pytest.raises(ValueError):
        search_designs(TARGETS, "maximin")


def test_admissible_set_structure():
    entries = admissible_set(TARGETS, n_max=40)
    optimal = search_designs(TARGETS, "null-optimal", n_max=40)
    minimax = search_designs(TARGETS, "minimax", n_max=40)
    assert entries[0].design == optimal
    assert entries[-1].design == minimax
    # weight intervals partition [0, 1]
    assert entries[0].w_low == 0.0
    assert entries[-1].w_high == 1.0
    for prev, cur in zip(entries, entries[1:]):
        assert prev.w_high == pytest.approx(cur.w_low)
        assert prev.design.n > cur.design.n
    # every admissible design minimises the weighted objective at the
    # midpoint of its interval
    candidates = [e.design for e in entries]
    for entry in entries:
        w = 0.5 * (entry.w_low + entry.w_high)
        scores = {
            d.compact(): w * d.n + (1 - w) * en_oracle(d.a1, d.n1, d.n, 0.1)
            for d in candidates
        }
        best = min(scores.values())
        assert scores[entry.design.compact()] == pytest.approx(best, abs=1e-9)


def test_targets_validation():
    with pytest.raises(ValueError):
        DesignTargets(p0=0.3, p1=0.1, alpha=0.05, beta=0.2)
    with pytest.raises(ValueError):
        DesignTargets(p0=0.1, p1=0.3, alpha=0.0, beta=0.2)
    with pytest.raises(ValueError):
        DesignTargets(p0=-0.1, p1=0.3, alpha=0.05, beta=0.2)


def test_with_final_n():
    shifted = DESIGN.with_final_n(26)
    assert shifted.n == 26
    assert (shifted.a1, shifted.a, shifted.n1) == (1, 5, 10)
    assert shifted.targets == TARGETS
