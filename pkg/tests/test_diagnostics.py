import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reasonlab import logic, toys
from reasonlab.core import (
    UNDEFINED,
    ConfigError,
    Principle,
    PrincipleSystem,
    ToleranceConfig,
    Verdict,
    is_undefined,
)
from reasonlab.diagnostics import (
    Criterion,
    CriterionReport,
    FailureConfig,
    FailureKind,
    Scorecard,
    check_coherence,
    check_completeness,
    check_fixed_point,
    check_soundness,
    classify_failures,
    draw_samples,
    joint_evaluation,
    label_counts,
)

SEED = 12648430


def tol(c):
    return ToleranceConfig(coherence_tol=c)


def test_identity_scores_all_true():
    card = joint_evaluation(toys.identity_system(), SEED, 100, tol(0.0))
    assert card.combination == "TTT"
    assert all(s.kinds == {FailureKind.HEALTHY} for s in card.per_sample)


def test_offset_is_incoherent_at_half():
    card = joint_evaluation(toys.offset_system(1.0), SEED, 50, tol(0.5))
    assert card.combination == "FTT"
    coh = card.reports[0]
    assert coh.worst_case == pytest.approx(1.0)
    assert coh.details["mean_delta"] == pytest.approx(1.0)
    assert len(coh.failing_samples) == 50


def test_offset_passes_above_offset():
    assert check_coherence(toys.offset_system(1.0), SEED, 20, tol(1.0 + 1e-12)).passed


def test_infinite_tolerance_always_coherent():
    assert check_coherence(toys.offset_system(1e5), SEED, 20, tol(math.inf)).passed


@settings(max_examples=25, deadline=None)
@given(offset=st.floats(-5, 5), t1=st.floats(0, 6), t2=st.floats(0, 6))
def test_coherence_monotone_in_tolerance(offset, t1, t2):
    lo, hi = sorted((t1, t2))
    s = toys.offset_system(offset)
    a = check_coherence(s, 1, 10, tol(lo))
    b = check_coherence(s, 1, 10, tol(hi))
    assert b.failing_indices <= a.failing_indices


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32))
def test_checks_are_deterministic(seed):
    s = logic.logic_system(2, logic.PremiseSpace(3, 4, 2), targets=["A"])
    for check in (check_soundness, check_completeness):
        assert check(s, seed, 10) == check(s, seed, 10)
    assert check_coherence(s, seed, 10) == check_coherence(s, seed, 10)


def test_joint_matches_individual_checks():
    s = logic.logic_system(1, logic.PremiseSpace(3, 5, 2), targets=["B"])
    card = joint_evaluation(s, 7, 30)
    assert card.coherent == check_coherence(s, 7, 30).passed
    assert card.sound == check_soundness(s, 7, 30).passed
    assert card.complete == check_completeness(s, 7, 30).passed


def test_contradiction_labels_are_soundness_failures():
    s = logic.logic_system(3, logic.PremiseSpace(3, 5, 2), targets=["A", "B"])
    snd = check_soundness(s, 11, 60)
    cmp_ = check_completeness(s, 11, 60)
    labels = classify_failures(s, 11, 60)
    contra = {x.index for x in labels if FailureKind.CONTRADICTION in x.kinds}
    incompl = {x.index for x in labels if FailureKind.INCOMPLETENESS in x.kinds}
    assert contra and contra <= snd.failing_indices
    assert incompl and incompl <= cmp_.failing_indices


def test_inconsistent_premises_fail_soundness():
    s = logic.logic_system(6, logic.PremiseSpace(fixed=[logic.premises("A", "!A", "A -> B")]))
    rep = check_soundness(s, 0, 5)
    assert not rep.passed and rep.worst_case == 1.0
    assert "consistency" in rep.failing_samples[0][2]


def test_completeness_counts_undefined():
    s = toys.map_system(lambda p: UNDEFINED if p > 0 else p)
    rep = check_completeness(s, SEED, 40)
    snd = check_soundness(s, SEED, 40)
    assert snd.passed and not rep.passed
    assert rep.details["undefined"] == len(rep.failing_samples) > 0
    labels = classify_failures(s, SEED, 40)
    assert {x.index for x in labels if FailureKind.INCOMPLETENESS in x.kinds} == rep.failing_indices


def test_exhaustive_on_finite_spaces():
    s = toys.finite_system({"a": "a", "b": "a", "c": "c"})
    assert draw_samples(s, 0, 1) == ["a", "b", "c"]
    rep = check_coherence(s, 0, 1, tol(0.0))
    assert rep.n_samples == 3 and rep.failing_indices == {1}


def test_fixed_point_check():
    assert check_fixed_point(toys.identity_system(), SEED, 20).passed
    rep = check_fixed_point(toys.offset_system(0.5), SEED, 20)
    assert not rep.passed
    assert rep.details["worst_p_residual"] == pytest.approx(0.5)
    assert rep.details["worst_e_residual"] == pytest.approx(0.5)


def test_deadlock_on_constant_system():
    labels = classify_failures(toys.constant_system(), SEED, 10)
    assert all(FailureKind.DEADLOCK in x.kinds for x in labels)


def test_nonconvergence_on_negation_and_doubling():
    for s in (toys.negation_system(), toys.doubling_system()):
        labels = classify_failures(s, SEED, 10)
        nonzero = [x for x in labels if x.phenomenon != 0.0]
        assert all(FailureKind.NON_CONVERGENCE in x.kinds for x in nonzero)


def test_workers_do_not_change_results():
    s = logic.logic_system(3, logic.PremiseSpace(3, 5, 2))
    assert check_soundness(s, 3, 25, workers=4) == check_soundness(s, 3, 25)
    assert check_coherence(s, 3, 25, workers=4) == check_coherence(s, 3, 25)


def test_reports_roundtrip_through_dict():
    s = logic.logic_system(1, logic.PremiseSpace(3, 5, 2), targets=["C"])
    card = joint_evaluation(s, 2, 20)
    again = Scorecard.from_dict(card.to_dict())
    assert again.to_dict() == card.to_dict()
    rep = CriterionReport(Criterion.COHERENCE, True, 0, UNDEFINED, (), {"mean_delta": math.inf})
    back = CriterionReport.from_dict(rep.to_dict())
    assert is_undefined(back.worst_case) and back.details["mean_delta"] == math.inf


def test_report_pass_flag_consistency():
    with pytest.raises(ValueError):
        CriterionReport(Criterion.SOUNDNESS, True, 1, 0.0, ((0, "x", "bad"),))


def test_failure_config_validation():
    with pytest.raises(ConfigError):
        FailureConfig(deadlock_constancy_fraction=0.0)
    with pytest.raises(ConfigError):
        FailureConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        classify_failures(toys.identity_system(), 0, 1, cfg={"overfit_gap_threshold": 1})


def test_label_counts():
    labels = classify_failures(toys.constant_system(), SEED, 4)
    assert label_counts(labels) == {"Deadlock": 4}


def test_soft_principles_never_fail_soundness():
    pi = PrincipleSystem((Principle("soft", lambda e, p: Verdict.VIOLATED).demoted(3.0),))
    assert check_soundness(toys.identity_system(pi), SEED, 10).passed
