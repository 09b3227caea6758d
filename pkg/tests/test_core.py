import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reasonlab import logic, neural, opt, toys
from reasonlab.core import (
    UNDEFINED,
    ConfigError,
    InadmissibleInput,
    MissingContext,
    Principle,
    PrincipleSystem,
    Scope,
    Severity,
    ToleranceConfig,
    Undefined,
    Verdict,
    from_json_number,
    generate,
    infer,
    is_undefined,
    json_number,
    roundtrip_discrepancy,
    satisfies,
)

seeds = st.integers(min_value=0, max_value=2 ** 32)


def _spaces():
    data = neural.DataDistribution(4, 2, seed=3)
    return [
        (toys.RealLine(), toys.RealLine()),
        (toys.FiniteSet(list("abcde")), toys.FiniteSet(list("abcde"))),
        (logic.PremiseSpace(3, 4, 2), None),
        (opt.ProblemSpace(4, "mixed"), None),
        (data, None),
    ]


SPACES = _spaces()


@pytest.mark.parametrize("space", [s for s, _ in SPACES], ids=lambda s: type(s).__name__)
@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_phenomenon_metric_axioms(space, seed):
    a, b, c = space.sample(seed, 3)
    assert space.distance(a, a) == 0
    assert space.distance(a, b) >= 0
    assert space.distance(a, b) == pytest.approx(space.distance(b, a), abs=1e-12)
    assert space.distance(a, c) <= space.distance(a, b) + space.distance(b, c) + 1e-9


@pytest.mark.parametrize("space", [s for s, _ in SPACES], ids=lambda s: type(s).__name__)
@settings(max_examples=20, deadline=None)
@given(seed=seeds)
def test_samples_are_admissible_and_seeded(space, seed):
    xs = space.sample(seed, 5)
    assert all(space.admissible(x) for x in xs)
    ys = space.sample(seed, 5)
    assert all(space.distance(x, y) == 0 for x, y in zip(xs, ys))


def test_explanation_metric_axioms_on_system_outputs():
    for system in (logic.logic_system(), opt.opt_system(opt.ProblemSpace(4, "box")),
                   neural.neural_system(neural.init_model(4, 2, 1), neural.DataDistribution(4, 2))):
        ps = system.phenomena.sample(5, 3)
        es = [infer(system, p) for p in ps]
        E = system.explanations
        for x in es:
            assert E.distance(x, x) == 0
        for x in es:
            for y in es:
                assert E.distance(x, y) == pytest.approx(E.distance(y, x))
                for z in es:
                    assert E.distance(x, z) <= E.distance(x, y) + E.distance(y, z) + 1e-9


def test_embed_reproduces_distance():
    for system in (toys.identity_system(), opt.opt_system(opt.ProblemSpace(3, "box", [opt.random_problem(np.random.default_rng(1), 3, "box")])),
                   neural.neural_system(neural.init_model(4, 2, 1), neural.DataDistribution(4, 2))):
        E = system.explanations
        a, b = (infer(system, p) for p in system.phenomena.sample(2, 2))
        assert np.linalg.norm(E.embed(a) - E.embed(b)) == pytest.approx(E.distance(a, b))


def test_undefined_equality_and_falsiness():
    assert Undefined("x") == Undefined("y", diverged=True) == UNDEFINED
    assert not Undefined("why")
    assert is_undefined(UNDEFINED) and not is_undefined(0.0)


def test_generate_propagates_undefined():
    s = toys.identity_system()
    u = Undefined("nothing")
    assert generate(s, u) is u


def test_infer_rejects_inadmissible():
    with pytest.raises(InadmissibleInput):
        infer(toys.identity_system(), math.nan)


def test_undefined_roundtrip_has_no_delta():
    s = toys.map_system(lambda p: UNDEFINED if p > 0 else p)
    assert is_undefined(roundtrip_discrepancy(s, 1.0).delta)
    assert roundtrip_discrepancy(s, -1.0).delta == 0.0


def _always(v):
    return lambda e, p: v


def test_satisfies_empty_system_is_sound():
    rep = satisfies(PrincipleSystem(), 3.0)
    assert rep.overall_sound and rep.soft_penalty_total == 0 and rep.verdicts == ()


def test_pair_principle_needs_context():
    pi = PrincipleSystem((Principle("pair", _always(Verdict.SATISFIED), Scope.PAIR),))
    with pytest.raises(MissingContext):
        satisfies(pi, 1.0)
    assert satisfies(pi, 1.0, 1.0).overall_sound


def test_soft_violations_add_penalty_only():
    pi = PrincipleSystem((
        Principle("a", _always(Verdict.VIOLATED), severity=Severity.SOFT, soft_penalty=0.25),
        Principle("b", _always(Verdict.VIOLATED), severity=Severity.SOFT, penalty_fn=lambda e, p: 2.0),
        Principle("c", _always(Verdict.INAPPLICABLE)),
    ))
    rep = satisfies(pi, 0.0)
    assert rep.overall_sound
    assert rep.soft_penalty_total == 2.25
    assert rep.soft_violations == ("a", "b")
    assert rep.verdict("c") is Verdict.INAPPLICABLE


def test_hard_violation_breaks_soundness():
    pi = PrincipleSystem((Principle("h", _always(Verdict.VIOLATED)),))
    rep = satisfies(pi, 0.0)
    assert not rep.overall_sound and rep.hard_violations == ("h",)


def test_principle_system_validation():
    p = Principle("dup", _always(Verdict.SATISFIED))
    with pytest.raises(ConfigError):
        PrincipleSystem((p, p))
    with pytest.raises(ConfigError):
        Principle("neg", _always(Verdict.SATISFIED), soft_penalty=-1.0)
    q = PrincipleSystem((p, Principle("other", _always(Verdict.SATISFIED))), version=4)
    assert q.subset(["other"]).ids == ["other"] and q.subset([]).version == 4


def test_demoted_principle_is_soft():
    p = Principle("h", _always(Verdict.VIOLATED)).demoted(0.5)
    assert p.severity is Severity.SOFT and p.penalty(None) == 0.5


@pytest.mark.parametrize("bad", [
    {"coherence_tol": -1.0},
    {"divergence_bound": 0.0},
    {"max_iterations": 0},
    {"convergence_tol": 1.0, "divergence_bound": 0.5},
    {"nonsense": 1},
])
def test_tolerance_validation(bad):
    with pytest.raises(ConfigError):
        ToleranceConfig.from_dict(bad)


def test_tolerance_none_means_infinite():
    assert ToleranceConfig.from_dict({"coherence_tol": None}).coherence_tol == math.inf


@given(st.floats(allow_nan=True, allow_infinity=True))
def test_json_number_roundtrip(x):
    y = from_json_number(json_number(x))
    assert (math.isnan(x) and math.isnan(y)) or x == y


@settings(max_examples=50)
@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_identity_roundtrip_is_exact(p):
    assert roundtrip_discrepancy(toys.identity_system(), p).delta == 0.0
