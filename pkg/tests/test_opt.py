import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import qp_scipy, qp_unconstrained
from reasonlab import opt
from reasonlab.core import ToleranceConfig, is_undefined, satisfies
from reasonlab.diagnostics import FailureKind, check_coherence, check_completeness, check_soundness, classify_failures
from reasonlab.opt import (
    DimensionMismatch,
    InvalidProblem,
    NotConverged,
    QpProblem,
    kkt_residual,
    project,
    reconstruct_problem,
    solve_projected_gradient,
)

I2 = np.eye(2)
C = np.array([-2.0, 0.0])


def problems(kind, count, seed):
    gen = np.random.default_rng(seed)
    return [opt.random_problem(gen, int(gen.integers(1, 9)), kind) for _ in range(count)]


def test_unconstrained_example():
    sol = solve_projected_gradient(QpProblem(I2, C))
    assert sol.converged
    np.testing.assert_allclose(sol.x, [2.0, 0.0], atol=1e-10)
    assert max(kkt_residual(sol.problem, sol)) <= 1e-10


def test_box_example():
    p = QpProblem(I2, C, lo=np.zeros(2), hi=np.ones(2))
    sol = solve_projected_gradient(p)
    np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-10)
    # clamped at hi in x0: the upper-bound multiplier absorbs the gradient -1
    np.testing.assert_allclose(sol.mu_hi, [1.0, 0.0], atol=1e-8)
    assert max(kkt_residual(p, sol)) <= 1e-6


def test_infeasible_is_undefined():
    p = QpProblem(np.eye(1), np.zeros(1), lo=np.array([1.0]), hi=np.array([math.inf]),
                  A=np.array([[1.0]]), b=np.array([-1.0]))
    out = solve_projected_gradient(p)
    assert is_undefined(out) and "infeasible" in out.reason
    s = opt.opt_system(opt.ProblemSpace(fixed=[p]))
    rep = check_completeness(s, 0, 1)
    assert not rep.passed and "undefined" in rep.failing_samples[0][2]


def test_kkt_at_origin():
    p = QpProblem(I2, C)
    sol = solve_projected_gradient(p)
    zero = opt.QpSolution(np.zeros(2), sol.lam, sol.mu_lo, sol.mu_hi, 0, False, p)
    assert kkt_residual(p, zero)[0] == 2.0


def test_kkt_principle_example():
    sol = solve_projected_gradient(QpProblem(I2, C))
    assert satisfies(opt.kkt_principles(1e-6), sol, sol.problem).overall_sound


def test_kkt_dimension_check():
    sol = solve_projected_gradient(QpProblem(I2, C))
    with pytest.raises(DimensionMismatch):
        kkt_residual(QpProblem(np.eye(3), np.zeros(3)), sol)


def test_reconstruct_unconstrained_identity():
    sol = solve_projected_gradient(QpProblem(I2, C))
    np.testing.assert_allclose(reconstruct_problem(sol).c, C, atol=1e-10)


def test_reconstruct_requires_convergence():
    sol = solve_projected_gradient(QpProblem(I2, C), max_iter=1)
    assert not sol.converged
    with pytest.raises(NotConverged):
        reconstruct_problem(sol)


@pytest.mark.parametrize("p", problems("unconstrained", 20, 1))
def test_oracle_equivalence_unconstrained(p):
    sol = solve_projected_gradient(p)
    ref = qp_unconstrained(p.Q, p.c)
    assert np.linalg.norm(sol.x - ref) <= 1e-6 * max(np.linalg.norm(ref), 1.0)


@pytest.mark.parametrize("kind", ["box", "mixed"])
def test_oracle_equivalence_constrained(kind):
    for p in problems(kind, 15, 2):
        sol = solve_projected_gradient(p)
        assert sol.converged
        ref = qp_scipy(p)
        # both are minimisers of a strictly convex problem; compare objective and point
        assert p.objective(sol.x) <= p.objective(ref) + 1e-7
        np.testing.assert_allclose(sol.x, ref, atol=1e-4)


@pytest.mark.parametrize("kind", ["unconstrained", "box", "mixed"])
def test_kkt_and_reconstruction(kind):
    for p in problems(kind, 20, 3):
        sol = solve_projected_gradient(p)
        stat, infeas, comp = kkt_residual(p, sol)
        assert stat <= 1e-6 and infeas <= 1e-8 and comp <= 1e-6
        assert min(sol.multipliers, default=0.0) >= 0
        rec = reconstruct_problem(sol)
        assert kkt_residual(rec, sol)[0] <= 1e-10
        again = solve_projected_gradient(rec)
        assert np.linalg.norm(again.x - sol.x) <= 1e-4


@pytest.mark.parametrize("kind", ["unconstrained", "box", "mixed"])
def test_objective_non_increasing(kind):
    for p in problems(kind, 20, 4):
        trace = []
        solve_projected_gradient(p, trace=trace)
        steps = np.diff(trace)
        assert np.all(steps <= 1e-9 * (1 + np.abs(trace[:-1])))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32), scale=st.floats(0.1, 50))
def test_projection_idempotent_and_feasible(seed, scale):
    gen = np.random.default_rng(seed)
    p = opt.random_problem(gen, int(gen.integers(1, 6)), "mixed")
    x = project(gen.standard_normal(p.n) * scale, p)
    assert opt.primal_infeasibility(p, x) <= 1e-8
    np.testing.assert_allclose(project(x, p), x, atol=1e-10)


def test_divergent_step_is_nonconvergence():
    p = QpProblem(I2, C)
    out = solve_projected_gradient(p, step=2.2, max_iter=200)
    assert is_undefined(out) and out.diverged and out.reason.startswith("NonFinite")
    s = opt.opt_system(opt.ProblemSpace(fixed=[p]), step_scale=2.2, max_iter=200)
    labels = classify_failures(s, 0, 1)
    assert FailureKind.NON_CONVERGENCE in labels[0].kinds


def test_system_checks_on_mixed_problems():
    s = opt.opt_system(opt.ProblemSpace(6, "mixed"))
    assert check_soundness(s, 5, 20).passed
    assert check_coherence(s, 5, 20, ToleranceConfig(coherence_tol=1e-4)).passed


def test_problem_validation():
    with pytest.raises(InvalidProblem):
        QpProblem(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(InvalidProblem):
        QpProblem(I2, np.zeros(2), lo=np.ones(2), hi=np.zeros(2))
    with pytest.raises(DimensionMismatch):
        QpProblem(I2, np.zeros(3))


def test_problem_file_roundtrip(tmp_path):
    for p in problems("mixed", 5, 6) + problems("box", 5, 7):
        path = tmp_path / "p.txt"
        path.write_text(opt.format_problem(p))
        assert opt.read_problem_file(path) == p


def test_problem_file_sections():
    text = "# demo\nQ\n1 0\n0 1\nc\n-2 0\nbox\n0 1\n0 inf\n"
    p = opt.parse_problem(text)
    assert p.hi[1] == math.inf and p.m == 0
    with pytest.raises(InvalidProblem):
        opt.parse_problem("Q\n1\n")
