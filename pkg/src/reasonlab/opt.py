"""Convex QP with box and halfspace constraints as a reasoning system.

    minimize 1/2 x'Qx + c'x   s.t.  lo <= x <= hi,  A x <= b

``infer`` is projected gradient descent, the principles are the three KKT
residuals, and ``generate`` rebuilds a linear term c' for which the solution
is an exact KKT point (keeping Q and the constraint geometry).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .core import (
    UNDEFINED,
    ExplanationSpace,
    PhenomenonSpace,
    Principle,
    PrincipleSystem,
    ReasonlabError,
    ReasoningSystem,
    Scope,
    Severity,
    Undefined,
    Verdict,
    is_undefined,
    rng,
)
from .textio import format_blocks, parse_blocks

ACTIVE_TOL = 1e-8
KKT_TOL = 1e-6
PSD_FLOOR = -1e-10
MAX_DIM = 64


class DimensionMismatch(ReasonlabError):
    pass


class NotConverged(ReasonlabError):
    pass


class InvalidProblem(ReasonlabError):
    pass


@dataclass(frozen=True, eq=False)
class QpProblem:
    Q: np.ndarray
    c: np.ndarray
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.size
        if Q.shape != (n, n):
            raise DimensionMismatch(f"Q has shape {Q.shape}, c has length {n}")
        if n > MAX_DIM:
            raise InvalidProblem(f"dimension {n} exceeds {MAX_DIM}")
        if not np.allclose(Q, Q.T, atol=1e-12, rtol=0):
            raise InvalidProblem("Q must be symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        if (self.lo is None) != (self.hi is None):
            raise InvalidProblem("box needs both bounds")
        if self.lo is not None:
            lo = np.asarray(self.lo, dtype=float).reshape(-1)
            hi = np.asarray(self.hi, dtype=float).reshape(-1)
            if lo.size != n or hi.size != n:
                raise DimensionMismatch("box bounds must have length n")
            if np.any(lo > hi):
                raise InvalidProblem("box needs lo <= hi")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        if (self.A is None) != (self.b is None):
            raise InvalidProblem("halfspaces need both A and b")
        if self.A is not None:
            A = np.asarray(self.A, dtype=float).reshape(-1, n)
            b = np.asarray(self.b, dtype=float).reshape(-1)
            if A.shape[0] != b.size:
                raise DimensionMismatch("A and b disagree on the number of halfspaces")
            if A.shape[0] == 0:
                A = b = None
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return 0 if self.A is None else self.A.shape[0]

    @property
    def has_box(self) -> bool:
        return self.lo is not None

    @property
    def psd(self) -> bool:
        return bool(np.linalg.eigvalsh(self.Q).min() >= PSD_FLOOR) if self.n else True

    @property
    def lambda_max(self) -> float:
        return float(np.linalg.eigvalsh(self.Q).max())

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.c @ x)

    def with_c(self, c) -> "QpProblem":
        return QpProblem(self.Q, c, self.lo, self.hi, self.A, self.b)

    def same_geometry(self, other: "QpProblem") -> bool:
        def eq(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return (self.n == other.n and np.array_equal(self.Q, other.Q) and eq(self.lo, other.lo)
                and eq(self.hi, other.hi) and eq(self.A, other.A) and eq(self.b, other.b))

    def __eq__(self, other) -> bool:
        return isinstance(other, QpProblem) and self.same_geometry(other) and np.array_equal(self.c, other.c)

    def __hash__(self):
        return hash((self.n, self.c.tobytes()))

    def to_dict(self) -> dict:
        d = {"Q": self.Q.tolist(), "c": self.c.tolist()}
        if self.has_box:
            d["box"] = [[_jf(lo), _jf(hi)] for lo, hi in zip(self.lo, self.hi)]
        if self.m:
            d["halfspaces"] = [list(a) + [bb] for a, bb in zip(self.A.tolist(), self.b.tolist())]
        return d


def _jf(v: float):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


@dataclass(frozen=True, eq=False)
class QpSolution:
    x: np.ndarray
    lam: np.ndarray  # halfspace multipliers
    mu_lo: np.ndarray
    mu_hi: np.ndarray
    iterations: int
    converged: bool
    problem: QpProblem = field(repr=False)

    @property
    def multipliers(self) -> np.ndarray:
        return np.concatenate([self.lam, self.mu_lo, self.mu_hi])

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "multipliers": self.multipliers.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
        }


# --- projection -------------------------------------------------------------


def _clamp(x, p: QpProblem):
    return np.clip(x, p.lo, p.hi) if p.has_box else x


def _halfspace_proj(x, a, b, aa):
    s = a @ x - b
    return x - (s / aa) * a if s > 0 else x


def primal_infeasibility(p: QpProblem, x) -> float:
    x = np.asarray(x, dtype=float)
    worst = 0.0
    if p.has_box:
        worst = max(worst, float(np.max(p.lo - x, initial=0.0)), float(np.max(x - p.hi, initial=0.0)))
    if p.m:
        worst = max(worst, float(np.max(p.A @ x - p.b, initial=0.0)))
    return worst


def project(x, p: QpProblem, sweeps: int = 10_000, tol: float = 1e-10) -> np.ndarray:
    """Euclidean projection onto box ∩ halfspaces.

    Box-only problems use an exact clamp; otherwise Dykstra's algorithm cycles
    through the box and each halfspace. A point already feasible is returned
    unchanged.
    """
    x = np.asarray(x, dtype=float).copy()
    if not p.m:
        return _clamp(x, p)
    if primal_infeasibility(p, x) == 0.0:
        return x
    aa = np.einsum("ij,ij->i", p.A, p.A)
    sets = p.m + (1 if p.has_box else 0)
    corr = np.zeros((sets, x.size))
    for _ in range(sweeps):
        prev, prev_corr = x, corr.copy()
        for k in range(sets):
            y = x + corr[k]
            if k < p.m:
                z = _halfspace_proj(y, p.A[k], p.b[k], aa[k])
            else:
                z = _clamp(y, p)
            corr[k] = y - z
            x = z
        # x alone can stall while the corrections still move
        if (np.max(np.abs(x - prev)) <= tol and np.max(np.abs(corr - prev_corr)) <= tol
                and primal_infeasibility(p, x) <= tol):
            break
    return x


def _constraint_rows(p: QpProblem):
    """All constraints as rows (a, b) with a·x <= b, box faces included."""
    rows = []
    if p.m:
        rows.extend(zip(p.A, p.b))
    if p.has_box:
        eye = np.eye(p.n)
        for i in range(p.n):
            if math.isfinite(p.hi[i]):
                rows.append((eye[i], p.hi[i]))
            if math.isfinite(p.lo[i]):
                rows.append((-eye[i], -p.lo[i]))
    return rows


def infeasibility_certificate(p: QpProblem, tol: float = 1e-9) -> Optional[str]:
    """Look for two opposing parallel constraints whose slabs do not overlap."""
    rows = _constraint_rows(p)
    for i in range(len(rows)):
        a1, b1 = rows[i]
        n1 = np.linalg.norm(a1)
        if n1 == 0:
            if b1 < -tol:
                return f"constraint {i} reads 0 <= {b1}"
            continue
        for j in range(i + 1, len(rows)):
            a2, b2 = rows[j]
            n2 = np.linalg.norm(a2)
            if n2 == 0 or a1 @ a2 > -(1 - 1e-12) * n1 * n2:
                continue
            if b1 / n1 + b2 / n2 < -tol:
                return f"constraints {i} and {j} are opposing with an empty overlap"
    return None


# --- solver -----------------------------------------------------------------


def _recover_multipliers(p: QpProblem, x):
    """Non-negative least-squares fit of stationarity on the active set."""
    n, m = p.n, p.m
    lam, mu_lo, mu_hi = np.zeros(m), np.zeros(n), np.zeros(n)
    grad = p.Q @ x + p.c
    cols, slots = [], []
    for i in range(m):
        if abs(p.A[i] @ x - p.b[i]) <= ACTIVE_TOL:
            cols.append(p.A[i])
            slots.append(("lam", i))
    if p.has_box:
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            if math.isfinite(p.lo[i]) and abs(x[i] - p.lo[i]) <= ACTIVE_TOL:
                cols.append(-e)
                slots.append(("lo", i))
            if math.isfinite(p.hi[i]) and abs(x[i] - p.hi[i]) <= ACTIVE_TOL:
                cols.append(e)
                slots.append(("hi", i))
    if cols:
        G = np.column_stack(cols)
        coef, _ = nnls(G, -grad)
        for (kind, i), v in zip(slots, coef):
            {"lam": lam, "lo": mu_lo, "hi": mu_hi}[kind][i] = v
    return lam, mu_lo, mu_hi


def solve_projected_gradient(
    problem: QpProblem,
    step: Optional[float] = None,
    tol: float = 1e-12,
    max_iter: int = 20_000,
    divergence_bound: float = 1e6,
    x0=None,
    trace: Optional[list] = None,
):
    """Projected gradient descent ``x <- Proj(x - step (Qx + c))``.

    Returns :class:`QpSolution`, or :class:`Undefined` when the feasible set is
    empty or the iterates blow past ``divergence_bound`` (``diverged=True``).
    ``step`` defaults to 1/λmax(Q). If ``trace`` is a list, objective values
    are appended to it per outer iteration.
    """
    p = problem
    if step is None:
        lm = p.lambda_max
        step = 1.0 / lm if lm > 0 else 1.0
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    x = project(x, p)
    if primal_infeasibility(p, x) > 1e-8:
        cert = infeasibility_certificate(p)
        if cert is not None:
            return Undefined(f"infeasible: {cert}")
    if trace is not None:
        trace.append(p.objective(x))
    converged = False
    it = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, max_iter + 1):
            x_new = project(x - step * (p.Q @ x + p.c), p)
            if not np.all(np.isfinite(x_new)) or np.max(np.abs(x_new)) > divergence_bound:
                return Undefined(f"NonFinite: iterate magnitude exceeded {divergence_bound:g} at iteration {it}",
                                 diverged=True)
            moved = float(np.max(np.abs(x_new - x))) if p.n else 0.0
            x = x_new
            if trace is not None:
                trace.append(p.objective(x))
            if moved <= tol:
                converged = True
                break
    lam, mu_lo, mu_hi = _recover_multipliers(p, x)
    return QpSolution(x, lam, mu_lo, mu_hi, it, converged, p)


def _stationarity_vector(p: QpProblem, x, lam, mu_lo, mu_hi):
    r = p.Q @ x + p.c
    if p.m:
        r = r + p.A.T @ lam
    if p.has_box:
        r = r + mu_hi - mu_lo
    return r


def kkt_residual(problem: QpProblem, solution: QpSolution) -> tuple[float, float, float]:
    p, s = problem, solution
    if s.x.size != p.n or s.lam.size != p.m or s.mu_lo.size != p.n or s.mu_hi.size != p.n:
        raise DimensionMismatch("solution and problem dimensions differ")
    stat = float(np.max(np.abs(_stationarity_vector(p, s.x, s.lam, s.mu_lo, s.mu_hi)), initial=0.0))
    infeas = primal_infeasibility(p, s.x)
    comp = 0.0
    if p.m:
        comp = max(comp, float(np.max(np.abs(s.lam * (p.A @ s.x - p.b)))))
    if p.has_box:
        for mu, gap in ((s.mu_lo, s.x - p.lo), (s.mu_hi, p.hi - s.x)):
            finite = np.isfinite(gap)
            if np.any(finite):
                comp = max(comp, float(np.max(np.abs(mu[finite] * gap[finite]))))
            if np.any(mu[~finite] != 0):
                comp = math.inf
    return stat, infeas, comp


def reconstruct_problem(solution: QpSolution, template: Optional[QpProblem] = None) -> QpProblem:
    """Linear term c' = -Qx - A'λ - μ_hi + μ_lo, making x an exact KKT point."""
    if not solution.converged:
        raise NotConverged("reconstruction needs a converged solution")
    t = template if template is not None else solution.problem
    s = solution
    if s.x.size != t.n:
        raise DimensionMismatch("solution and template dimensions differ")
    c_new = -(t.Q @ s.x)
    if t.m:
        c_new = c_new - t.A.T @ s.lam
    if t.has_box:
        c_new = c_new - s.mu_hi + s.mu_lo
    return t.with_c(c_new)


# --- spaces and system ------------------------------------------------------


def random_spd(gen, n: int, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    """Random symmetric matrix with eigenvalues drawn from [lo, hi]."""
    qmat, _ = np.linalg.qr(gen.standard_normal((n, n)))
    eig = gen.uniform(lo, hi, size=n)
    Q = (qmat * eig) @ qmat.T
    return 0.5 * (Q + Q.T)


def random_problem(gen, n: int, kind: str = "unconstrained", m: int = 2) -> QpProblem:
    Q = random_spd(gen, n)
    c = gen.standard_normal(n) * 2.0
    if kind == "unconstrained":
        return QpProblem(Q, c)
    lo = -gen.uniform(0.2, 1.0, size=n)
    hi = gen.uniform(0.2, 1.0, size=n)
    if kind == "box":
        return QpProblem(Q, c, lo, hi)
    if kind == "mixed":
        # halfspaces pass strictly through the box interior around the origin
        A = gen.standard_normal((m, n))
        b = gen.uniform(0.05, 0.3, size=m)
        return QpProblem(Q, c, lo, hi, A, b)
    raise ValueError(f"unknown problem kind {kind!r}")


class ProblemSpace(PhenomenonSpace):
    """QP problems; distance = ||c - c'||_2 + [geometry differs].

    Problems of different dimension sit at ||c|| + ||c'|| + 1, which keeps
    the triangle inequality.
    """

    id = "qp-problems"

    def __init__(self, n_max: int = 8, kind: str = "unconstrained", fixed: Optional[Sequence[QpProblem]] = None):
        self.n_max = n_max
        self.kind = kind
        self.fixed = None if fixed is None else list(fixed)

    def admissible(self, p) -> bool:
        return isinstance(p, QpProblem) and p.psd and bool(np.all(np.isfinite(p.c)))

    def elements(self):
        return None if self.fixed is None else list(self.fixed)

    def sample(self, seed: int, n: int) -> list:
        if self.fixed is not None:
            return [self.fixed[i % len(self.fixed)] for i in range(n)]
        gen = rng(seed)
        return [random_problem(gen, int(gen.integers(2, self.n_max + 1)), self.kind) for _ in range(n)]

    def distance(self, p1: QpProblem, p2: QpProblem) -> float:
        if p1.n != p2.n:
            return float(np.linalg.norm(p1.c) + np.linalg.norm(p2.c) + 1.0)
        return float(np.linalg.norm(p1.c - p2.c)) + (0.0 if p1.same_geometry(p2) else 1.0)

    def probe(self, p: QpProblem, radius: float, seed: int, k: int) -> list:
        gen = rng(seed)
        out = []
        for _ in range(k):
            d = gen.standard_normal(p.n)
            d *= radius * gen.uniform(0.1, 1.0) / max(np.linalg.norm(d), 1e-300)
            out.append(p.with_c(p.c + d))
        return out

    def to_json(self, p):
        return p.to_dict()


class SolutionSpace(ExplanationSpace):
    id = "qp-solutions"

    def distance(self, e1: QpSolution, e2: QpSolution) -> float:
        if e1.x.size != e2.x.size:
            return float(np.linalg.norm(e1.x) + np.linalg.norm(e2.x) + 1.0)
        return float(np.linalg.norm(e1.x - e2.x))

    def is_trivial(self, e) -> bool:
        return e is None

    def magnitude(self, e) -> float:
        return float(np.linalg.norm(e.x))

    def embed(self, e) -> np.ndarray:
        return np.asarray(e.x, dtype=float).ravel()

    def to_json(self, e):
        return e.to_dict()


def _kkt_principle(pid: str, index: int, tol: float) -> Principle:
    def check(e, p):
        if e.x.size != p.n:
            return Verdict.VIOLATED
        return Verdict.SATISFIED if kkt_residual(p, e)[index] <= tol else Verdict.VIOLATED

    return Principle(pid, check, Scope.PAIR, Severity.HARD)


def kkt_principles(tol: float = KKT_TOL) -> PrincipleSystem:
    return PrincipleSystem((
        _kkt_principle("stationarity", 0, tol),
        _kkt_principle("primal_feasibility", 1, tol),
        _kkt_principle("complementary_slackness", 2, tol),
    ))


def opt_system(
    space: Optional[ProblemSpace] = None,
    step_scale: float = 1.0,
    tol: float = 1e-12,
    max_iter: int = 20_000,
    divergence_bound: float = 1e6,
    kkt_tol: float = KKT_TOL,
) -> ReasoningSystem:
    """Step size is ``step_scale / λmax(Q)`` per problem."""
    space = space or ProblemSpace()

    def f(p: QpProblem):
        lm = p.lambda_max
        step = step_scale / lm if lm > 0 else step_scale
        return solve_projected_gradient(p, step, tol, max_iter, divergence_bound)

    def g(e):
        if is_undefined(e) or not e.converged:
            return UNDEFINED
        return reconstruct_problem(e)

    return ReasoningSystem(
        phenomena=space,
        explanations=SolutionSpace(),
        infer=f,
        generate=g,
        principles=kkt_principles(kkt_tol),
        name="opt",
    )


# --- problem files ----------------------------------------------------------


def parse_problem(text: str) -> QpProblem:
    blocks = parse_blocks(text)
    if "Q" not in blocks or "c" not in blocks:
        raise InvalidProblem("problem file needs Q and c sections")
    Q = np.array(blocks["Q"], dtype=float)
    c = np.array(blocks["c"], dtype=float).reshape(-1)
    lo = hi = A = b = None
    if blocks.get("box"):
        box = np.array(blocks["box"], dtype=float)
        if box.shape != (c.size, 2):
            raise DimensionMismatch("box section needs n rows of 'lo hi'")
        lo, hi = box[:, 0], box[:, 1]
    if blocks.get("halfspaces"):
        hs = np.array(blocks["halfspaces"], dtype=float)
        if hs.ndim != 2 or hs.shape[1] != c.size + 1:
            raise DimensionMismatch("halfspace rows need n coefficients and a bound")
        A, b = hs[:, :-1], hs[:, -1]
    return QpProblem(Q, c, lo, hi, A, b)


def read_problem_file(path) -> QpProblem:
    return parse_problem(Path(path).read_text(encoding="utf-8"))


def format_problem(p: QpProblem) -> str:
    blocks = {"Q": p.Q.tolist(), "c": [p.c.tolist()]}
    if p.has_box:
        blocks["box"] = [[lo, hi] for lo, hi in zip(p.lo.tolist(), p.hi.tolist())]
    if p.m:
        blocks["halfspaces"] = [a + [bb] for a, bb in zip(p.A.tolist(), p.b.tolist())]
    return format_blocks(blocks)
