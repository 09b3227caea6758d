"""Refinement iteration, error-driven adaptation, principle drift, response modes."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol, Sequence, Union

import numpy as np

from .core import (
    DEFAULT_SEED,
    UNDEFINED,
    ConfigError,
    Principle,
    PrincipleSystem,
    ReasonlabError,
    ReasoningSystem,
    Severity,
    ToleranceConfig,
    infer,
    is_undefined,
    json_clean,
    json_number,
    mean_or_undefined,
    roundtrip_discrepancy,
    satisfies,
)


class NoAdapter(ReasonlabError):
    pass


class NonFiniteUpdate(ReasonlabError):
    """An adapter update produced non-finite values and was discarded."""

    def __init__(self, message: str, summary: Optional["AdaptSummary"] = None):
        super().__init__(message)
        self.summary = summary


class EmptyRelaxation(ReasonlabError):
    pass


class InsufficientLog(ReasonlabError):
    pass


# --- refinement -------------------------------------------------------------


@dataclass(frozen=True)
class Converged:
    steps: int

    def describe(self) -> str:
        return f"converged after {self.steps} step(s)"


@dataclass(frozen=True)
class Cycle:
    period: int
    entry_index: int

    def describe(self) -> str:
        return f"cycle of period {self.period} entered at index {self.entry_index}"


@dataclass(frozen=True)
class Diverged:
    step: int

    def describe(self) -> str:
        return f"diverged at step {self.step}"


@dataclass(frozen=True)
class Exhausted:
    reason: str = "max_iterations reached"

    def describe(self) -> str:
        return f"exhausted ({self.reason})"


Outcome = Union[Converged, Cycle, Diverged, Exhausted]


@dataclass(frozen=True)
class Trajectory:
    iterates: tuple
    deltas: tuple
    outcome: Outcome

    def __post_init__(self):
        if len(self.deltas) != max(len(self.iterates) - 1, 0):
            raise ValueError("need one delta per consecutive pair of iterates")

    def to_dict(self, space=None) -> dict:
        enc = space.to_json if space is not None else repr
        o = self.outcome
        out = {"kind": type(o).__name__}
        out.update({k: getattr(o, k) for k in o.__dataclass_fields__})
        return json_clean({
            "iterates": [enc(e) for e in self.iterates],
            "deltas": list(self.deltas),
            "outcome": out,
        })


def _too_big(space, e, delta, bound) -> bool:
    if not math.isfinite(delta) or delta > bound:
        return True
    mag = space.magnitude(e)
    return mag is not None and (not math.isfinite(mag) or mag > bound)


def iterate_refinement(system: ReasoningSystem, start, tol: ToleranceConfig = ToleranceConfig()) -> Trajectory:
    """Run e_{i+1} = f(g(e_i)) from ``start`` until it settles, cycles or blows up.

    Cycle detection compares each new iterate against the full history under
    the explanation metric, so it works for unhashable explanations. Spaces
    that implement ``embed`` get the scan vectorized.
    """
    E = system.explanations
    iterates = [start]
    deltas = []
    history = _History(E, start, tol.max_iterations + 1)

    def done(outcome):
        return Trajectory(tuple(iterates), tuple(deltas), outcome)

    for step in range(1, tol.max_iterations + 1):
        cur = iterates[-1]
        q = system.generate(cur)
        if is_undefined(q):
            return done(Exhausted(f"g undefined at step {step}"))
        if not system.phenomena.admissible(q):
            return done(Exhausted(f"g output inadmissible at step {step}"))
        nxt = system.infer(q)
        if is_undefined(nxt):
            if nxt.diverged:
                return done(Diverged(step))
            return done(Exhausted(f"f undefined at step {step}"))
        d = float(E.distance(cur, nxt))
        iterates.append(nxt)
        deltas.append(d)
        if _too_big(E, nxt, d, tol.divergence_bound):
            return done(Diverged(step))
        if d <= tol.convergence_tol:
            return done(Converged(step))
        # nxt vs every iterate except its immediate predecessor
        j = history.first_within(nxt, len(iterates) - 2, tol.convergence_tol)
        if j is not None:
            return done(Cycle(len(iterates) - 1 - j, j))
        history.push(nxt)
    return done(Exhausted())


class _History:
    def __init__(self, space, start, capacity: int):
        self.space = space
        self.items = [start]
        v = space.embed(start)
        self.buf = None if v is None else np.empty((capacity, v.size))
        if self.buf is not None:
            self.buf[0] = v

    def push(self, e) -> None:
        self.items.append(e)
        if self.buf is not None:
            v = self.space.embed(e)
            if v is None or v.size != self.buf.shape[1] or not np.isfinite(v).all():
                self.buf = None
            else:
                self.buf[len(self.items) - 1] = v

    def first_within(self, e, upto: int, tol: float) -> Optional[int]:
        """Smallest j < upto with distance(items[j], e) <= tol."""
        if upto <= 0:
            return None
        v = self.space.embed(e) if self.buf is not None else None
        if v is not None and v.size == self.buf.shape[1]:
            diff = self.buf[:upto] - v
            hit = np.einsum("ij,ij->i", diff, diff) <= tol * tol
            return int(hit.argmax()) if hit.any() else None
        for j in range(upto):
            if self.space.distance(self.items[j], e) <= tol:
                return j
        return None


# --- adaptation -------------------------------------------------------------


class Adapter(Protocol):
    """Update hook an instantiation exposes to :func:`adapt`.

    ``update`` must leave the system untouched and raise NonFiniteUpdate when
    the proposed step is non-finite.
    """

    def calibration(self) -> list: ...

    def holdout(self, seed: int, n: int) -> list: ...

    def update(self, batch: list, regularization_weight: float, soft_principles: Sequence[Principle]) -> None: ...


class Target(enum.Enum):
    REDUCE_DELTA = "ReduceDelta"
    REDUCE_HARD_VIOLATIONS = "ReduceHardViolations"


@dataclass(frozen=True)
class AdaptationPolicy:
    local: Optional[tuple] = None  # phenomena for Local scope; None means Global
    max_rounds: int = 50
    target: Target = Target.REDUCE_DELTA
    regularization_weight: float = 0.0

    def __post_init__(self):
        if self.local is not None and len(self.local) == 0:
            raise ConfigError("Local scope needs at least one phenomenon")
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be positive")
        if self.regularization_weight < 0:
            raise ConfigError("regularization_weight must be non-negative")

    @property
    def scope(self) -> str:
        return "Global" if self.local is None else "Local"


@dataclass(frozen=True)
class AdaptSummary:
    scope: str
    rounds: int
    before: Any
    after: Any
    elsewhere_before: Any = UNDEFINED
    elsewhere_after: Any = UNDEFINED
    hard_violations_before: int = 0
    hard_violations_after: int = 0

    def to_dict(self) -> dict:
        return json_clean({k: (None if is_undefined(v) else v) for k, v in self.__dict__.items()})


def _mean_delta(system, points):
    return mean_or_undefined([roundtrip_discrepancy(system, p).delta for p in points])


def _hard_violations(system, points) -> int:
    total = 0
    for p in points:
        e = infer(system, p)
        if not is_undefined(e):
            total += len(satisfies(system.principles, e, p).hard_violations)
    return total


def adapt(
    system: ReasoningSystem,
    policy: AdaptationPolicy,
    seed: int = DEFAULT_SEED,
    n_calibration: int = 50,
) -> tuple[ReasoningSystem, AdaptSummary]:
    """Drive the system's adapter with round-trip error over calibration points.

    Local scope restricts updates to ``policy.local``; mean delta elsewhere
    (on held-out points) is reported but not optimised. Soft principles are
    handed to the adapter together with ``regularization_weight``.
    """
    adapter = system.adapter
    if adapter is None:
        raise NoAdapter(f"system {system.name!r} exposes no adapter hook")
    if policy.local is not None:
        batch = list(policy.local)
    else:
        batch = list(adapter.calibration())[:n_calibration]
    elsewhere = adapter.holdout(seed, n_calibration)
    soft = system.principles.soft()

    before = _mean_delta(system, batch)
    other_before = _mean_delta(system, elsewhere)
    hv_before = _hard_violations(system, batch)
    rounds = 0
    for _ in range(policy.max_rounds):
        try:
            adapter.update(batch, policy.regularization_weight, soft)
        except NonFiniteUpdate as exc:
            summary = AdaptSummary(
                policy.scope, rounds, before, _mean_delta(system, batch),
                other_before, _mean_delta(system, elsewhere), hv_before, _hard_violations(system, batch))
            raise NonFiniteUpdate(str(exc), summary) from exc
        rounds += 1
        if policy.target is Target.REDUCE_HARD_VIOLATIONS and _hard_violations(system, batch) == 0:
            break
    summary = AdaptSummary(
        policy.scope, rounds, before, _mean_delta(system, batch),
        other_before, _mean_delta(system, elsewhere), hv_before, _hard_violations(system, batch))
    return system, summary


# --- principle drift --------------------------------------------------------


class Cause(enum.Enum):
    CONTRADICTION_RATE = "ContradictionRate"
    PERFORMANCE_FLOOR = "PerformanceFloor"
    MANUAL = "Manual"


class Action(enum.Enum):
    RELAX = "Relax"
    TIGHTEN = "Tighten"


@dataclass(frozen=True)
class DriftPolicy:
    contradiction_rate_threshold: float = 0.2
    performance_floor: float = math.inf
    on_contradiction: Action = Action.RELAX
    on_performance: Action = Action.TIGHTEN
    tighten_with: Optional[Principle] = None
    relax_penalty: float = 1.0
    manual: Optional[Action] = None
    seed: int = DEFAULT_SEED
    n_samples: int = 50

    def __post_init__(self):
        if not 0 < self.contradiction_rate_threshold <= 1:
            raise ConfigError("contradiction_rate_threshold must lie in (0, 1]")
        if not self.performance_floor >= 0:
            raise ConfigError("performance_floor must be >= 0")


@dataclass(frozen=True)
class DriftMetrics:
    contradiction_rate: float
    mean_delta: Any
    violated: tuple  # principle ids violated on at least one sample, in principle order


@dataclass(frozen=True)
class TriggerRecord:
    cause: Cause
    metric: float
    index: int  # position in the drift timeline
    action: Action
    target: str  # id of the principle demoted, dropped or added
    effect: str  # "demote" | "drop" | "add"
    added: Optional[Principle] = None
    relax_penalty: float = 1.0

    def to_dict(self) -> dict:
        return {
            "cause": self.cause.value,
            "metric": json_number(self.metric),
            "index": self.index,
            "action": self.action.value,
            "target": self.target,
            "effect": self.effect,
        }


@dataclass(frozen=True)
class DriftHistory:
    versions: tuple  # ((PrincipleSystem, TriggerRecord | None), ...)

    @classmethod
    def start(cls, pi: PrincipleSystem) -> "DriftHistory":
        return cls(((pi, None),))

    def __post_init__(self):
        for k, (pi, _) in enumerate(self.versions[1:], start=1):
            if pi.version != self.versions[k - 1][0].version + 1:
                raise ValueError("drift versions must increase by exactly one")

    def __len__(self) -> int:
        return len(self.versions)

    @property
    def initial(self) -> PrincipleSystem:
        return self.versions[0][0]

    @property
    def current(self) -> PrincipleSystem:
        return self.versions[-1][0]

    @property
    def triggers(self) -> list[TriggerRecord]:
        return [t for _, t in self.versions[1:]]

    def to_dict(self) -> dict:
        return {
            "versions": [
                {"version": pi.version, "principles": [
                    {"id": pr.id, "severity": pr.severity.value} for pr in pi
                ], "trigger": None if t is None else t.to_dict()}
                for pi, t in self.versions
            ]
        }


def drift_metrics(system: ReasoningSystem, seed: int, n: int) -> DriftMetrics:
    from .diagnostics import draw_samples

    samples = draw_samples(system, seed, n)
    defined = contradicted = 0
    violated: set[str] = set()
    deltas = []
    for p in samples:
        e = infer(system, p)
        if is_undefined(e):
            continue
        defined += 1
        rep = satisfies(system.principles, e, p)
        if rep.hard_violations:
            contradicted += 1
        violated.update(rep.hard_violations)
        violated.update(rep.soft_violations)
        q = system.generate(e)
        if not is_undefined(q):
            deltas.append(float(system.phenomena.distance(p, q)))
    rate = contradicted / defined if defined else 0.0
    order = [pid for pid in system.principles.ids if pid in violated]
    return DriftMetrics(rate, mean_or_undefined(deltas), tuple(order))


def apply_trigger(pi: PrincipleSystem, rec: TriggerRecord) -> PrincipleSystem:
    """Apply one recorded drift action; used both live and for replay."""
    if rec.effect == "demote":
        new = tuple(pr.demoted(rec.relax_penalty) if pr.id == rec.target else pr for pr in pi)
    elif rec.effect == "drop":
        new = tuple(pr for pr in pi if pr.id != rec.target)
    elif rec.effect == "add":
        new = pi.principles + (rec.added,)
    else:
        raise ValueError(f"unknown drift effect {rec.effect!r}")
    return PrincipleSystem(new, pi.version + 1)


def replay_drift(pi0: PrincipleSystem, triggers: Sequence[TriggerRecord]) -> PrincipleSystem:
    pi = pi0
    for rec in triggers:
        pi = apply_trigger(pi, rec)
    return pi


def _relaxation(pi: PrincipleSystem, violated: Sequence[str]) -> tuple[str, str]:
    by_id = {pr.id: pr for pr in pi}
    for pid in violated:
        if pid in by_id and by_id[pid].severity is Severity.HARD:
            return pid, "demote"
    for pid in violated:
        if pid in by_id:
            return pid, "drop"
    raise EmptyRelaxation("Relax triggered but no violated principle to demote or drop")


def evolve_principles(
    system: ReasoningSystem,
    history: DriftHistory,
    policy: DriftPolicy,
    metrics: Optional[DriftMetrics] = None,
) -> tuple[PrincipleSystem, DriftHistory]:
    """Apply at most one drift action, chosen by the first trigger that fires.

    Triggers are checked in the order: manual, contradiction rate, performance
    floor. Metrics are measured on the system if not supplied.
    """
    pi = system.principles
    if pi != history.current:
        raise ConfigError("system principles do not match the head of the drift history")
    if metrics is None:
        metrics = drift_metrics(system, policy.seed, policy.n_samples)

    fired = None
    if policy.manual is not None:
        fired = (Cause.MANUAL, 0.0, policy.manual)
    elif metrics.contradiction_rate >= policy.contradiction_rate_threshold:
        fired = (Cause.CONTRADICTION_RATE, metrics.contradiction_rate, policy.on_contradiction)
    elif not is_undefined(metrics.mean_delta) and metrics.mean_delta > policy.performance_floor:
        fired = (Cause.PERFORMANCE_FLOOR, metrics.mean_delta, policy.on_performance)
    if fired is None:
        return pi, history

    cause, value, action = fired
    if action is Action.RELAX:
        target, effect = _relaxation(pi, metrics.violated)
        added = None
    else:
        if policy.tighten_with is None:
            raise ConfigError("Tighten needs a principle in policy.tighten_with")
        added = policy.tighten_with
        target, effect = added.id, "add"
    rec = TriggerRecord(cause, float(value), len(history), action, target, effect, added, policy.relax_penalty)
    new_pi = apply_trigger(pi, rec)
    return new_pi, DriftHistory(history.versions + ((new_pi, rec),))


# --- response modes ---------------------------------------------------------


class ResponseMode(enum.Enum):
    STATIC = "Static"
    COLLAPSING = "Collapsing"
    ADAPTIVE = "Adaptive"


@dataclass(frozen=True)
class Epoch:
    mean_delta: Any
    undefined_rate: float
    principle_version: int = 0
    non_finite: bool = False

    def to_dict(self) -> dict:
        return {
            "mean_delta": None if is_undefined(self.mean_delta) else json_number(self.mean_delta),
            "undefined_rate": self.undefined_rate,
            "principle_version": self.principle_version,
            "non_finite": self.non_finite,
        }


def measure_epoch(system: ReasoningSystem, seed: int, n: int, non_finite: bool = False) -> Epoch:
    from .diagnostics import draw_samples

    samples = draw_samples(system, seed, n)
    deltas = [roundtrip_discrepancy(system, p).delta for p in samples]
    undefined = sum(1 for d in deltas if is_undefined(d))
    return Epoch(mean_or_undefined(deltas), undefined / len(samples), system.principles.version, non_finite)


def classify_response_mode(run_log: Sequence[Epoch], convergence_tol: float = 1e-9) -> ResponseMode:
    if len(run_log) < 2:
        raise InsufficientLog("need at least two epochs")
    first = run_log[0]
    if any(ep.non_finite for ep in run_log):
        return ResponseMode.COLLAPSING
    if max(ep.undefined_rate for ep in run_log[1:]) - first.undefined_rate > 0.25:
        return ResponseMode.COLLAPSING

    def same(a, b) -> bool:
        if is_undefined(a) or is_undefined(b):
            return is_undefined(a) and is_undefined(b)
        return abs(a - b) <= convergence_tol

    if all(same(ep.mean_delta, first.mean_delta) and ep.principle_version == first.principle_version
           for ep in run_log[1:]):
        return ResponseMode.STATIC
    return ResponseMode.ADAPTIVE


__all__ = [
    "Action", "AdaptSummary", "AdaptationPolicy", "Adapter", "Cause", "Converged", "Cycle",
    "Diverged", "DriftHistory", "DriftMetrics", "DriftPolicy", "EmptyRelaxation", "Epoch",
    "Exhausted", "InsufficientLog", "NoAdapter", "NonFiniteUpdate", "ResponseMode", "Target",
    "Trajectory", "TriggerRecord", "adapt", "apply_trigger", "classify_response_mode",
    "drift_metrics", "evolve_principles", "iterate_refinement", "measure_epoch", "replay_drift",
]
