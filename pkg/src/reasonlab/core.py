"""The reasoning-system bundle: spaces, partial maps, principles, round-trip error.

A :class:`ReasoningSystem` couples a phenomenon space, an explanation space,
an inference map ``infer: P -> E``, a generation map ``generate: E -> P`` and a
:class:`PrincipleSystem`. Both maps are partial: they return an
:class:`Undefined` value instead of raising when they have nothing to say.
"""

from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

DEFAULT_SEED = 0xC0FFEE


class ReasonlabError(Exception):
    """Base class for errors raised by this package."""


class InadmissibleInput(ReasonlabError):
    pass


class MissingContext(ReasonlabError):
    pass


class ConfigError(ReasonlabError):
    pass


@dataclass(frozen=True)
class Undefined:
    """Value returned by a partial map outside its domain.

    ``diverged`` marks the special case where an iterative map blew up rather
    than merely having no answer. All Undefined values compare equal.
    """

    reason: str = field(default="", compare=False)
    diverged: bool = field(default=False, compare=False)

    def __bool__(self) -> bool:
        return False

    def __repr__(self) -> str:
        return f"Undefined({self.reason!r})" if self.reason else "Undefined"


UNDEFINED = Undefined()


def is_undefined(value: Any) -> bool:
    return isinstance(value, Undefined)


class PhenomenonSpace(ABC):
    """Inputs a system is meant to interpret.

    Subclasses supply a metric, an admissibility predicate and a seeded
    sampler. Finite spaces may return their elements from :meth:`elements`
    so diagnostics can check them exhaustively.
    """

    id: str = "phenomena"

    @abstractmethod
    def admissible(self, p) -> bool: ...

    @abstractmethod
    def sample(self, seed: int, n: int) -> list: ...

    @abstractmethod
    def distance(self, p1, p2) -> float: ...

    def elements(self) -> Optional[list]:
        return None

    def probe(self, p, radius: float, seed: int, k: int) -> list:
        """Up to ``k`` admissible phenomena within ``radius`` of ``p``."""
        pool = self.sample(seed, 4 * k)
        return [q for q in pool if self.distance(p, q) <= radius][:k]

    def to_json(self, p) -> Any:
        return repr(p)


class ExplanationSpace(ABC):
    id: str = "explanations"

    @abstractmethod
    def distance(self, e1, e2) -> float: ...

    def is_trivial(self, e) -> bool:
        return e is None

    def magnitude(self, e) -> Optional[float]:
        """Size of an explanation, used to detect blow-up; None if meaningless."""
        return None

    def embed(self, e) -> Optional[np.ndarray]:
        """Vector whose Euclidean distances reproduce the metric, or None.

        Lets iteration keep its history in an array and scan it in one pass.
        """
        return None

    def to_json(self, e) -> Any:
        return repr(e)


class Verdict(enum.Enum):
    SATISFIED = "Satisfied"
    VIOLATED = "Violated"
    INAPPLICABLE = "Inapplicable"


class Scope(enum.Enum):
    EXPLANATION = "explanation-only"
    PAIR = "pair"


class Severity(enum.Enum):
    HARD = "Hard"
    SOFT = "Soft"


@dataclass(frozen=True)
class Principle:
    """One checkable constraint.

    ``check(e, p)`` returns a :class:`Verdict`; ``p`` is None for
    explanation-only principles. Soft principles contribute ``soft_penalty``
    (or ``penalty_fn(e, p)`` when given) to the penalty total when violated.
    """

    id: str
    check: Callable[[Any, Any], Verdict]
    scope: Scope = Scope.EXPLANATION
    severity: Severity = Severity.HARD
    soft_penalty: float = 0.0
    penalty_fn: Optional[Callable[[Any, Any], float]] = None

    def __post_init__(self):
        if self.soft_penalty < 0:
            raise ConfigError(f"principle {self.id}: soft_penalty must be >= 0")

    def penalty(self, e, p=None) -> float:
        if self.penalty_fn is not None:
            return float(self.penalty_fn(e, p))
        return self.soft_penalty

    def demoted(self, soft_penalty: float = 1.0) -> "Principle":
        return replace(self, severity=Severity.SOFT, soft_penalty=soft_penalty)


@dataclass(frozen=True)
class PrincipleSystem:
    principles: tuple = ()
    version: int = 0

    def __post_init__(self):
        object.__setattr__(self, "principles", tuple(self.principles))
        ids = [pr.id for pr in self.principles]
        if len(ids) != len(set(ids)):
            raise ConfigError(f"duplicate principle ids: {ids}")
        if self.version < 0:
            raise ConfigError("version must be non-negative")

    def __iter__(self):
        return iter(self.principles)

    def __len__(self) -> int:
        return len(self.principles)

    @property
    def ids(self) -> list[str]:
        return [pr.id for pr in self.principles]

    def get(self, pid: str) -> Principle:
        for pr in self.principles:
            if pr.id == pid:
                return pr
        raise KeyError(pid)

    def subset(self, ids: Iterable[str]) -> "PrincipleSystem":
        """Sub-system for localized soundness; keeps the version."""
        wanted = set(ids)
        return PrincipleSystem(tuple(pr for pr in self.principles if pr.id in wanted), self.version)

    def hard(self) -> list[Principle]:
        return [pr for pr in self.principles if pr.severity is Severity.HARD]

    def soft(self) -> list[Principle]:
        return [pr for pr in self.principles if pr.severity is Severity.SOFT]


@dataclass(frozen=True)
class PrincipleReport:
    verdicts: tuple  # of (principle id, Verdict)
    overall_sound: bool
    soft_penalty_total: float
    hard_violations: tuple = ()
    soft_violations: tuple = ()

    def verdict(self, pid: str) -> Verdict:
        return dict(self.verdicts)[pid]


@dataclass
class ReasoningSystem:
    """The five-part bundle plus bookkeeping.

    ``adapter`` is an optional update hook (see :mod:`reasonlab.dynamics`);
    ``coverage`` is an optional instantiation oracle returning a reason
    string when ``e`` fails to cover what ``p`` requires (None when it does).
    """

    phenomena: PhenomenonSpace
    explanations: ExplanationSpace
    infer: Callable[[Any], Any]
    generate: Callable[[Any], Any]
    principles: PrincipleSystem = field(default_factory=PrincipleSystem)
    stateful: bool = False
    name: str = "system"
    adapter: Any = None
    coverage: Optional[Callable[[Any, Any], Optional[str]]] = None

    def with_principles(self, principles: PrincipleSystem) -> "ReasoningSystem":
        return replace(self, principles=principles)


@dataclass(frozen=True)
class DiscrepancyRecord:
    phenomenon: Any
    delta: Any  # float or Undefined
    roundtrip: Any = UNDEFINED


@dataclass(frozen=True)
class ToleranceConfig:
    coherence_tol: float = 1e-6
    fixedpoint_tol: float = 1e-6
    convergence_tol: float = 1e-9
    divergence_bound: float = 1e6
    max_iterations: int = 1000

    def __post_init__(self):
        for name in ("coherence_tol", "fixedpoint_tol", "convergence_tol"):
            v = getattr(self, name)
            if not v >= 0:
                raise ConfigError(f"{name} must be >= 0, got {v}")
        if not self.divergence_bound > 0:
            raise ConfigError("divergence_bound must be positive")
        if not self.divergence_bound > self.convergence_tol:
            raise ConfigError("divergence_bound must exceed convergence_tol")
        if not (isinstance(self.max_iterations, int) and self.max_iterations >= 1):
            raise ConfigError("max_iterations must be a positive integer")

    @classmethod
    def from_dict(cls, d: dict) -> "ToleranceConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
        return cls(**{k: (math.inf if v is None else v) for k, v in d.items()})


def infer(system: ReasoningSystem, p):
    if not system.phenomena.admissible(p):
        raise InadmissibleInput(f"{system.phenomena.id}: inadmissible phenomenon {p!r}")
    return system.infer(p)


def generate(system: ReasoningSystem, e):
    if is_undefined(e):
        return e
    return system.generate(e)


def satisfies(pi: PrincipleSystem, e, p=None) -> PrincipleReport:
    verdicts = []
    hard_viol, soft_viol = [], []
    penalty = 0.0
    for pr in pi:
        if pr.scope is Scope.PAIR:
            if p is None:
                raise MissingContext(f"principle {pr.id} needs the phenomenon")
            v = pr.check(e, p)
        else:
            v = pr.check(e, None)
        verdicts.append((pr.id, v))
        if v is Verdict.VIOLATED:
            if pr.severity is Severity.HARD:
                hard_viol.append(pr.id)
            else:
                soft_viol.append(pr.id)
                penalty += pr.penalty(e, p)
    return PrincipleReport(tuple(verdicts), not hard_viol, penalty, tuple(hard_viol), tuple(soft_viol))


def roundtrip_discrepancy(system: ReasoningSystem, p) -> DiscrepancyRecord:
    e = infer(system, p)
    if is_undefined(e):
        return DiscrepancyRecord(p, e)
    q = system.generate(e)
    if is_undefined(q):
        return DiscrepancyRecord(p, q)
    return DiscrepancyRecord(p, float(system.phenomena.distance(p, q)), q)


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


def json_number(v):
    """Non-finite floats become strings so reports stay strict JSON."""
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def from_json_number(v):
    if v in ("inf", "-inf", "nan"):
        return float(v)
    return v


def json_clean(obj):
    if isinstance(obj, dict):
        return {k: json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_clean(v) for v in obj]
    return json_number(obj)


def mean_or_undefined(values: Sequence[float]):
    vals = [v for v in values if not is_undefined(v)]
    if not vals:
        return UNDEFINED
    return float(sum(vals) / len(vals))
