"""Small analytic systems on the real line and on finite sets.

These have closed-form behaviour and serve as calibration targets for the
diagnostics: identity (perfectly coherent), offset (sound but incoherent),
constant (deadlocked), negation (2-cycle), doubling (diverges).
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    ExplanationSpace,
    PhenomenonSpace,
    PrincipleSystem,
    ReasoningSystem,
    rng,
)


class RealLine(PhenomenonSpace, ExplanationSpace):
    """Reals with |a - b|; samples uniformly from [-span, span]."""

    def __init__(self, span: float = 10.0, id: str = "reals"):
        self.span = span
        self.id = id

    def admissible(self, p) -> bool:
        return isinstance(p, (int, float)) and math.isfinite(p)

    def sample(self, seed: int, n: int) -> list:
        return [float(v) for v in rng(seed).uniform(-self.span, self.span, size=n)]

    def distance(self, a, b) -> float:
        return abs(float(a) - float(b))

    def probe(self, p, radius: float, seed: int, k: int) -> list:
        return [float(p + d) for d in rng(seed).uniform(-radius, radius, size=k)]

    def is_trivial(self, e) -> bool:
        return e is None

    def magnitude(self, e) -> float:
        return abs(float(e))

    def embed(self, e) -> np.ndarray:
        return np.array([float(e)])

    def to_json(self, v):
        return float(v)


class FiniteSet(PhenomenonSpace, ExplanationSpace):
    """Discrete metric on a finite list of hashable items."""

    def __init__(self, items: Sequence, id: str = "finite"):
        self.items = list(items)
        self.id = id
        self._index = {x: i for i, x in enumerate(self.items)}

    def admissible(self, p) -> bool:
        return p in self._index

    def sample(self, seed: int, n: int) -> list:
        idx = rng(seed).integers(0, len(self.items), size=n)
        return [self.items[i] for i in idx]

    def elements(self) -> list:
        return list(self.items)

    def distance(self, a, b) -> float:
        return 0.0 if a == b else 1.0

    def to_json(self, v):
        return v


def map_system(
    f: Callable[[float], float],
    g: Callable[[float], float] = lambda e: e,
    name: str = "map",
    principles: Optional[PrincipleSystem] = None,
) -> ReasoningSystem:
    space = RealLine()
    return ReasoningSystem(
        phenomena=space,
        explanations=space,
        infer=f,
        generate=g,
        principles=principles or PrincipleSystem(),
        name=name,
    )


def identity_system(principles: Optional[PrincipleSystem] = None) -> ReasoningSystem:
    return map_system(lambda p: p, lambda e: e, "identity", principles)


def offset_system(offset: float = 1.0, principles: Optional[PrincipleSystem] = None) -> ReasoningSystem:
    return map_system(lambda p: p, lambda e: e + offset, "offset", principles)


def constant_system(value: float = 0.0) -> ReasoningSystem:
    return map_system(lambda p: value, lambda e: e, "constant")


def negation_system() -> ReasoningSystem:
    # f(g(e)) = -e
    return map_system(lambda p: p, lambda e: -e, "negation")


def doubling_system() -> ReasoningSystem:
    return map_system(lambda p: p, lambda e: 2.0 * e, "doubling")


def finite_system(mapping: dict, name: str = "finite") -> ReasoningSystem:
    """Finite E = P with f = identity and g given by ``mapping``."""
    space = FiniteSet(sorted(mapping))
    return ReasoningSystem(
        phenomena=space,
        explanations=space,
        infer=lambda p: p,
        generate=lambda e: mapping[e],
        name=name,
    )
