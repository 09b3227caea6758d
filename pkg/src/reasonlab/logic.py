"""Propositional deduction as a reasoning system.

Phenomena are premise sets, explanations are :class:`Derivation` objects
(theorems with support sets), ``infer`` is bounded forward chaining and
``generate`` reads the premises back off the supports. A brute-force truth
table serves as the entailment oracle.

Grammar (ASCII, whitespace insignificant)::

    impl  := or ( '->' impl )?          right associative
    or    := and ( '|' and )*
    and   := unary ( '&' unary )*
    unary := '!' unary | atom | '(' impl ')'
    atom  := [A-Za-z][A-Za-z0-9_]*
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

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
    Verdict,
    rng,
)

MAX_ATOMS = 16


class ParseError(ReasonlabError):
    def __init__(self, message: str, offset: int, expected: Iterable[str]):
        self.offset = offset
        self.expected = frozenset(expected)
        super().__init__(f"{message} at offset {offset}; expected one of {sorted(self.expected)}")


class TooManyAtoms(ReasonlabError):
    pass


class IndexOutOfRange(ReasonlabError):
    pass


# --- syntax -----------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


Formula = Union[Atom, Not, And, Or, Implies]

_TOKEN = re.compile(r"\s*(?:(?P<atom>[A-Za-z][A-Za-z0-9_]*)|(?P<op>->|[!&|()]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            if rest.strip() == "":
                break
            off = pos + (len(rest) - len(rest.lstrip()))
            raise ParseError(f"unexpected character {text[off]!r}", off, {"atom", "!", "("})
        kind = "atom" if m.group("atom") else m.group("op")
        start = m.start("atom") if m.group("atom") else m.start("op")
        toks.append((kind, m.group(kind if kind == "atom" else "op"), start))
        pos = m.end()
    toks.append(("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> str:
        return self.toks[self.i][0]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        kind, val, off = self.toks[self.i]
        what = "end of input" if kind == "eof" else f"token {val!r}"
        raise ParseError(f"unexpected {what}", off, expected)

    def impl(self) -> Formula:
        left = self.disj()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.impl())
        return left

    def disj(self) -> Formula:
        f = self.conj()
        while self.peek() == "|":
            self.take()
            f = Or(f, self.conj())
        return f

    def conj(self) -> Formula:
        f = self.unary()
        while self.peek() == "&":
            self.take()
            f = And(f, self.unary())
        return f

    def unary(self) -> Formula:
        kind = self.peek()
        if kind == "!":
            self.take()
            return Not(self.unary())
        if kind == "atom":
            return Atom(self.take()[1])
        if kind == "(":
            self.take()
            f = self.impl()
            if self.peek() != ")":
                self.fail({")", "&", "|", "->"})
            self.take()
            return f
        self.fail({"atom", "!", "("})


def parse_formula(text: str) -> Formula:
    p = _Parser(text)
    f = p.impl()
    if p.peek() != "eof":
        p.fail({"&", "|", "->", "end of input"})
    return f


_PREC = {Implies: 1, Or: 2, And: 3, Not: 4, Atom: 5}


def format_formula(f: Formula) -> str:
    """Print with the fewest parentheses that parse back to the same tree."""
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        inner = format_formula(f.arg)
        return "!" + (inner if _PREC[type(f.arg)] >= _PREC[Not] else f"({inner})")
    op = {And: " & ", Or: " | ", Implies: " -> "}[type(f)]
    mine = _PREC[type(f)]
    ls, rs = format_formula(f.left), format_formula(f.right)
    # & and | are left associative, -> is right associative
    if isinstance(f, Implies):
        left_paren = _PREC[type(f.left)] <= mine
        right_paren = _PREC[type(f.right)] < mine
    else:
        left_paren = _PREC[type(f.left)] < mine
        right_paren = _PREC[type(f.right)] <= mine
    if left_paren:
        ls = f"({ls})"
    if right_paren:
        rs = f"({rs})"
    return ls + op + rs


def atoms(f: Formula) -> set[str]:
    if isinstance(f, Atom):
        return {f.name}
    if isinstance(f, Not):
        return atoms(f.arg)
    return atoms(f.left) | atoms(f.right)


def subformulas(f: Formula) -> set:
    out = {f}
    if isinstance(f, Not):
        out |= subformulas(f.arg)
    elif not isinstance(f, Atom):
        out |= subformulas(f.left) | subformulas(f.right)
    return out


def evaluate(f: Formula, assignment: dict) -> bool:
    if isinstance(f, Atom):
        return assignment[f.name]
    if isinstance(f, Not):
        return not evaluate(f.arg, assignment)
    if isinstance(f, And):
        return evaluate(f.left, assignment) and evaluate(f.right, assignment)
    if isinstance(f, Or):
        return evaluate(f.left, assignment) or evaluate(f.right, assignment)
    return (not evaluate(f.left, assignment)) or evaluate(f.right, assignment)


# --- premise sets -----------------------------------------------------------


class PremiseSet(tuple):
    """Ordered premises with structural duplicates removed (first one kept)."""

    def __new__(cls, formulas: Iterable[Formula] = ()):
        seen, out = set(), []
        for f in formulas:
            if f not in seen:
                seen.add(f)
                out.append(f)
        return super().__new__(cls, out)

    def __repr__(self) -> str:
        return "PremiseSet({" + ", ".join(format_formula(f) for f in self) + "})"


def premises(*texts: str) -> PremiseSet:
    return PremiseSet(parse_formula(t) for t in texts)


def read_premise_file(path) -> PremiseSet:
    """One formula per line; ``#`` starts a comment."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(parse_formula(line))
        except ParseError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}", exc.offset, exc.expected) from None
    return PremiseSet(out)


# --- oracle -----------------------------------------------------------------


def _models(formulas: Sequence[Formula], names: Sequence[str]):
    for values in itertools.product((False, True), repeat=len(names)):
        a = dict(zip(names, values))
        if all(evaluate(f, a) for f in formulas):
            yield a


def _atom_names(formulas: Iterable[Formula]) -> list[str]:
    names = sorted(set().union(*(atoms(f) for f in formulas)) if formulas else set())
    if len(names) > MAX_ATOMS:
        raise TooManyAtoms(f"{len(names)} atoms exceed the truth-table bound of {MAX_ATOMS}")
    return names


def entails_bruteforce(premise_set: Sequence[Formula], phi: Formula) -> bool:
    names = _atom_names(list(premise_set) + [phi])
    return all(evaluate(phi, a) for a in _models(list(premise_set), names))


def satisfiable(formulas: Sequence[Formula]) -> bool:
    formulas = list(formulas)
    names = _atom_names(formulas)
    return next(_models(formulas, names), None) is not None


def tautology(phi: Formula) -> bool:
    return entails_bruteforce((), phi)


# --- deduction --------------------------------------------------------------


@dataclass(frozen=True)
class TheoremRecord:
    formula: Formula
    support: frozenset
    depth: int


@dataclass(frozen=True)
class Derivation:
    """A deduced theorem set; carries the premises its supports index into."""

    theorems: tuple
    premises: PremiseSet
    exhausted: bool = False

    @property
    def formulas(self) -> frozenset:
        return frozenset(t.formula for t in self.theorems)

    def record(self, f: Formula) -> Optional[TheoremRecord]:
        for t in self.theorems:
            if t.formula == f:
                return t
        return None

    def __contains__(self, f) -> bool:
        return f in self.formulas


def _better(new: TheoremRecord, old: Optional[TheoremRecord]) -> bool:
    if old is None:
        return True
    return (new.depth, len(new.support)) < (old.depth, len(old.support))


def deduce(premise_set: Sequence[Formula], depth_bound: int) -> Derivation:
    """Bounded forward chaining.

    Rules: modus ponens, conjunction elimination, and conjunction/disjunction
    introduction restricted to compounds that occur as subformulas of a
    premise. An introduced compound's support includes the first premise that
    contains it, so the support alone reproduces the derivation.
    """
    if depth_bound < 1:
        raise ValueError("depth_bound must be >= 1")
    prem = PremiseSet(premise_set)
    known: dict = {f: TheoremRecord(f, frozenset({i}), 0) for i, f in enumerate(prem)}

    license_of: dict = {}
    for i, f in enumerate(prem):
        for s in sorted(subformulas(f), key=format_formula):
            if isinstance(s, (And, Or)) and s not in license_of:
                license_of[s] = i
    intro = sorted(license_of, key=format_formula)

    exhausted = False
    for depth in range(1, depth_bound + 2):
        found: dict = {}

        def offer(f, parents, extra=()):
            if f in known:
                return
            sup = frozenset().union(*(known[q].support for q in parents), extra)
            rec = TheoremRecord(f, sup, depth)
            if _better(rec, found.get(f)):
                found[f] = rec

        current = sorted(known, key=format_formula)
        for f in current:
            if isinstance(f, Implies) and f.left in known:
                offer(f.right, (f, f.left))
            if isinstance(f, And):
                offer(f.left, (f,))
                offer(f.right, (f,))
        for c in intro:
            lic = (license_of[c],)
            if isinstance(c, And) and c.left in known and c.right in known:
                offer(c, (c.left, c.right), lic)
            elif isinstance(c, Or):
                for side in (c.left, c.right):
                    if side in known:
                        offer(c, (side,), lic)
        if not found:
            break
        if depth > depth_bound:
            exhausted = True
            break
        known.update(found)

    theorems = tuple(sorted(known.values(), key=lambda t: (t.depth, format_formula(t.formula))))
    return Derivation(theorems, prem, exhausted)


def reconstruct_premises(theorems: Iterable[TheoremRecord], original: Sequence[Formula]) -> PremiseSet:
    idx: set[int] = set()
    for t in theorems:
        idx |= t.support
    bad = [i for i in idx if not 0 <= i < len(original)]
    if bad:
        raise IndexOutOfRange(f"support indices {sorted(bad)} outside premise set of size {len(original)}")
    return PremiseSet(original[i] for i in sorted(idx))


# --- spaces and system ------------------------------------------------------


def random_formula(gen, names: Sequence[str], depth: int) -> Formula:
    if depth <= 0 or gen.random() < 0.3:
        return Atom(names[gen.integers(len(names))])
    r = gen.random()
    if r < 0.15:
        return Not(random_formula(gen, names, depth - 1))
    if r < 0.55:
        return Implies(random_formula(gen, names, depth - 1), random_formula(gen, names, depth - 1))
    if r < 0.8:
        return And(random_formula(gen, names, depth - 1), random_formula(gen, names, depth - 1))
    return Or(random_formula(gen, names, depth - 1), random_formula(gen, names, depth - 1))


def random_premise_set(gen, n_atoms: int = 3, max_premises: int = 5, max_depth: int = 2) -> PremiseSet:
    names = [chr(ord("A") + i) for i in range(n_atoms)]
    k = int(gen.integers(1, max_premises + 1))
    return PremiseSet(random_formula(gen, names, max_depth) for _ in range(k))


class PremiseSpace(PhenomenonSpace):
    """Premise sets under symmetric-difference distance.

    With ``fixed`` the space is that finite list; otherwise it samples random
    sets over ``n_atoms`` atoms.
    """

    id = "premise-sets"

    def __init__(self, n_atoms: int = 3, max_premises: int = 5, max_depth: int = 2,
                 consistent_only: bool = False, fixed: Optional[Sequence[PremiseSet]] = None):
        if n_atoms > MAX_ATOMS:
            raise TooManyAtoms(f"n_atoms={n_atoms}")
        self.n_atoms = n_atoms
        self.max_premises = max_premises
        self.max_depth = max_depth
        self.consistent_only = consistent_only
        self.fixed = None if fixed is None else [PremiseSet(s) for s in fixed]

    def admissible(self, p) -> bool:
        if not isinstance(p, tuple):
            return False
        try:
            _atom_names(p)
        except TooManyAtoms:
            return False
        return True

    def elements(self):
        return None if self.fixed is None else list(self.fixed)

    def sample(self, seed: int, n: int) -> list:
        if self.fixed is not None:
            return [self.fixed[i % len(self.fixed)] for i in range(n)]
        gen = rng(seed)
        out = []
        while len(out) < n:
            s = random_premise_set(gen, self.n_atoms, self.max_premises, self.max_depth)
            if self.consistent_only and not satisfiable(s):
                continue
            out.append(s)
        return out

    def distance(self, p1, p2) -> float:
        return float(len(set(p1) ^ set(p2)))

    def probe(self, p, radius: float, seed: int, k: int) -> list:
        # Neighbours at distance 1: drop one premise or add a random one.
        if radius < 1:
            return []
        gen = rng(seed)
        names = sorted(_atom_names(p)) or ["A"]
        out = []
        for j in range(k):
            if p and j % 2 == 0:
                drop = int(gen.integers(len(p)))
                out.append(PremiseSet(f for i, f in enumerate(p) if i != drop))
            else:
                out.append(PremiseSet(list(p) + [random_formula(gen, names, self.max_depth)]))
        return out

    def to_json(self, p):
        return [format_formula(f) for f in p]


class DerivationSpace(ExplanationSpace):
    """Derivations compared by the symmetric difference of theorem formulas."""

    id = "derivations"

    def distance(self, e1, e2) -> float:
        return float(len(e1.formulas ^ e2.formulas))

    def is_trivial(self, e) -> bool:
        return e is None or not e.theorems or all(tautology(t.formula) for t in e.theorems)

    def magnitude(self, e) -> float:
        return float(len(e.theorems))

    def to_json(self, e):
        return {
            "theorems": [
                {"formula": format_formula(t.formula), "support": sorted(t.support), "depth": t.depth}
                for t in e.theorems
            ],
            "exhausted": e.exhausted,
        }


def consistency_principle(severity: Severity = Severity.HARD) -> Principle:
    def check(e, _p):
        return Verdict.SATISFIED if satisfiable(list(e.formulas)) else Verdict.VIOLATED

    return Principle("consistency", check, Scope.EXPLANATION, severity, 1.0 if severity is Severity.SOFT else 0.0)


def entailment_principle() -> Principle:
    """Every emitted theorem must be entailed by the premises (oracle check)."""

    def check(e, p):
        for t in e.theorems:
            if not entails_bruteforce(p, t.formula):
                return Verdict.VIOLATED
        return Verdict.SATISFIED

    return Principle("entailment", check, Scope.PAIR, Severity.HARD)


def default_principles() -> PrincipleSystem:
    return PrincipleSystem((consistency_principle(), entailment_principle()))


def target_coverage(targets: Sequence[Formula]):
    """Coverage oracle: every oracle-entailed target must appear in the derivation."""

    def coverage(p, e) -> Optional[str]:
        missing = [format_formula(t) for t in targets if entails_bruteforce(p, t) and t not in e]
        if missing:
            return "entailed but not derived: " + ", ".join(missing)
        return None

    return coverage


def logic_system(
    depth_bound: int = 6,
    space: Optional[PremiseSpace] = None,
    principles: Optional[PrincipleSystem] = None,
    targets: Sequence[Union[str, Formula]] = (),
) -> ReasoningSystem:
    space = space or PremiseSpace()
    goals = [parse_formula(t) if isinstance(t, str) else t for t in targets]

    def f(p):
        return deduce(p, depth_bound)

    def g(e):
        if not isinstance(e, Derivation):
            return UNDEFINED
        return reconstruct_premises(e.theorems, e.premises)

    return ReasoningSystem(
        phenomena=space,
        explanations=DerivationSpace(),
        infer=f,
        generate=g,
        principles=principles if principles is not None else default_principles(),
        name="logic",
        coverage=target_coverage(goals) if goals else None,
    )
