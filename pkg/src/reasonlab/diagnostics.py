"""Sampling-based evaluation criteria and failure classification.

Every check draws its phenomena with :func:`draw_samples`, so two checks run
with the same seed and ``n`` see the same inputs in the same order. Finite
phenomenon spaces with fewer than ``EXHAUSTIVE_LIMIT`` elements are checked
exhaustively instead.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .core import (
    DEFAULT_SEED,
    UNDEFINED,
    ConfigError,
    InadmissibleInput,
    ReasoningSystem,
    ToleranceConfig,
    from_json_number,
    infer,
    is_undefined,
    json_number,
    mean_or_undefined,
    roundtrip_discrepancy,
    satisfies,
)

EXHAUSTIVE_LIMIT = 10_000


class Criterion(enum.Enum):
    COHERENCE = "Coherence"
    SOUNDNESS = "Soundness"
    COMPLETENESS = "Completeness"
    FIXED_POINT = "FixedPoint"


class FailureKind(enum.Enum):
    CONTRADICTION = "Contradiction"
    INCOMPLETENESS = "Incompleteness"
    NON_CONVERGENCE = "NonConvergence"
    OVERFITTING = "Overfitting"
    UNDERFITTING = "Underfitting"
    DEADLOCK = "Deadlock"
    HEALTHY = "Healthy"


def _num(v):
    return None if is_undefined(v) else json_number(v)


def _unnum(v):
    return UNDEFINED if v is None else from_json_number(v)


@dataclass(frozen=True)
class CriterionReport:
    criterion: Criterion
    passed: bool
    n_samples: int
    worst_case: Any  # float or Undefined
    failing_samples: tuple = ()  # (sample index, phenomenon as JSON, reason)
    details: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        if self.passed != (not self.failing_samples):
            raise ValueError("passed must equal 'no failing samples'")

    @property
    def failing_indices(self) -> set[int]:
        return {i for i, _, _ in self.failing_samples}

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion.value,
            "pass": self.passed,
            "n_samples": self.n_samples,
            "worst_case": _num(self.worst_case),
            "failing_samples": [
                {"index": i, "phenomenon": p, "reason": r} for i, p, r in self.failing_samples
            ],
            "details": {k: _num(v) for k, v in self.details.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CriterionReport":
        return cls(
            Criterion(d["criterion"]),
            d["pass"],
            d["n_samples"],
            _unnum(d["worst_case"]),
            tuple((s["index"], s["phenomenon"], s["reason"]) for s in d["failing_samples"]),
            {k: _unnum(v) for k, v in d["details"].items()},
        )


@dataclass(frozen=True)
class FailureLabel:
    kind: FailureKind
    message: str = ""
    witness: Optional[float] = None

    def __post_init__(self):
        if self.kind is FailureKind.HEALTHY and self.witness is not None:
            raise ValueError("Healthy labels carry no witness")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "message": self.message, "witness": self.witness}

    @classmethod
    def from_dict(cls, d: dict) -> "FailureLabel":
        return cls(FailureKind(d["kind"]), d["message"], d["witness"])


HEALTHY = FailureLabel(FailureKind.HEALTHY)


@dataclass(frozen=True)
class SampleLabels:
    index: int
    phenomenon: Any
    labels: tuple

    @property
    def kinds(self) -> set[FailureKind]:
        return {lab.kind for lab in self.labels}

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "phenomenon": self.phenomenon,
            "labels": [lab.to_dict() for lab in self.labels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleLabels":
        return cls(d["index"], d["phenomenon"], tuple(FailureLabel.from_dict(x) for x in d["labels"]))


@dataclass(frozen=True)
class Scorecard:
    coherent: bool
    sound: bool
    complete: bool
    per_sample: tuple = ()
    reports: tuple = ()  # the three CriterionReports, in C/S/C order

    @property
    def combination(self) -> str:
        return "".join("T" if b else "F" for b in (self.coherent, self.sound, self.complete))

    def to_dict(self) -> dict:
        return {
            "coherent": self.coherent,
            "sound": self.sound,
            "complete": self.complete,
            "combination": self.combination,
            "reports": [r.to_dict() for r in self.reports],
            "per_sample": [s.to_dict() for s in self.per_sample],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scorecard":
        return cls(
            d["coherent"],
            d["sound"],
            d["complete"],
            tuple(SampleLabels.from_dict(s) for s in d["per_sample"]),
            tuple(CriterionReport.from_dict(r) for r in d["reports"]),
        )


@dataclass(frozen=True)
class FailureConfig:
    deadlock_constancy_fraction: float = 0.9
    deadlock_probe_radius: float = 0.5
    deadlock_probes: int = 8
    overfit_gap_threshold: float = 0.5
    underfit_floor: float = 0.5
    holdout_samples: int = 50
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)

    def __post_init__(self):
        if not 0 < self.deadlock_constancy_fraction <= 1:
            raise ConfigError("deadlock_constancy_fraction must lie in (0, 1]")
        if not self.deadlock_probe_radius > 0:
            raise ConfigError("deadlock_probe_radius must be positive")
        if not self.overfit_gap_threshold > 0:
            raise ConfigError("overfit_gap_threshold must be positive")
        if not self.underfit_floor > 0:
            raise ConfigError("underfit_floor must be positive")
        if self.deadlock_probes < 1 or self.holdout_samples < 1:
            raise ConfigError("probe and holdout counts must be positive")

    @classmethod
    def from_dict(cls, d: dict, tolerances: Optional[ToleranceConfig] = None) -> "FailureConfig":
        unknown = set(d) - (set(cls.__dataclass_fields__) - {"tolerances"})
        if unknown:
            raise ConfigError(f"unknown failure-config keys: {sorted(unknown)}")
        return cls(**d, tolerances=tolerances or ToleranceConfig())


def draw_samples(system: ReasoningSystem, seed: int, n: int) -> list:
    if n < 1:
        raise ConfigError("n must be >= 1")
    elems = system.phenomena.elements()
    if elems is not None and len(elems) < EXHAUSTIVE_LIMIT:
        return list(elems)
    return system.phenomena.sample(seed, n)


def _pmap(system: ReasoningSystem, fn: Callable, items: list, workers: int) -> list:
    # Results keep input order regardless of scheduling.
    if workers > 1 and not system.stateful:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _report(criterion, samples, fails, worst, details=None) -> CriterionReport:
    return CriterionReport(
        criterion, not fails, len(samples), worst, tuple(fails), dict(details or {})
    )


def check_coherence(
    system: ReasoningSystem,
    seed: int = DEFAULT_SEED,
    n: int = 100,
    tol: ToleranceConfig = ToleranceConfig(),
    workers: int = 1,
) -> CriterionReport:
    samples = draw_samples(system, seed, n)
    space = system.phenomena
    records = _pmap(system, lambda p: roundtrip_discrepancy(system, p), samples, workers)
    fails, deltas, inadmissible = [], [], 0
    for i, (p, rec) in enumerate(zip(samples, records)):
        if is_undefined(rec.delta):
            fails.append((i, space.to_json(p), f"round trip undefined: {rec.delta.reason or 'no value'}"))
            continue
        deltas.append(rec.delta)
        if not space.admissible(rec.roundtrip):
            inadmissible += 1
        if rec.delta > tol.coherence_tol:
            fails.append((i, space.to_json(p), f"delta {rec.delta!r} > {tol.coherence_tol!r}"))
    worst = max(deltas) if deltas else UNDEFINED
    details = {"mean_delta": mean_or_undefined(deltas), "inadmissible_roundtrips": inadmissible}
    return _report(Criterion.COHERENCE, samples, fails, worst, details)


def _principle_pass(system, samples, workers, count_undefined: bool):
    space = system.phenomena

    def one(p):
        e = infer(system, p)
        if is_undefined(e):
            return e, None
        return e, satisfies(system.principles, e, p)

    results = _pmap(system, one, samples, workers)
    fails, worst = [], None
    undefined = 0
    for i, (p, (e, rep)) in enumerate(zip(samples, results)):
        if rep is None:
            undefined += 1
            if count_undefined:
                fails.append((i, space.to_json(p), f"undefined f(p): {e.reason or 'no value'}"))
            continue
        worst = max(worst or 0, len(rep.hard_violations))
        if not rep.overall_sound:
            fails.append((i, space.to_json(p), "Hard violation: " + ", ".join(rep.hard_violations)))
        elif count_undefined and system.coverage is not None:
            gap = system.coverage(p, e)
            if gap:
                fails.append((i, space.to_json(p), f"coverage gap: {gap}"))
    return fails, (UNDEFINED if worst is None else float(worst)), undefined


def check_soundness(
    system: ReasoningSystem, seed: int = DEFAULT_SEED, n: int = 100, workers: int = 1
) -> CriterionReport:
    samples = draw_samples(system, seed, n)
    fails, worst, undefined = _principle_pass(system, samples, workers, count_undefined=False)
    return _report(Criterion.SOUNDNESS, samples, fails, worst, {"skipped_undefined": undefined})


def check_completeness(
    system: ReasoningSystem, seed: int = DEFAULT_SEED, n: int = 100, workers: int = 1
) -> CriterionReport:
    samples = draw_samples(system, seed, n)
    fails, worst, undefined = _principle_pass(system, samples, workers, count_undefined=True)
    return _report(Criterion.COMPLETENESS, samples, fails, worst, {"undefined": undefined})


def check_fixed_point(
    system: ReasoningSystem,
    seed: int = DEFAULT_SEED,
    n: int = 100,
    tol: ToleranceConfig = ToleranceConfig(),
    workers: int = 1,
) -> CriterionReport:
    samples = draw_samples(system, seed, n)
    P, E = system.phenomena, system.explanations

    def one(p):
        e = infer(system, p)
        if is_undefined(e):
            return None, None, "undefined f(p)"
        q = system.generate(e)
        if is_undefined(q):
            return None, None, "undefined g(f(p))"
        rp = float(P.distance(p, q))
        if not P.admissible(q):
            return rp, None, "g(f(p)) inadmissible"
        e2 = system.infer(q)
        if is_undefined(e2):
            return rp, None, "undefined f(g(e))"
        return rp, float(E.distance(e, e2)), None

    results = _pmap(system, one, samples, workers)
    fails, worst_p, worst_e = [], None, None
    for i, (p, (rp, re, why)) in enumerate(zip(samples, results)):
        if rp is not None:
            worst_p = rp if worst_p is None else max(worst_p, rp)
        if re is not None:
            worst_e = re if worst_e is None else max(worst_e, re)
        reasons = [why] if why else []
        if rp is not None and rp > tol.fixedpoint_tol:
            reasons.append(f"p-residual {rp!r} > {tol.fixedpoint_tol!r}")
        if re is not None and re > tol.fixedpoint_tol:
            reasons.append(f"e-residual {re!r} > {tol.fixedpoint_tol!r}")
        if reasons:
            fails.append((i, P.to_json(p), "; ".join(reasons)))
    defined = [w for w in (worst_p, worst_e) if w is not None]
    details = {
        "worst_p_residual": UNDEFINED if worst_p is None else worst_p,
        "worst_e_residual": UNDEFINED if worst_e is None else worst_e,
    }
    return _report(Criterion.FIXED_POINT, samples, fails, max(defined) if defined else UNDEFINED, details)


def _mean_delta(system: ReasoningSystem, points: list):
    return mean_or_undefined([roundtrip_discrepancy(system, p).delta for p in points])


def fit_gap(system: ReasoningSystem, seed: int, cfg: FailureConfig) -> Optional[dict]:
    """Calibration vs holdout mean delta for systems with an adapter hook."""
    adapter = system.adapter
    if adapter is None:
        return None
    calib = _mean_delta(system, adapter.calibration())
    hold = _mean_delta(system, adapter.holdout(seed, cfg.holdout_samples))
    return {"calibration_delta": calib, "holdout_delta": hold}


def _deadlocked(system, p, e, seed, cfg) -> Optional[FailureLabel]:
    E = system.explanations
    if E.is_trivial(e):
        return FailureLabel(FailureKind.DEADLOCK, "trivial explanation", None)
    probes = system.phenomena.probe(p, cfg.deadlock_probe_radius, seed, cfg.deadlock_probes)
    probes = [q for q in probes if system.phenomena.admissible(q)]
    if not probes:
        return None
    constant = 0
    for q in probes:
        eq = system.infer(q)
        if not is_undefined(eq) and E.distance(e, eq) < cfg.tolerances.convergence_tol:
            constant += 1
    frac = constant / len(probes)
    if frac >= cfg.deadlock_constancy_fraction:
        return FailureLabel(FailureKind.DEADLOCK, f"f constant on {constant}/{len(probes)} probes", frac)
    return None


def classify_failures(
    system: ReasoningSystem,
    seed: int = DEFAULT_SEED,
    n: int = 100,
    cfg: FailureConfig = FailureConfig(),
) -> list[SampleLabels]:
    from .dynamics import Cycle, Diverged, iterate_refinement

    if not isinstance(cfg, FailureConfig):
        raise ConfigError("cfg must be a FailureConfig")
    samples = draw_samples(system, seed, n)
    space = system.phenomena
    fit_labels = []
    gap = fit_gap(system, seed, cfg)
    if gap is not None and not is_undefined(gap["calibration_delta"]):
        calib, hold = gap["calibration_delta"], gap["holdout_delta"]
        if not is_undefined(hold) and hold - calib > cfg.overfit_gap_threshold:
            fit_labels.append(FailureLabel(
                FailureKind.OVERFITTING, f"holdout delta {hold:.6g} vs calibration {calib:.6g}", hold - calib))
        if calib > cfg.underfit_floor:
            fit_labels.append(FailureLabel(
                FailureKind.UNDERFITTING, f"calibration delta {calib:.6g} above floor", calib))

    out = []
    for i, p in enumerate(samples):
        labels = []
        e = infer(system, p)
        if is_undefined(e):
            labels.append(FailureLabel(FailureKind.INCOMPLETENESS, f"undefined f(p): {e.reason}", None))
            if e.diverged:
                labels.append(FailureLabel(FailureKind.NON_CONVERGENCE, e.reason, None))
        else:
            rep = satisfies(system.principles, e, p)
            if not rep.overall_sound:
                labels.append(FailureLabel(
                    FailureKind.CONTRADICTION, "violates " + ", ".join(rep.hard_violations),
                    float(len(rep.hard_violations))))
            elif system.coverage is not None:
                why = system.coverage(p, e)
                if why:
                    labels.append(FailureLabel(FailureKind.INCOMPLETENESS, why, None))
            traj = iterate_refinement(system, e, cfg.tolerances)
            if isinstance(traj.outcome, (Cycle, Diverged)):
                labels.append(FailureLabel(
                    FailureKind.NON_CONVERGENCE, f"refinement {traj.outcome.describe()}",
                    float(len(traj.deltas))))
            dl = _deadlocked(system, p, e, seed + i + 1, cfg)
            if dl is not None:
                labels.append(dl)
        labels.extend(fit_labels)
        out.append(SampleLabels(i, space.to_json(p), tuple(labels) or (HEALTHY,)))
    return out


def joint_evaluation(
    system: ReasoningSystem,
    seed: int = DEFAULT_SEED,
    n: int = 100,
    tol: ToleranceConfig = ToleranceConfig(),
    cfg: Optional[FailureConfig] = None,
    workers: int = 1,
) -> Scorecard:
    coh = check_coherence(system, seed, n, tol, workers)
    snd = check_soundness(system, seed, n, workers)
    cmp_ = check_completeness(system, seed, n, workers)
    if cfg is None:
        cfg = FailureConfig(tolerances=tol)
    labels = classify_failures(system, seed, n, cfg)
    return Scorecard(coh.passed, snd.passed, cmp_.passed, tuple(labels), (coh, snd, cmp_))


def label_counts(per_sample) -> dict[str, int]:
    counts: dict[str, int] = {}
    for s in per_sample:
        for k in sorted(s.kinds, key=lambda k: k.value):
            counts[k.value] = counts.get(k.value, 0) + 1
    return counts

