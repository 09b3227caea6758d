"""Scenario files: build a system from JSON, run checks and dynamics, emit a report.

Scenario schema (version 1)::

    {
      "schema": 1,
      "name": "...",
      "system": {"kind": "identity|offset|logic|opt|neural", ...parameters},
      "seed": 12648430,
      "n_samples": 50,
      "tolerances": {"coherence_tol": 1e-6, ...},
      "failure_config": {"deadlock_constancy_fraction": 0.9, ...},
      "checks": ["coherence", "soundness", "completeness", "fixedpoint", "failures", "joint"],
      "dynamics": {"iterate": {...}, "adapt": {...}, "drift": {...}, "epochs": 3,
                   "recheck": ["soundness"]},
      "demo": {"failure_mode": "...", "topic": "...", "expect_labels": ["..."]}
    }

Relative file paths inside ``system`` resolve against the scenario's directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import logic, neural, opt, toys
from .core import (
    ConfigError,
    Principle,
    ReasonlabError,
    ReasoningSystem,
    ToleranceConfig,
    infer,
    is_undefined,
)
from .diagnostics import (
    CriterionReport,
    FailureConfig,
    FailureKind,
    SampleLabels,
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
from .dynamics import (
    Action,
    AdaptationPolicy,
    DriftHistory,
    DriftPolicy,
    NonFiniteUpdate,
    Target,
    adapt,
    classify_response_mode,
    evolve_principles,
    iterate_refinement,
    measure_epoch,
)

SCHEMA = 1
CHECKS = ("coherence", "soundness", "completeness", "fixedpoint", "failures", "joint")
KINDS = ("identity", "offset", "logic", "opt", "neural")


class InstantiationError(ReasonlabError):
    pass


@dataclass
class Scenario:
    name: str
    system: dict
    seed: int
    n_samples: int
    tolerances: ToleranceConfig
    failures: FailureConfig
    checks: list
    dynamics: dict = field(default_factory=dict)
    demo: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def parse_scenario(data: dict, base_dir: Path = Path("."), seed_override: Optional[int] = None) -> Scenario:
    _require(isinstance(data, dict), "scenario must be a JSON object")
    _require(data.get("schema") == SCHEMA, f"scenario schema must be {SCHEMA}")
    system = data.get("system")
    _require(isinstance(system, dict) and system.get("kind") in KINDS,
             f"system.kind must be one of {KINDS}")
    checks = list(data.get("checks", []))
    _require(bool(checks), "checks must be non-empty")
    bad = [c for c in checks if c not in CHECKS]
    _require(not bad, f"unknown checks {bad}; allowed {CHECKS}")
    seed = data.get("seed", 0xC0FFEE)
    if seed_override is not None:
        seed = seed_override
    _require(isinstance(seed, int) and 0 <= seed < 2 ** 64, "seed must be a 64-bit non-negative integer")
    n = data.get("n_samples", 50)
    _require(isinstance(n, int) and n >= 1, "n_samples must be a positive integer")
    try:
        tol = ToleranceConfig.from_dict(data.get("tolerances", {}))
        fcfg = FailureConfig.from_dict(data.get("failure_config", {}), tol)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    dyn = data.get("dynamics", {}) or {}
    _require(isinstance(dyn, dict), "dynamics must be an object")
    unknown = set(dyn) - {"iterate", "adapt", "drift", "epochs", "recheck"}
    _require(not unknown, f"unknown dynamics keys {sorted(unknown)}")
    for c in dyn.get("recheck", []):
        _require(c in CHECKS, f"unknown recheck {c!r}")
    scen = Scenario(str(data.get("name", "scenario")), system, seed, n, tol, fcfg, checks, dyn,
                    data.get("demo", {}), Path(base_dir))
    _check_files(scen)
    return scen


def _check_files(scen: Scenario) -> None:
    for key in ("premises_file", "problem_file", "weights_file"):
        if key in scen.system:
            path = scen.base_dir / scen.system[key]
            _require(path.is_file(), f"referenced file does not exist: {path}")


def load_scenario(path, seed_override: Optional[int] = None) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return parse_scenario(data, path.parent, seed_override)


# --- instantiation ----------------------------------------------------------


def _problem_from_dict(d: dict) -> opt.QpProblem:
    lo = hi = A = b = None
    if d.get("box") is not None:
        box = np.array([[float(v) for v in row] for row in d["box"]])
        lo, hi = box[:, 0], box[:, 1]
    if d.get("halfspaces"):
        hs = np.array(d["halfspaces"], dtype=float)
        A, b = hs[:, :-1], hs[:, -1]
    return opt.QpProblem(np.array(d["Q"], dtype=float), np.array(d["c"], dtype=float), lo, hi, A, b)


def _build_logic(s: dict, base: Path):
    if "premises_file" in s:
        fixed = [logic.read_premise_file(base / s["premises_file"])]
    elif "premise_sets" in s:
        fixed = [logic.premises(*ps) for ps in s["premise_sets"]]
    elif "premises" in s:
        fixed = [logic.premises(*s["premises"])]
    else:
        fixed = None
    r = s.get("random", {})
    space = logic.PremiseSpace(r.get("n_atoms", 3), r.get("max_premises", 5), r.get("max_depth", 2),
                               r.get("consistent_only", False), fixed)
    system = logic.logic_system(s.get("depth_bound", 6), space, targets=s.get("targets", ()))
    catalogue = {"consistency": logic.consistency_principle(), "entailment": logic.entailment_principle()}
    return system, catalogue


def _build_opt(s: dict, base: Path):
    if "problem_file" in s:
        fixed = [opt.read_problem_file(base / s["problem_file"])]
    elif "problems" in s:
        fixed = [_problem_from_dict(d) for d in s["problems"]]
    else:
        fixed = None
    r = s.get("random", {})
    space = opt.ProblemSpace(r.get("n_max", 8), r.get("kind", "unconstrained"), fixed)
    system = opt.opt_system(space, s.get("step_scale", 1.0), s.get("tol", 1e-12),
                            s.get("max_iter", 20_000), s.get("divergence_bound", 1e6),
                            s.get("kkt_tol", opt.KKT_TOL))
    return system, {pr.id: pr for pr in opt.kkt_principles()}


def _build_neural(s: dict, base: Path):
    n, k = s.get("n", 4), s.get("k", 2)
    bound = s.get("norm_bound")
    bound = math.inf if bound is None else float(bound)
    if "weights_file" in s:
        model = neural.read_weights(base / s["weights_file"])
        n, k = model.n, model.k
    else:
        init = s.get("init", "random")
        model = neural.init_model(n, k, s.get("model_seed", 0), s.get("init_scale", 0.1),
                                  s.get("step", 0.05), bound)
        if init == "zero_encoder":
            model = neural.LinearAutoencoder(np.zeros((k, n)), model.W_dec, model.step, bound)
        elif init != "random":
            raise InstantiationError(f"unknown neural init {init!r}")
    data = neural.DataDistribution(n, s.get("rank", k), s.get("noise", 0.0), s.get("data_seed", 0),
                                   s.get("n_calibration", 50))
    system = neural.neural_system(model, data, s.get("weight_decay", True))
    rounds = s.get("pretrain_rounds", 0)
    if rounds:
        system.adapter.train(rounds, s.get("pretrain_regularization", 0.0))
    holder = system.adapter.holder
    catalogue = {"norm_bound": neural.norm_principle(holder),
                 "weight_decay": neural.weight_decay_principle(holder)}
    return system, catalogue


def build_system(params: dict, base_dir: Path = Path(".")) -> tuple[ReasoningSystem, dict]:
    """Instantiate a system; returns it with a catalogue of principles usable for Tighten."""
    kind = params["kind"]
    try:
        if kind == "identity":
            return toys.identity_system(), {}
        if kind == "offset":
            return toys.offset_system(float(params.get("offset", 1.0))), {}
        if kind == "logic":
            return _build_logic(params, base_dir)
        if kind == "opt":
            return _build_opt(params, base_dir)
        if kind == "neural":
            return _build_neural(params, base_dir)
    except (ReasonlabError, ValueError, KeyError, TypeError, IndexError) as exc:
        if isinstance(exc, InstantiationError):
            raise
        raise InstantiationError(f"cannot build {kind} system: {exc}") from exc
    raise InstantiationError(f"unknown system kind {kind!r}")


# --- report -----------------------------------------------------------------


def _step_to_dict(name: str, result) -> dict:
    if isinstance(result, CriterionReport):
        body = result.to_dict()
    elif isinstance(result, Scorecard):
        body = result.to_dict()
    else:
        body = {"samples": [s.to_dict() for s in result], "label_counts": label_counts(result)}
    return {"check": name, "pass": step_passed(result), "result": body}


def _step_from_dict(d: dict):
    name, body = d["check"], d["result"]
    if name == "joint":
        return name, Scorecard.from_dict(body)
    if name == "failures":
        return name, [SampleLabels.from_dict(s) for s in body["samples"]]
    return name, CriterionReport.from_dict(body)


def step_passed(result) -> bool:
    if isinstance(result, CriterionReport):
        return result.passed
    if isinstance(result, Scorecard):
        return result.coherent and result.sound and result.complete
    return all(s.kinds == {FailureKind.HEALTHY} for s in result)


@dataclass
class DiagnosticReport:
    scenario: str
    system: str
    seed: int
    n_samples: int
    steps: list  # [(check name, result)]
    dynamics: dict = field(default_factory=dict)
    rechecks: list = field(default_factory=list)
    timestamp: Optional[str] = None
    schema: int = SCHEMA

    @property
    def passed(self) -> bool:
        return all(step_passed(r) for _, r in self.steps)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def labels(self) -> set[str]:
        """Every failure label appearing in any step, rechecks included."""
        out = set()
        for _, r in self.steps + self.rechecks:
            samples = r.per_sample if isinstance(r, Scorecard) else r if isinstance(r, list) else ()
            for s in samples:
                out |= {k.value for k in s.kinds}
        return out

    def to_dict(self) -> dict:
        d = {
            "schema": self.schema,
            "scenario": self.scenario,
            "system": self.system,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "passed": self.passed,
            "exit_code": self.exit_code,
            "steps": [_step_to_dict(n, r) for n, r in self.steps],
            "dynamics": self.dynamics,
            "rechecks": [_step_to_dict(n, r) for n, r in self.rechecks],
        }
        if self.timestamp is not None:
            d["timestamp"] = self.timestamp
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticReport":
        if d.get("schema") != SCHEMA:
            raise ConfigError(f"report schema must be {SCHEMA}")
        return cls(
            d["scenario"], d["system"], d["seed"], d["n_samples"],
            [_step_from_dict(s) for s in d["steps"]], d["dynamics"],
            [_step_from_dict(s) for s in d["rechecks"]], d.get("timestamp"), d["schema"],
        )

    @classmethod
    def from_json(cls, text: str) -> "DiagnosticReport":
        return cls.from_dict(json.loads(text))


def _fmt(v) -> str:
    if v is None or is_undefined(v):
        return "undefined"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render_text(report: DiagnosticReport) -> str:
    lines = [f"scenario {report.scenario} (system={report.system}, seed={report.seed}, n={report.n_samples})"]
    for title, steps in (("checks", report.steps), ("rechecks after dynamics", report.rechecks)):
        if not steps:
            continue
        lines.append(f"{title}:")
        for name, r in steps:
            mark = "PASS" if step_passed(r) else "FAIL"
            if isinstance(r, CriterionReport):
                lines.append(f"  {mark} {name:<12} worst={_fmt(r.worst_case)} "
                             f"failing={len(r.failing_samples)}/{r.n_samples}")
            elif isinstance(r, Scorecard):
                lines.append(f"  {mark} {name:<12} (coherent, sound, complete)={r.combination}")
            else:
                counts = ", ".join(f"{k}={v}" for k, v in sorted(label_counts(r).items()))
                lines.append(f"  {mark} {name:<12} {counts}")
    dyn = report.dynamics
    if "iterate" in dyn:
        o = dyn["iterate"]["outcome"]
        lines.append(f"iterate: {o['kind']} " + " ".join(f"{k}={v}" for k, v in o.items() if k != "kind"))
    if "adapt" in dyn:
        first, a = dyn["adapt_epochs"][0], dyn["adapt"]
        lines.append(f"adapt: mean delta {_fmt(first.get('before'))} -> {_fmt(a.get('after'))} "
                     f"over {len(dyn['adapt_epochs'])} epoch(s)"
                     + (f" ({a['error']})" if "error" in a else ""))
    if "drift" in dyn:
        vers = dyn["drift"]["history"]["versions"]
        lines.append(f"drift: {len(vers) - 1} trigger(s), principle version {vers[-1]['version']}")
    if "response_mode" in dyn:
        lines.append(f"response mode: {dyn['response_mode']}")
    lines.append(f"exit code {report.exit_code}")
    return "\n".join(lines) + "\n"


# --- execution --------------------------------------------------------------


def run_check(name: str, system: ReasoningSystem, scen: Scenario):
    seed, n, tol = scen.seed, scen.n_samples, scen.tolerances
    if name == "coherence":
        return check_coherence(system, seed, n, tol)
    if name == "soundness":
        return check_soundness(system, seed, n)
    if name == "completeness":
        return check_completeness(system, seed, n)
    if name == "fixedpoint":
        return check_fixed_point(system, seed, n, tol)
    if name == "failures":
        return classify_failures(system, seed, n, scen.failures)
    if name == "joint":
        return joint_evaluation(system, seed, n, tol, scen.failures)
    raise ConfigError(f"unknown check {name!r}")


def _adapt_policy(d: dict, system: ReasoningSystem, scen: Scenario) -> AdaptationPolicy:
    local = None
    if d.get("scope", "global").lower() == "local":
        idx = d.get("local_indices", [0])
        pool = draw_samples(system, scen.seed, max(idx) + 1)
        local = tuple(pool[i] for i in idx)
    return AdaptationPolicy(local, d.get("max_rounds", 50), Target(d.get("target", "ReduceDelta")),
                            d.get("regularization_weight", 0.0))


def _drift_policy(d: dict, catalogue: dict, scen: Scenario) -> DriftPolicy:
    tighten: Optional[Principle] = None
    if d.get("tighten_with") is not None:
        if d["tighten_with"] not in catalogue:
            raise ConfigError(f"unknown principle {d['tighten_with']!r} for Tighten")
        tighten = catalogue[d["tighten_with"]]
    floor = d.get("performance_floor")
    manual = d.get("manual")
    return DriftPolicy(
        d.get("contradiction_rate_threshold", 0.2),
        math.inf if floor is None else floor,
        Action(d.get("on_contradiction", "Relax")),
        Action(d.get("on_performance", "Tighten")),
        tighten,
        d.get("relax_penalty", 1.0),
        None if manual is None else Action(manual),
        scen.seed,
        d.get("n_samples", scen.n_samples),
    )


def run_dynamics(system: ReasoningSystem, catalogue: dict, scen: Scenario) -> tuple[ReasoningSystem, dict]:
    dyn, out = scen.dynamics, {}
    if "iterate" in dyn:
        it = dyn["iterate"] or {}
        if "start" in it:
            start = it["start"]
        else:
            start = infer(system, draw_samples(system, scen.seed, 1)[it.get("sample_index", 0)])
        traj = iterate_refinement(system, start, scen.tolerances)
        out["iterate"] = traj.to_dict(system.explanations)

    history = DriftHistory.start(system.principles)
    epochs = int(dyn.get("epochs", 1 if ("adapt" in dyn or "drift" in dyn) else 0))
    log = [measure_epoch(system, scen.seed, scen.n_samples)] if epochs else []
    adapt_runs = []
    for _ in range(epochs):
        non_finite = False
        if "adapt" in dyn:
            a = dyn["adapt"]
            policy = _adapt_policy(a, system, scen)
            try:
                system, summary = adapt(system, policy, scen.seed, a.get("n_calibration", 50))
                adapt_runs.append(summary.to_dict())
            except NonFiniteUpdate as exc:
                non_finite = True
                rec = exc.summary.to_dict() if exc.summary else {}
                rec["error"] = f"NonFiniteUpdate: {exc}"
                adapt_runs.append(rec)
        if "drift" in dyn:
            policy = _drift_policy(dyn["drift"], catalogue, scen)
            new_pi, history = evolve_principles(system, history, policy)
            system = system.with_principles(new_pi)
        log.append(measure_epoch(system, scen.seed, scen.n_samples, non_finite))
        if non_finite:
            break
    if adapt_runs:
        out["adapt"] = adapt_runs[-1]
        out["adapt_epochs"] = adapt_runs
    if "drift" in dyn:
        out["drift"] = {"history": history.to_dict()}
    if log:
        out["run_log"] = [ep.to_dict() for ep in log]
        out["response_mode"] = classify_response_mode(log, scen.tolerances.convergence_tol).value
    return system, out


def run(scen: Scenario, timestamp: bool = True) -> DiagnosticReport:
    system, catalogue = build_system(scen.system, scen.base_dir)
    steps = [(name, run_check(name, system, scen)) for name in scen.checks]
    dynamics, rechecks = {}, []
    if scen.dynamics:
        system, dynamics = run_dynamics(system, catalogue, scen)
        rechecks = [(name, run_check(name, system, scen)) for name in scen.dynamics.get("recheck", [])]
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds") if timestamp else None
    return DiagnosticReport(scen.name, scen.system["kind"], scen.seed, scen.n_samples,
                            steps, dynamics, rechecks, stamp)
