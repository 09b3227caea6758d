"""Linear autoencoder as a reasoning system, with hand-written gradients.

``infer`` encodes (z = W_enc x), ``generate`` decodes (x = W_dec z). The
adapter hook runs gradient steps on mean squared reconstruction error and
clips both weight matrices to Frobenius norm ``norm_bound`` afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
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
from .dynamics import NonFiniteUpdate
from .textio import FormatError, format_blocks, parse_blocks

MAX_DIM = 32


class DimensionMismatch(ReasonlabError):
    pass


@dataclass(frozen=True, eq=False)
class LinearAutoencoder:
    W_enc: np.ndarray  # k x n
    W_dec: np.ndarray  # n x k
    step: float = 0.05
    norm_bound: float = math.inf

    def __post_init__(self):
        E = np.atleast_2d(np.asarray(self.W_enc, dtype=float))
        D = np.atleast_2d(np.asarray(self.W_dec, dtype=float))
        k, n = E.shape
        if D.shape != (n, k):
            raise DimensionMismatch(f"W_enc is {E.shape} but W_dec is {D.shape}")
        if not 1 <= k <= n <= MAX_DIM:
            raise DimensionMismatch(f"need 1 <= k <= n <= {MAX_DIM}, got k={k}, n={n}")
        if not (np.all(np.isfinite(E)) and np.all(np.isfinite(D))):
            raise NonFiniteUpdate("autoencoder weights must be finite")
        if not self.step > 0 or not self.norm_bound > 0:
            raise ValueError("step and norm_bound must be positive")
        object.__setattr__(self, "W_enc", E)
        object.__setattr__(self, "W_dec", D)

    @property
    def n(self) -> int:
        return self.W_enc.shape[1]

    @property
    def k(self) -> int:
        return self.W_enc.shape[0]

    def same_weights(self, other: "LinearAutoencoder") -> bool:
        return np.array_equal(self.W_enc, other.W_enc) and np.array_equal(self.W_dec, other.W_dec)


def init_model(n: int, k: int, seed: int, scale: float = 0.1, step: float = 0.05,
               norm_bound: float = math.inf) -> LinearAutoencoder:
    gen = rng(seed)
    return LinearAutoencoder(gen.standard_normal((k, n)) * scale, gen.standard_normal((n, k)) * scale,
                             step, norm_bound)


def encode(model: LinearAutoencoder, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise DimensionMismatch(f"expected a {model.n}-vector, got shape {x.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        return model.W_enc @ x


def decode(model: LinearAutoencoder, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (model.k,):
        raise DimensionMismatch(f"expected a {model.k}-vector, got shape {z.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        return model.W_dec @ z


def _batch(batch) -> np.ndarray:
    X = np.atleast_2d(np.asarray(list(batch), dtype=float))
    if X.size == 0:
        raise ValueError("batch must be non-empty")
    return X


def loss(model: LinearAutoencoder, batch, regularization_weight: float = 0.0) -> float:
    X = _batch(batch)
    R = X @ model.W_enc.T @ model.W_dec.T - X
    val = float(np.mean(np.sum(R * R, axis=1)))
    if regularization_weight:
        val += regularization_weight * weight_penalty(model)
    return val


def weight_penalty(model: LinearAutoencoder) -> float:
    with np.errstate(over="ignore"):
        return float(np.sum(model.W_enc ** 2) + np.sum(model.W_dec ** 2))


def loss_gradients(model: LinearAutoencoder, batch, regularization_weight: float = 0.0):
    """Analytic (dL/dW_enc, dL/dW_dec) of :func:`loss`."""
    X = _batch(batch)
    E, D = model.W_enc, model.W_dec
    Z = X @ E.T  # N x k
    R = Z @ D.T - X  # N x n
    scale = 2.0 / X.shape[0]
    gD = scale * R.T @ Z
    gE = scale * D.T @ R.T @ X
    if regularization_weight:
        gE = gE + 2.0 * regularization_weight * E
        gD = gD + 2.0 * regularization_weight * D
    return gE, gD


def _clip(W: np.ndarray, bound: float) -> np.ndarray:
    norm = np.linalg.norm(W)
    return W * (bound / norm) if norm > bound else W


def gradient_step(model: LinearAutoencoder, batch, regularization_weight: float = 0.0) -> LinearAutoencoder:
    with np.errstate(over="ignore", invalid="ignore"):
        gE, gD = loss_gradients(model, batch, regularization_weight)
        E = model.W_enc - model.step * gE
        D = model.W_dec - model.step * gD
    if not (np.all(np.isfinite(E)) and np.all(np.isfinite(D))):
        raise NonFiniteUpdate("gradient step produced non-finite weights")
    return replace(model, W_enc=_clip(E, model.norm_bound), W_dec=_clip(D, model.norm_bound))


# --- data -------------------------------------------------------------------


class DataDistribution(PhenomenonSpace):
    """x = M z + noise * eps with rank(M) = r and unit variance in every coordinate.

    Calibration points, fresh samples and holdout points come from separate
    seeded streams, so they never coincide.
    """

    id = "vectors"

    def __init__(self, n: int, rank: int, noise: float = 0.0, seed: int = 0, n_calibration: int = 50):
        if not 1 <= rank <= n <= MAX_DIM:
            raise DimensionMismatch("need 1 <= rank <= n <= 32")
        if not 0 <= noise < 1:
            raise ValueError("noise must lie in [0, 1)")
        self.n, self.rank, self.noise, self.seed = n, rank, noise, seed
        U, _ = np.linalg.qr(rng(seed).standard_normal((n, rank)))
        # row scaling keeps the rank and gives every coordinate unit variance
        rows = np.linalg.norm(U, axis=1, keepdims=True)
        self.M = U / np.maximum(rows, 1e-12) * math.sqrt(1 - noise ** 2)
        self.calibration = self._draw((seed, 1), n_calibration)

    def _draw(self, key, count: int) -> list:
        gen = np.random.default_rng(list(key))
        Z = gen.standard_normal((count, self.rank))
        X = Z @ self.M.T
        if self.noise:
            X = X + self.noise * gen.standard_normal((count, self.n))
        return list(X)

    def admissible(self, p) -> bool:
        return isinstance(p, np.ndarray) and p.shape == (self.n,) and bool(np.all(np.isfinite(p)))

    def sample(self, seed: int, n: int) -> list:
        return self._draw((self.seed, 2, int(seed) & 0xFFFFFFFFFFFFFFFF), n)

    def holdout(self, seed: int, n: int) -> list:
        return self._draw((self.seed, 3, int(seed) & 0xFFFFFFFFFFFFFFFF), n)

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))

    def probe(self, p, radius: float, seed: int, k: int) -> list:
        gen = rng(seed)
        out = []
        for _ in range(k):
            d = gen.standard_normal(self.n)
            out.append(p + d * (radius * gen.uniform(0.1, 1.0) / max(np.linalg.norm(d), 1e-300)))
        return out

    def to_json(self, p):
        return [float(v) for v in p]


class CodeSpace(ExplanationSpace):
    id = "codes"

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))

    def is_trivial(self, e) -> bool:
        return e is None or not np.any(np.abs(e) > 1e-12)

    def magnitude(self, e) -> float:
        return float(np.linalg.norm(e))

    def embed(self, e) -> np.ndarray:
        return np.asarray(e, dtype=float).ravel()

    def to_json(self, e):
        return [float(v) for v in e]


# --- system -----------------------------------------------------------------


class ModelHolder:
    """Mutable slot for the current model; the system's maps read it on every call."""

    def __init__(self, model: LinearAutoencoder):
        self.model = model


class AutoencoderAdapter:
    WEIGHT_DECAY = "weight_decay"

    def __init__(self, holder: ModelHolder, data: DataDistribution):
        self.holder = holder
        self.data = data

    def calibration(self) -> list:
        return list(self.data.calibration)

    def holdout(self, seed: int, n: int) -> list:
        return self.data.holdout(seed, n)

    def update(self, batch, regularization_weight: float, soft_principles: Sequence[Principle]) -> None:
        # Only the weight-decay penalty is differentiable here; other soft
        # principles contribute nothing to the gradient.
        uses_decay = any(pr.id == self.WEIGHT_DECAY for pr in soft_principles)
        weight = regularization_weight if uses_decay else 0.0
        self.holder.model = gradient_step(self.holder.model, batch, weight)

    def train(self, rounds: int, regularization_weight: float = 0.0) -> None:
        batch = self.calibration()
        for _ in range(rounds):
            self.holder.model = gradient_step(self.holder.model, batch, regularization_weight)


def norm_principle(holder: ModelHolder) -> Principle:
    def check(_e, _p):
        m = holder.model
        bound = m.norm_bound * (1 + 1e-12)
        ok = np.linalg.norm(m.W_enc) <= bound and np.linalg.norm(m.W_dec) <= bound
        return Verdict.SATISFIED if ok else Verdict.VIOLATED

    return Principle("norm_bound", check, Scope.EXPLANATION, Severity.HARD)


def weight_decay_principle(holder: ModelHolder) -> Principle:
    def check(_e, _p):
        return Verdict.VIOLATED if weight_penalty(holder.model) > 0 else Verdict.SATISFIED

    return Principle(AutoencoderAdapter.WEIGHT_DECAY, check, Scope.EXPLANATION, Severity.SOFT,
                     penalty_fn=lambda _e, _p: weight_penalty(holder.model))


def neural_system(model: LinearAutoencoder, data: DataDistribution, weight_decay: bool = True,
                  stateful: bool = True) -> ReasoningSystem:
    if model.n != data.n:
        raise DimensionMismatch("model and data dimensions differ")
    holder = ModelHolder(model)
    pis = [norm_principle(holder)]
    if weight_decay:
        pis.append(weight_decay_principle(holder))
    return ReasoningSystem(
        phenomena=data,
        explanations=CodeSpace(),
        infer=lambda x: encode(holder.model, x),
        generate=lambda z: decode(holder.model, z),
        principles=PrincipleSystem(pis),
        stateful=stateful,
        name="neural",
        adapter=AutoencoderAdapter(holder, data),
    )


def frozen(system: ReasoningSystem) -> ReasoningSystem:
    """Stateless snapshot of a neural system's current weights."""
    model = system.adapter.holder.model
    snap = neural_system(model, system.phenomena,
                         weight_decay=AutoencoderAdapter.WEIGHT_DECAY in system.principles.ids,
                         stateful=False)
    snap.principles = PrincipleSystem(snap.principles.principles, system.principles.version)
    return snap


# --- weight snapshots -------------------------------------------------------


def format_weights(model: LinearAutoencoder) -> str:
    return format_blocks({
        "W_enc": model.W_enc.tolist(),
        "W_dec": model.W_dec.tolist(),
        "step": [[model.step]],
        "norm_bound": [[model.norm_bound]],
    })


def parse_weights(text: str) -> LinearAutoencoder:
    blocks = parse_blocks(text)
    for key in ("W_enc", "W_dec"):
        if key not in blocks:
            raise FormatError(f"weight snapshot lacks section {key!r}")
    step = blocks.get("step", [[0.05]])[0][0]
    bound = blocks.get("norm_bound", [[math.inf]])[0][0]
    return LinearAutoencoder(np.array(blocks["W_enc"]), np.array(blocks["W_dec"]), step, bound)


def read_weights(path) -> LinearAutoencoder:
    return parse_weights(Path(path).read_text(encoding="utf-8"))


def write_weights(path, model: LinearAutoencoder) -> None:
    Path(path).write_text(format_weights(model), encoding="utf-8")
