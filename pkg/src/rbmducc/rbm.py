"""Restricted Boltzmann machine over occupation bit-vectors.

Energy ``E(v, h) = -h.W.v - c.h - b.v`` with binary visible ``v`` (one unit
per spin orbital) and binary hidden ``h``.  Training is CD-k on minibatches
drawn from a weighted training set by tower sampling; generation runs
vectorized Gibbs chains seeded from training vectors.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DivergenceError, EmptyTrainingError
from .generators import Configuration


@dataclass(frozen=True)
class RbmHyper:
    n_hidden: int | None = None
    learning_rate: float = 0.05
    epochs: int = 2000
    cd_k: int = 1
    batch_size: int = 32
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self) -> None:
        if self.learning_rate < 0 or self.epochs < 0 or self.cd_k < 1 or self.batch_size < 1:
            raise ValueError(f"invalid hyperparameters {self}")


@dataclass
class RbmModel:
    W: np.ndarray
    b: np.ndarray
    c: np.ndarray
    hyper: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.W = np.array(self.W, dtype=float)
        self.b = np.array(self.b, dtype=float).ravel()
        self.c = np.array(self.c, dtype=float).ravel()
        if self.W.shape != (self.c.shape[0], self.b.shape[0]):
            raise ValueError(
                f"W shape {self.W.shape} inconsistent with {self.c.shape[0]} hidden, "
                f"{self.b.shape[0]} visible"
            )
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))):
            raise DivergenceError("non-finite RBM parameters")

    @property
    def n_visible(self) -> int:
        return self.b.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.c.shape[0]

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int | None = None) -> "RbmModel":
        nh = n_visible if n_hidden is None else n_hidden
        return cls(np.zeros((nh, n_visible)), np.zeros(n_visible), np.zeros(nh))

    @classmethod
    def initialize(cls, n_visible: int, hyper: RbmHyper = RbmHyper()) -> "RbmModel":
        """Gaussian weights of deviation ``hyper.init_scale``, zero biases."""
        nh = n_visible if hyper.n_hidden is None else hyper.n_hidden
        rng = np.random.default_rng(hyper.seed)
        W = rng.normal(0.0, hyper.init_scale, size=(nh, n_visible))
        return cls(W, np.zeros(n_visible), np.zeros(nh), asdict(hyper))

    def copy(self) -> "RbmModel":
        return RbmModel(self.W.copy(), self.b.copy(), self.c.copy(), dict(self.hyper))

    def to_dict(self) -> dict:
        return {
            "n_visible": self.n_visible,
            "n_hidden": self.n_hidden,
            "W": self.W.ravel().tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "hyper": self.hyper,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RbmModel":
        W = np.asarray(data["W"], dtype=float).reshape(data["n_hidden"], data["n_visible"])
        return cls(W, data["b"], data["c"], dict(data.get("hyper", {})))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "RbmModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def bits_to_vectors(bits: Sequence[int] | np.ndarray, n: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int64)
    return ((b[:, None] >> np.arange(n)) & 1).astype(float)


def vectors_to_bits(v: np.ndarray) -> np.ndarray:
    return (v.astype(np.int64) << np.arange(v.shape[1])).sum(axis=1)


# ------------------------------------------------------- closed forms


def free_energy(model: RbmModel, v: np.ndarray) -> np.ndarray | float:
    """``F(v) = -b.v - sum_i softplus(c_i + (W v)_i)``; batched over leading axes."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != model.n_visible:
        raise ValueError(f"vector length {v.shape[-1]} != n_visible {model.n_visible}")
    act = v @ model.W.T + model.c
    out = -(v @ model.b) - np.logaddexp(0.0, act).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def conditional_hidden(model: RbmModel, v: np.ndarray) -> np.ndarray:
    """``p(h_i = 1 | v) = logistic(c_i + (W v)_i)``."""
    return expit(np.asarray(v, dtype=float) @ model.W.T + model.c)


def conditional_visible(model: RbmModel, h: np.ndarray) -> np.ndarray:
    return expit(np.asarray(h, dtype=float) @ model.W + model.b)


def exact_marginals(model: RbmModel) -> np.ndarray:
    """``p(v)`` for every ``v`` by enumeration; index ``k`` has bit ``j`` = ``v_j``."""
    if model.n_visible > 20:
        raise ValueError("enumeration limited to 20 visible units")
    v = bits_to_vectors(np.arange(1 << model.n_visible), model.n_visible)
    neg = -free_energy(model, v)
    return np.exp(neg - logsumexp(neg))


# ------------------------------------------------------- training data


@dataclass
class TrainingSet:
    """Weighted bit-vectors; the reference determinant is never admitted."""

    n_visible: int
    bits: list[int] = field(default_factory=list)
    probabilities: list[float] = field(default_factory=list)
    reference_bits: int | None = None
    normalized: bool = False

    def __post_init__(self) -> None:
        if len(self.bits) != len(self.probabilities):
            raise ValueError("bits and probabilities differ in length")
        for b, p in zip(self.bits, self.probabilities):
            self._check(b, p)

    def _check(self, b: int, p: float) -> None:
        if p < 0 or not np.isfinite(p):
            raise ValueError(f"invalid probability {p}")
        if self.reference_bits is not None and b == self.reference_bits:
            raise ValueError("the reference determinant is excluded from training")
        if b >> self.n_visible:
            raise ValueError(f"bit-string {b} exceeds {self.n_visible} visible units")

    @classmethod
    def from_configurations(cls, configs: Iterable[Configuration], n_visible: int,
                            reference_bits: int | None = None) -> "TrainingSet":
        ts = cls(n_visible, reference_bits=reference_bits)
        for cfg in configs:
            if cfg.bits != reference_bits:
                ts.add(cfg.bits, cfg.probability)
        return ts

    def __len__(self) -> int:
        return len(self.bits)

    def __contains__(self, bits: int) -> bool:
        return bits in self.bits

    def add(self, bits: int, probability: float) -> None:
        self._check(bits, probability)
        if bits in self.bits:
            raise ValueError(f"duplicate training entry {bits}")
        self.bits.append(int(bits))
        self.probabilities.append(float(probability))
        self.normalized = False

    def normalize(self) -> "TrainingSet":
        total = float(np.sum(self.probabilities))
        if not len(self) or total <= 0.0:
            raise EmptyTrainingError("cannot normalize an empty or zero-weight training set")
        probs = [p / total for p in self.probabilities]
        return TrainingSet(self.n_visible, list(self.bits), probs, self.reference_bits, True)

    def vectors(self) -> np.ndarray:
        return bits_to_vectors(self.bits, self.n_visible)

    def configurations(self) -> list[Configuration]:
        return [Configuration(b, self.n_visible, p) for b, p in zip(self.bits, self.probabilities)]

    def to_dict(self) -> dict:
        return {
            "n_visible": self.n_visible,
            "reference_bits": self.reference_bits,
            "normalized": self.normalized,
            "entries": [[b, p] for b, p in zip(self.bits, self.probabilities)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingSet":
        bits = [int(b) for b, _ in data["entries"]]
        probs = [float(p) for _, p in data["entries"]]
        return cls(data["n_visible"], bits, probs, data.get("reference_bits"), data.get("normalized", False))


def tower_sample(probabilities: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn proportional to weight via the cumulative table."""
    cum = np.cumsum(probabilities)
    u = rng.random(size) * cum[-1]
    return np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)


# ------------------------------------------------------------- training


def train_cd(model: RbmModel, data: TrainingSet, hyper: RbmHyper = RbmHyper()) -> RbmModel:
    """CD-k updates on tower-sampled minibatches; returns a new model.

    One epoch is ``ceil(len(data) / batch_size)`` minibatches.
    """
    if len(data) == 0:
        raise EmptyTrainingError("training set is empty")
    if not data.normalized:
        raise ValueError("training set must be normalized first")
    if data.n_visible != model.n_visible:
        raise ValueError(f"data has {data.n_visible} units, model {model.n_visible}")
    out = model.copy()
    out.hyper = asdict(hyper)
    rng = np.random.default_rng(hyper.seed)
    X = data.vectors()
    probs = np.asarray(data.probabilities, dtype=float)
    per_epoch = -(-len(data) // hyper.batch_size)
    W, b, c = out.W, out.b, out.c
    lr = hyper.learning_rate
    for _ in range(hyper.epochs):
        for _ in range(per_epoch):
            v0 = X[tower_sample(probs, hyper.batch_size, rng)]
            ph0 = expit(v0 @ W.T + c)
            h = (rng.random(ph0.shape) < ph0).astype(float)
            for step in range(hyper.cd_k):
                pv = expit(h @ W + b)
                vk = (rng.random(pv.shape) < pv).astype(float)
                phk = expit(vk @ W.T + c)
                if step + 1 < hyper.cd_k:
                    h = (rng.random(phk.shape) < phk).astype(float)
            m = v0.shape[0]
            W += lr * (ph0.T @ v0 - phk.T @ vk) / m
            b += lr * (v0 - vk).mean(axis=0)
            c += lr * (ph0 - phk).mean(axis=0)
        if not (np.isfinite(W).all() and np.isfinite(b).all() and np.isfinite(c).all()):
            raise DivergenceError("CD update produced non-finite parameters")
    return out


# ----------------------------------------------------------- generation


@dataclass(frozen=True, kw_only=True)
class GenerationFilter:
    """Acceptance rules for generated bit-strings.

    ``min_rank``/``max_rank`` bound the excitation rank relative to
    ``reference_bits``; ``ms2`` uses the block spin ordering.
    """

    n_electrons: int
    ms2: int | None = None
    min_rank: int = 0
    max_rank: int | None = None
    reference_bits: int = 0
    n_spatial: int | None = None

    def accepts(self, bits: int) -> bool:
        if bits.bit_count() != self.n_electrons:
            return False
        if self.ms2 is not None:
            alpha = (bits & ((1 << self.n_spatial) - 1)).bit_count()
            if 2 * alpha - self.n_electrons != self.ms2:
                return False
        rank = (self.reference_bits & ~bits).bit_count()
        if rank < self.min_rank:
            return False
        return self.max_rank is None or rank <= self.max_rank


def gibbs_chains(model: RbmModel, start: np.ndarray, steps: int, rng: np.random.Generator,
                 burn_in: int = 0) -> np.ndarray:
    """Run ``len(start)`` chains in lockstep; returns the post-burn-in visible samples."""
    v = np.array(start, dtype=float)
    out = np.empty((steps, *v.shape))
    for t in range(burn_in + steps):
        ph = expit(v @ model.W.T + model.c)
        h = (rng.random(ph.shape) < ph).astype(float)
        pv = expit(h @ model.W + model.b)
        v = (rng.random(pv.shape) < pv).astype(float)
        if t >= burn_in:
            out[t - burn_in] = v
    return out.reshape(-1, v.shape[-1])


def generate(
    model: RbmModel,
    n_samples: int,
    gibbs_burn_in: int,
    seed: int,
    filters: GenerationFilter,
    init: TrainingSet | np.ndarray | None = None,
    n_chains: int = 100,
) -> list[Configuration]:
    """Distinct filtered samples with their empirical frequency, most frequent first.

    Chains start from training vectors drawn by weight (or from the supplied
    array, or all-zero vectors when nothing is given).
    """
    if n_samples <= 0:
        return []
    rng = np.random.default_rng(seed)
    chains = max(1, min(n_chains, n_samples))
    if isinstance(init, TrainingSet) and len(init):
        idx = tower_sample(np.asarray(init.probabilities, dtype=float), chains, rng)
        start = init.vectors()[idx]
    elif init is not None and not isinstance(init, TrainingSet):
        arr = np.atleast_2d(np.asarray(init, dtype=float))
        start = arr[np.arange(chains) % arr.shape[0]]
    else:
        start = np.zeros((chains, model.n_visible))
    steps = -(-n_samples // chains)
    samples = gibbs_chains(model, start, steps, rng, gibbs_burn_in)[:n_samples]
    uniq, counts = np.unique(vectors_to_bits(samples), return_counts=True)
    out = [
        Configuration(int(bits), model.n_visible, float(cnt) / n_samples)
        for bits, cnt in zip(uniq, counts)
        if filters.accepts(int(bits))
    ]
    out.sort(key=lambda cfg: (-cfg.probability, cfg.bits))
    return out
