"""Statevector simulation of ordered exponential ansatzes.

Each generator ``kappa`` pairs basis states ``x`` (destroyed orbitals filled,
created orbitals empty) with ``y = tau x``; ``exp(theta kappa)`` is a plane
rotation on every such pair, which is exact and equal to the product of the
commuting Pauli exponentials of its Jordan-Wigner image.  Both routes are
available; the pair route is the default because it touches only the
amplitudes the generator connects.

Noise modes
-----------
``noiseless``
    exact expectation values.
``shot-gaussian``
    the noise-averaged expectation plus a Gaussian shot error.  Gate
    depolarization is folded in as a global white-noise fidelity
    ``(1-p1)^n1 (1-p2)^ncx`` taken from :func:`cnot_cost`, and symmetric
    readout flips damp each Pauli term by ``(1-2 p_readout)^weight``.
``trajectory``
    stochastic Pauli insertion after every factor, one draw per gate of the
    cost model, averaged over trajectories; readout damping as above.

Random draws come from one ``numpy.random.Generator`` per run, in factor
order, gates before Pauli choices.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg

from . import kernels
from .ansatz import OrderedAnsatz
from .errors import ArityError, HermiticityError, ModeError, NonCommutingError
from .generators import Configuration, Generator, bits_to_string
from .integrals import SpinOrbitalIndexing
from .qubit_map import PauliSum, jw_generator, pauli_mutually_commute

NORM_TOL = 1e-10
DENSE_FALLBACK_QUBITS = 12
MODES = ("noiseless", "shot-gaussian", "trajectory")


class Statevector:
    """Owned amplitude buffer over ``2**n_qubits`` basis states."""

    __slots__ = ("amplitudes", "n_qubits")

    def __init__(self, amplitudes: np.ndarray, n_qubits: int | None = None):
        amps = np.ascontiguousarray(amplitudes, dtype=np.complex128)
        n = int(amps.shape[0]).bit_length() - 1
        if amps.ndim != 1 or 1 << n != amps.shape[0]:
            raise ValueError("amplitude vector length must be a power of two")
        if n_qubits is not None and n_qubits != n:
            raise ValueError(f"{amps.shape[0]} amplitudes do not describe {n_qubits} qubits")
        self.amplitudes = amps
        self.n_qubits = n

    @classmethod
    def basis(cls, n_qubits: int, bits: int) -> "Statevector":
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[bits] = 1.0
        return cls(amps)

    def copy(self) -> "Statevector":
        return Statevector(self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def inner(self, other: "Statevector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class NoiseConfig:
    p1: float = 0.0
    p2: float = 0.0
    p_readout: float = 0.0
    shots: int = 10_000
    mode: str = "noiseless"
    trajectories: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p1", "p2", "p_readout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"unknown noise mode {self.mode!r}; expected one of {MODES}")
        if self.mode != "noiseless" and self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.trajectories < 1:
            raise ValueError("trajectories must be >= 1")

    @property
    def noiseless(self) -> bool:
        return self.mode == "noiseless"

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class GateCostReport:
    cnot_count: int = 0
    single_qubit_count: int = 0
    per_factor: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cnot_count": self.cnot_count,
            "single_qubit_count": self.single_qubit_count,
            "per_factor": [
                {"generator": lab, "cnot": cx, "single_qubit": sq} for lab, cx, sq in self.per_factor
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def fidelity(self, noise: NoiseConfig) -> float:
        """White-noise survival probability of the whole circuit."""
        return (1.0 - noise.p1) ** self.single_qubit_count * (1.0 - noise.p2) ** self.cnot_count


# ----------------------------------------------------------- preparation


def prepare_reference(indexing: SpinOrbitalIndexing) -> Statevector:
    return Statevector.basis(indexing.n_spin, indexing.reference_bits)


# ---------------------------------------------------------- pair tables


@lru_cache(maxsize=8192)
def pair_table(gen: Generator, n_qubits: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Basis pairs ``(x, y, sign)`` with ``tau|x> = sign |y>``."""
    if gen.max_index >= n_qubits:
        raise ValueError(f"{gen.label()} does not fit {n_qubits} qubits")
    dmask, cmask = gen.destruction_mask, gen.creation_mask
    b = np.arange(1 << n_qubits, dtype=np.int64)
    cur = b[((b & dmask) == dmask) & ((b & cmask) == 0)]
    xs = cur.copy()
    parity = np.zeros(cur.shape, dtype=np.int64)
    for p in gen.destructions:
        parity += np.bitwise_count(cur & ((1 << p) - 1))
        cur = cur ^ (1 << p)
    for p in reversed(gen.creations):
        parity += np.bitwise_count(cur & ((1 << p) - 1))
        cur = cur | (1 << p)
    signs = 1.0 - 2.0 * (parity & 1)
    for arr in (xs, cur, signs):
        arr.setflags(write=False)
    return xs, cur, signs


@lru_cache(maxsize=8192)
def _pauli_program(gen: Generator, n_qubits: int):
    op = jw_generator(gen, n_qubits)
    terms = []
    for (x, z), c in op.items():
        terms.append((x, z, (x & z).bit_count(), c.imag))
    return op, tuple(terms)


# -------------------------------------------------------------- applying


def _apply_pairs(psi: np.ndarray, gen: Generator, angle: float) -> None:
    xs, ys, signs = pair_table(gen, int(psi.shape[0]).bit_length() - 1)
    kernels.rotate_pairs(psi, xs, ys, signs, np.cos(angle), np.sin(angle))


def _apply_pauli(psi: np.ndarray, gen: Generator, angle: float) -> None:
    n = int(psi.shape[0]).bit_length() - 1
    op, terms = _pauli_program(gen, n)
    if not pauli_mutually_commute(op):
        if n >= DENSE_FALLBACK_QUBITS:
            raise NonCommutingError(f"{gen.label()} has non-commuting Pauli terms")
        psi[:] = scipy.linalg.expm(angle * op.to_dense()) @ psi
        return
    for x, z, ny, r in terms:
        kernels.pauli_rotation(psi, x, z, ny, angle * r)


def apply_exponential(
    state: Statevector, gen: Generator, angle: float, method: str = "pairs"
) -> Statevector:
    """``exp(angle * kappa) |state>`` as a new state.

    ``method="pauli"`` multiplies the commuting Pauli exponentials of the
    Jordan-Wigner image; ``"pairs"`` rotates the connected amplitude pairs.
    """
    out = state.copy()
    if angle == 0.0:
        return out
    if method == "pairs":
        _apply_pairs(out.amplitudes, gen, float(angle))
    elif method == "pauli":
        _apply_pauli(out.amplitudes, gen, float(angle))
    else:
        raise ValueError(f"unknown method {method!r}")
    return out


def apply_ansatz(
    state: Statevector, ansatz: OrderedAnsatz, params: Sequence[float], method: str = "pairs"
) -> Statevector:
    """Apply the factors in application order (factor 0 first)."""
    params = np.asarray(params, dtype=float)
    if params.shape != (len(ansatz),):
        raise ArityError(f"{params.shape[0] if params.ndim else 0} parameters for {len(ansatz)} factors")
    out = state.copy()
    psi = out.amplitudes
    step = _apply_pairs if method == "pairs" else _apply_pauli
    for gen, theta in zip(ansatz.generators, params):
        if theta != 0.0:
            step(psi, gen, float(theta))
    return out


def generator_expectation(bra: Statevector, gen: Generator, ket: Statevector) -> complex:
    """``<bra| kappa |ket>``."""
    xs, ys, signs = pair_table(gen, ket.n_qubits)
    return kernels.generator_overlap(bra.amplitudes, ket.amplitudes, xs, ys, signs)


# ---------------------------------------------------------- expectation


_READOUT_CACHE: dict[tuple[int, float], tuple[PauliSum, PauliSum]] = {}


def readout_damped(op: PauliSum, p_readout: float) -> PauliSum:
    """Pauli coefficients scaled by ``(1 - 2 p)^weight``."""
    if p_readout == 0.0:
        return op
    key = (id(op), p_readout)
    hit = _READOUT_CACHE.get(key)
    if hit is not None and hit[0] is op:
        return hit[1]
    f = 1.0 - 2.0 * p_readout
    damped = PauliSum(op.n_qubits, {k: c * f ** (k[0] | k[1]).bit_count() for k, c in op.items()})
    if len(_READOUT_CACHE) > 64:
        _READOUT_CACHE.clear()
    _READOUT_CACHE[key] = (op, damped)
    return damped


def exact_expectation(state: Statevector, op: PauliSum) -> float:
    hpsi = op.to_sparse() @ state.amplitudes
    return float(np.vdot(state.amplitudes, hpsi).real)


def expectation(
    state: Statevector,
    op: PauliSum,
    noise: NoiseConfig | None = None,
    rng: np.random.Generator | None = None,
    cost: GateCostReport | None = None,
) -> float:
    """Energy estimate of ``op`` on ``state`` under the noise mode.

    ``cost`` supplies the gate counts for the white-noise fidelity; without
    it only readout damping and shot noise apply.
    """
    if not op.is_hermitian():
        raise HermiticityError("expectation requires a hermitian operator")
    if noise is None or noise.noiseless:
        return exact_expectation(state, op)
    if noise.mode == "trajectory":
        raise ModeError("trajectory mode needs the circuit; use circuit_expectation")
    if rng is None:
        rng = noise.rng()
    return _shot_gaussian(state, op, noise, rng, cost)


def _shot_gaussian(state, op, noise, rng, cost) -> float:
    damped = readout_damped(op, noise.p_readout)
    hpsi = damped.to_sparse() @ state.amplitudes
    mean = float(np.vdot(state.amplitudes, hpsi).real)
    if cost is not None and (noise.p1 or noise.p2):
        fid = cost.fidelity(noise)
        mean = fid * mean + (1.0 - fid) * damped.constant
    second = float(np.vdot(hpsi, hpsi).real)
    raw = float(np.vdot(state.amplitudes, hpsi).real)
    var = max(second - raw * raw, 0.0)
    return mean + float(rng.normal(0.0, np.sqrt(var / noise.shots)))


# ------------------------------------------------------------ gate model


def _factor_gates(gen: Generator, n_qubits: int):
    """Staircase gate list of one factor: (cnot pairs, single-qubit sites)."""
    op, _ = _pauli_program(gen, n_qubits)
    cx: list[tuple[int, int]] = []
    sq: list[int] = []
    for (x, z), _c in op.items():
        support = [q for q in range(n_qubits) if (x | z) >> q & 1]
        for a, b in zip(support, support[1:]):
            cx.extend([(a, b), (a, b)])
        for q in support:
            if x >> q & 1:
                sq.extend([q, q])
        if support:
            sq.append(support[-1])
    return cx, sq


_GATE_CACHE: dict[tuple[Generator, int], tuple] = {}


def factor_gates(gen: Generator, n_qubits: int):
    key = (gen, n_qubits)
    if key not in _GATE_CACHE:
        _GATE_CACHE[key] = _factor_gates(gen, n_qubits)
    return _GATE_CACHE[key]


def cnot_cost(ansatz: OrderedAnsatz, n_qubits: int | None = None) -> GateCostReport:
    """Gate counts under the staircase convention, ``2(w-1)`` CNOTs per string.

    Each X or Y letter adds two basis-change rotations and each string one
    Z rotation.
    """
    if n_qubits is None:
        n_qubits = max((g.max_index for g in ansatz.generators), default=-1) + 1
    rep = GateCostReport()
    for gen in ansatz.generators:
        cx, sq = factor_gates(gen, n_qubits)
        rep.per_factor.append((gen.label(), len(cx), len(sq)))
        rep.cnot_count += len(cx)
        rep.single_qubit_count += len(sq)
    return rep


# ----------------------------------------------------------- trajectories


_ONE_Q = ((1, 0), (0, 1), (1, 1))  # X, Z, Y as (x, z)


def _random_pauli(psi: np.ndarray, qubits: Sequence[int], rng: np.random.Generator) -> None:
    k = len(qubits)
    choice = int(rng.integers(1, 4**k))
    x = z = 0
    for j, q in enumerate(qubits):
        letter = (choice >> (2 * j)) & 3
        if letter:
            dx, dz = _ONE_Q[letter - 1]
            x |= dx << q
            z |= dz << q
    # exp(i pi/2 P) = iP: the Pauli up to a global phase
    kernels.pauli_rotation(psi, x, z, (x & z).bit_count(), np.pi / 2)


def trajectory_state(
    reference: Statevector,
    ansatz: OrderedAnsatz,
    params: Sequence[float],
    noise: NoiseConfig,
    rng: np.random.Generator,
) -> Statevector:
    params = np.asarray(params, dtype=float)
    if params.shape != (len(ansatz),):
        raise ArityError(f"{params.shape[0]} parameters for {len(ansatz)} factors")
    out = reference.copy()
    psi = out.amplitudes
    n = out.n_qubits
    for gen, theta in zip(ansatz.generators, params):
        if theta != 0.0:
            _apply_pairs(psi, gen, float(theta))
        if noise.p1 == 0.0 and noise.p2 == 0.0:
            continue
        cx, sq = factor_gates(gen, n)
        hit1 = rng.random(len(sq)) < noise.p1
        hit2 = rng.random(len(cx)) < noise.p2
        for q in np.asarray(sq)[hit1]:
            _random_pauli(psi, (int(q),), rng)
        for k in np.flatnonzero(hit2):
            _random_pauli(psi, cx[k], rng)
    return out


def circuit_expectation(
    reference: Statevector,
    ansatz: OrderedAnsatz,
    params: Sequence[float],
    op: PauliSum,
    noise: NoiseConfig | None = None,
    rng: np.random.Generator | None = None,
    cost: GateCostReport | None = None,
) -> float:
    """Energy of the ansatz circuit under any noise mode."""
    if noise is None or noise.mode != "trajectory":
        state = apply_ansatz(reference, ansatz, params)
        if noise is not None and not noise.noiseless and cost is None:
            cost = cnot_cost(ansatz, reference.n_qubits)
        return expectation(state, op, noise, rng, cost)
    if not op.is_hermitian():
        raise HermiticityError("expectation requires a hermitian operator")
    if rng is None:
        rng = noise.rng()
    damped = readout_damped(op, noise.p_readout)
    total = 0.0
    for _ in range(noise.trajectories):
        st = trajectory_state(reference, ansatz, params, noise, rng)
        total += exact_expectation(st, damped)
    return total / noise.trajectories


# ------------------------------------------------------------ readout


def basis_probabilities(state: Statevector, threshold: float = 0.0) -> list[Configuration]:
    """Basis states with probability at least ``threshold``, most probable first."""
    if not 0.0 <= threshold < 1.0:
        raise ValueError("threshold must lie in [0, 1)")
    probs = state.probabilities()
    idx = np.flatnonzero(probs >= threshold) if threshold > 0 else np.arange(probs.shape[0])
    order = sorted(idx.tolist(), key=lambda b: (-probs[b], b))
    n = state.n_qubits
    return [Configuration(int(b), n, float(probs[b])) for b in order]


def sample_readout(
    state: Statevector, noise: NoiseConfig, rng: np.random.Generator | None = None
) -> Counter:
    """Measurement histogram keyed by occupation strings (qubit 0 first)."""
    if noise.shots < 1:
        raise ValueError("shots must be >= 1")
    if rng is None:
        rng = noise.rng()
    probs = state.probabilities()
    probs = probs / probs.sum()
    outcomes = rng.choice(probs.shape[0], size=noise.shots, p=probs)
    if noise.p_readout > 0.0:
        flips = rng.random((noise.shots, state.n_qubits)) < noise.p_readout
        masks = (flips * (1 << np.arange(state.n_qubits))).sum(axis=1)
        outcomes = outcomes ^ masks
    counts = Counter()
    for b, c in zip(*np.unique(outcomes, return_counts=True)):
        counts[bits_to_string(int(b), state.n_qubits)] = int(c)
    return counts


def histogram_csv(counts: Counter) -> str:
    lines = ["bitstring,count"]
    for k in sorted(counts):
        lines.append(f"{k},{counts[k]}")
    return "\n".join(lines) + "\n"


def overlap(a: Statevector, b: Statevector) -> float:
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"qubit counts differ: {a.n_qubits} vs {b.n_qubits}")
    return abs(a.inner(b))
