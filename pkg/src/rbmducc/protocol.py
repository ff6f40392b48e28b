"""RBM-assisted construction of a shallow dUCC ansatz.

Pipeline
--------
1. Optimize an MP2-screened dUCCSD pool to get ``|psi_SD>``.
2. Read the determinant weight of every pool operator, drop those below the
   probability threshold and sort each rank block by weight.  The surviving
   determinants (reference excluded) form the training set.
3. Train the RBM on the weighted set.
4. Sample new bit-strings and keep the excitation rank being targeted.
5. Reach each new target by commuting scatterers onto an ansatz double.
6. Keep the best factorization if its MP2 measure clears the threshold,
   insert its scatterers, weight the target by ``P(double) * measure**2``
   and add it to the training set.  Repeat 3-6 until an iteration accepts
   nothing new.

The returned ansatz is optimized as a whole by VQE.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .ansatz import (
    Factorization,
    OrderedAnsatz,
    build_conventional,
    build_duccsd_pool,
    determinant_of,
    factorization_candidates,
    insert_scatterer,
    reorder_by_probability,
)
from .errors import ProtocolDegenerateWarning
from .generators import Configuration, bits_to_string
from .integrals import MolecularIntegrals, SpinOrbitalIndexing, spin_orbital_energies
from .qubit_map import PauliSum, jw_hamiltonian
from .rbm import GenerationFilter, RbmHyper, RbmModel, TrainingSet, generate, train_cd
from .simulator import NoiseConfig, Statevector, apply_ansatz, cnot_cost, prepare_reference
from .simulator import overlap as _overlap
from .vqe import ObjectiveSpec, OptimizerResult, evaluate, minimize_cg, minimize_spsa

log = logging.getLogger(__name__)

TRACE_SCHEMA = 1


@dataclass(frozen=True)
class ProtocolConfig:
    mp2_threshold: float = 1e-5
    prob_threshold: float = 1e-5
    measure_threshold: float = 1e-6
    target_rank: int = 3
    max_iterations: int = 20
    partial_opt: bool = False
    partial_iterations: int = 10
    screen_singles: bool = True
    warm_start: bool = True
    seed: int = 0
    rbm: RbmHyper = field(default_factory=RbmHyper)
    n_samples: int = 5000
    burn_in: int = 100
    n_chains: int = 100
    optimizer: str = "cg"
    cg_tol: float = 1e-8
    cg_max_iter: int = 2000
    gradient: str = "adjoint"
    spsa_max_iter: int = 500
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    noisy_sd: bool = False

    def __post_init__(self) -> None:
        for name in ("mp2_threshold", "prob_threshold", "measure_threshold"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.target_rank not in (3, 4):
            raise ValueError("target_rank must be 3 or 4")
        if self.optimizer not in ("cg", "spsa"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.optimizer == "cg" and not self.noise.noiseless:
            raise ValueError("CG cannot be combined with a noisy objective")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolConfig":
        data = dict(data)
        if isinstance(data.get("rbm"), dict):
            data["rbm"] = RbmHyper(**data["rbm"])
        if isinstance(data.get("noise"), dict):
            data["noise"] = NoiseConfig(**data["noise"])
        return cls(**data)


@dataclass
class ProtocolTrace:
    """Append-only per-iteration log of the construction loop."""

    iterations: list[dict] = field(default_factory=list)
    truncated: bool = False
    energies: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def append(self, record: dict) -> None:
        self.iterations.append(record)

    def accepted(self) -> list[dict]:
        return [a for it in self.iterations for a in it["accepted"]]

    def to_dict(self) -> dict:
        return {
            "schema": TRACE_SCHEMA,
            "meta": self.meta,
            "truncated": self.truncated,
            "energies": self.energies,
            "iterations": self.iterations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolTrace":
        return cls(list(data["iterations"]), data["truncated"], dict(data["energies"]), dict(data["meta"]))

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


@dataclass
class PsiSD:
    state: Statevector
    ansatz: OrderedAnsatz
    params: np.ndarray
    energy: float
    result: OptimizerResult

    def __iter__(self):
        return iter((self.state, self.ansatz))


@dataclass
class LoopState:
    """Everything needed to resume the construction loop."""

    ansatz: OrderedAnsatz
    training: TrainingSet
    model: RbmModel
    iteration: int = 0
    seen: dict[int, str] = field(default_factory=dict)
    double_probability: dict = field(default_factory=dict)
    done: bool = False

    def to_dict(self) -> dict:
        return {
            "ansatz": self.ansatz.to_dict(),
            "training": self.training.to_dict(),
            "model": self.model.to_dict(),
            "iteration": self.iteration,
            "seen": {str(k): v for k, v in sorted(self.seen.items())},
            "double_probability": [[g.to_dict(), p] for g, p in self.double_probability.items()],
            "done": self.done,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LoopState":
        from .generators import Generator

        return cls(
            OrderedAnsatz.from_dict(data["ansatz"]),
            TrainingSet.from_dict(data["training"]),
            RbmModel.from_dict(data["model"]),
            int(data["iteration"]),
            {int(k): v for k, v in data["seen"].items()},
            {Generator.from_dict(g): float(p) for g, p in data["double_probability"]},
            bool(data["done"]),
        )


@dataclass
class ProtocolResult:
    ansatz: OrderedAnsatz
    energy: float
    params: np.ndarray
    state: Statevector
    trace: ProtocolTrace
    psi_sd: PsiSD
    optimizer: OptimizerResult


def derive_seed(base: int, *keys: int) -> int:
    return int(np.random.SeedSequence([base, *keys]).generate_state(1)[0])


def _context(ints: MolecularIntegrals, indexing: SpinOrbitalIndexing | None,
             hamiltonian: PauliSum | None):
    occ = SpinOrbitalIndexing.aufbau(ints) if indexing is None else indexing
    ham = jw_hamiltonian(ints, occ) if hamiltonian is None else hamiltonian
    return occ, ham


def optimize(
    ansatz: OrderedAnsatz,
    hamiltonian: PauliSum,
    reference: Statevector,
    config: ProtocolConfig,
    init: np.ndarray | None = None,
    noisy: bool | None = None,
    max_iter: int | None = None,
    seed: int | None = None,
) -> OptimizerResult:
    """Run the configured optimizer; CG noiselessly, SPSA under noise."""
    use_noise = (not config.noise.noiseless) if noisy is None else noisy
    noise = config.noise if use_noise else NoiseConfig()
    spec = ObjectiveSpec(hamiltonian, ansatz, reference, noise)
    if config.optimizer == "spsa" or use_noise:
        it = config.spsa_max_iter if max_iter is None else max_iter
        return minimize_spsa(spec, init, it, config.seed if seed is None else seed)
    it = config.cg_max_iter if max_iter is None else max_iter
    return minimize_cg(spec, init, config.cg_tol, it, config.gradient)


# ---------------------------------------------------------------- step 1


def step1_prepare_psi_sd(
    ints: MolecularIntegrals,
    config: ProtocolConfig = ProtocolConfig(),
    indexing: SpinOrbitalIndexing | None = None,
    hamiltonian: PauliSum | None = None,
    replicas: int = 1,
) -> PsiSD:
    """Optimize the MP2-screened dUCCSD pool from zero parameters.

    With ``config.noisy_sd`` and a noisy ``config.noise`` the pool is
    optimized by SPSA under noise, ``replicas`` times with derived seeds,
    and the parameters are averaged.  The state is always rebuilt noiselessly
    from the resulting parameters so determinant weights are read from
    amplitudes.
    """
    occ, ham = _context(ints, indexing, hamiltonian)
    pool = build_duccsd_pool(occ, ints, config.mp2_threshold)
    ref = prepare_reference(occ)
    budget = config.partial_iterations if config.partial_opt else None
    noisy = config.noisy_sd and not config.noise.noiseless
    if noisy:
        runs = []
        for r in range(replicas):
            noise = replace(config.noise, seed=derive_seed(config.noise.seed, r, 17))
            cfg = replace(config, noise=noise)
            runs.append(optimize(pool, ham, ref, cfg, noisy=True, max_iter=budget,
                                 seed=derive_seed(config.seed, r, 18)))
        res = runs[0]
        params = np.mean([r.final_params for r in runs], axis=0)
    else:
        res = optimize(pool, ham, ref, config, noisy=False, max_iter=budget)
        params = res.best_params
    state = apply_ansatz(ref, pool, params)
    energy = evaluate(ObjectiveSpec(ham, pool, ref), params)
    return PsiSD(state, pool, np.asarray(params, dtype=float), energy, res)


# ---------------------------------------------------------------- step 2


def step2_build_primary(
    ansatz: OrderedAnsatz,
    state: Statevector,
    config: ProtocolConfig,
    indexing: SpinOrbitalIndexing,
) -> tuple[OrderedAnsatz, list[Configuration]]:
    """Probability-ordered ansatz and its normalized determinant weights.

    The reference is never part of the returned configurations.
    """
    probs = state.probabilities()
    configs = []
    for f in ansatz.factors:
        if f.generator.is_scatterer:
            continue
        det = determinant_of(f.generator, indexing)
        configs.append(Configuration(det, indexing.n_spin, float(probs[det])))
    ordered = reorder_by_probability(
        ansatz, configs, config.prob_threshold, indexing, config.screen_singles
    )
    kept = {determinant_of(f.generator, indexing) for f in ordered.factors if not f.generator.is_scatterer}
    primary = [c for c in configs if c.bits in kept and c.bits != indexing.reference_bits]
    total = sum(c.probability for c in primary)
    if not ordered.factors or total <= 0.0:
        warnings.warn(
            "no operator survives the probability threshold; the primary subspace is empty",
            ProtocolDegenerateWarning,
            stacklevel=2,
        )
        return OrderedAnsatz(), []
    primary = [c.with_probability(c.probability / total) for c in primary]
    primary.sort(key=lambda c: (-c.probability, c.bits))
    return ordered, primary


# ------------------------------------------------------------- steps 3-6


def _factorization_record(fz: Factorization, n: int, probability: float) -> dict:
    return {
        "target": bits_to_string(fz.target, n),
        "double": fz.double.label(),
        "double_generator": fz.double.to_dict(),
        "scatterers": [s.to_dict() for s in fz.scatterers],
        "scatterer_labels": [s.label() for s in fz.scatterers],
        "measure": fz.measure,
        "measures": list(fz.measures),
        "coupling": fz.coupling,
        "probability": probability,
    }


def _loop(
    loop: LoopState,
    ints: MolecularIntegrals,
    occ: SpinOrbitalIndexing,
    config: ProtocolConfig,
    rank: int,
    trace: ProtocolTrace,
    checkpoint: str | Path | None = None,
) -> LoopState:
    eps = spin_orbital_energies(ints, occ)
    n = occ.n_spin
    filt = GenerationFilter(
        n_electrons=occ.n_electrons, ms2=occ.ms2, min_rank=rank, max_rank=rank,
        reference_bits=occ.reference_bits, n_spatial=occ.n_spatial,
    )
    while not loop.done and loop.iteration < config.max_iterations:
        it = loop.iteration
        data = loop.training.normalize()
        hyper = replace(config.rbm, seed=derive_seed(config.seed, rank, it, 0))
        loop.model = train_cd(loop.model, data, hyper)
        samples = generate(
            loop.model, config.n_samples, config.burn_in, derive_seed(config.seed, rank, it, 1),
            filt, data, config.n_chains,
        )
        new = [c for c in samples if c.bits not in loop.seen and c.bits not in loop.training]
        accepted, rejected = [], []
        for cfg in new:
            cands = factorization_candidates(cfg.bits, loop.ansatz, ints, occ, eps)
            if not cands:
                loop.seen[cfg.bits] = "no-pairing"
                rejected.append({"target": cfg.string, "reason": "no-pairing"})
                continue
            best = cands[0]
            if best.measure <= config.measure_threshold:
                loop.seen[cfg.bits] = "below-threshold"
                rejected.append({"target": cfg.string, "reason": "below-threshold", "measure": best.measure})
                continue
            p_double = loop.double_probability.get(best.double, 0.0)
            p = p_double * best.measure**2
            loop.ansatz = insert_scatterer(loop.ansatz, best.scatterers, best.double, best.measures)
            loop.training.add(cfg.bits, p)
            loop.seen[cfg.bits] = "accepted"
            accepted.append(_factorization_record(best, n, p))
        trace.append({
            "rank": rank,
            "iteration": it,
            "training_set": [[bits_to_string(b, n), p] for b, p in zip(data.bits, data.probabilities)],
            "generated": [[c.string, c.probability] for c in samples],
            "accepted": accepted,
            "rejected": rejected,
            "ansatz": [g.label() for g in loop.ansatz.generators],
        })
        loop.iteration += 1
        if not accepted:
            loop.done = True
        if checkpoint is not None:
            save_checkpoint(checkpoint, loop, trace, config)
    if not loop.done:
        trace.truncated = True
    return loop


def _initial_loop(ansatz: OrderedAnsatz, primary: list[Configuration], config: ProtocolConfig,
                  occ: SpinOrbitalIndexing, rank: int) -> LoopState:
    training = TrainingSet.from_configurations(primary, occ.n_spin, occ.reference_bits)
    by_det = {c.bits: c.probability for c in primary}
    dprob = {
        f.generator: by_det.get(determinant_of(f.generator, occ), 0.0)
        for f in ansatz.factors
        if not f.generator.is_scatterer and f.generator.rank == 2
    }
    hyper = replace(config.rbm, seed=derive_seed(config.seed, rank, 0, 2))
    model = RbmModel.initialize(occ.n_spin, hyper)
    return LoopState(ansatz, training, model, double_probability=dprob)


def run_ts_loop(
    ints: MolecularIntegrals,
    config: ProtocolConfig = ProtocolConfig(),
    indexing: SpinOrbitalIndexing | None = None,
    hamiltonian: PauliSum | None = None,
    psi_sd: PsiSD | None = None,
    checkpoint: str | Path | None = None,
) -> tuple[OrderedAnsatz, ProtocolTrace]:
    """Steps 1-6 targeting triples.  ``trace.truncated`` flags a hit iteration cap."""
    occ, ham = _context(ints, indexing, hamiltonian)
    if psi_sd is None:
        psi_sd = step1_prepare_psi_sd(ints, config, occ, ham)
    trace = ProtocolTrace(meta={"config": config.to_dict(), "n_spin": occ.n_spin,
                                "n_electrons": occ.n_electrons})
    trace.energies["psi_sd"] = psi_sd.energy
    ansatz, primary = step2_build_primary(psi_sd.ansatz, psi_sd.state, config, occ)
    trace.meta["primary"] = [[c.string, c.probability] for c in primary]
    trace.meta["primary_ansatz"] = [g.label() for g in ansatz.generators]
    if not primary or occ.n_electrons < 3:
        trace.append({"rank": 3, "iteration": 0, "training_set": trace.meta["primary"],
                      "generated": [], "accepted": [], "rejected": [],
                      "ansatz": trace.meta["primary_ansatz"]})
        return ansatz, trace
    loop = _initial_loop(ansatz, primary, config, occ, 3)
    loop = _loop(loop, ints, occ, config, 3, trace, checkpoint)
    return loop.ansatz, trace


def resume_ts_loop(
    path: str | Path, ints: MolecularIntegrals, indexing: SpinOrbitalIndexing | None = None,
    checkpoint: bool = True,
) -> tuple[OrderedAnsatz, ProtocolTrace]:
    """Continue a checkpointed loop; the result matches an uninterrupted run."""
    loop, trace, config = load_checkpoint(path)
    occ = SpinOrbitalIndexing.aufbau(ints) if indexing is None else indexing
    trace.truncated = False
    rank = trace.iterations[-1]["rank"] if trace.iterations else 3
    loop = _loop(loop, ints, occ, config, rank, trace, path if checkpoint else None)
    return loop.ansatz, trace


def save_checkpoint(path: str | Path, loop: LoopState, trace: ProtocolTrace, config: ProtocolConfig) -> None:
    payload = {"loop": loop.to_dict(), "trace": trace.to_dict(), "config": config.to_dict()}
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(payload))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[LoopState, ProtocolTrace, ProtocolConfig]:
    data = json.loads(Path(path).read_text())
    return (
        LoopState.from_dict(data["loop"]),
        ProtocolTrace.from_dict(data["trace"]),
        ProtocolConfig.from_dict(data["config"]),
    )


# ----------------------------------------------------------- final VQE


def warm_start_params(ansatz: OrderedAnsatz, source: OrderedAnsatz, params: np.ndarray) -> np.ndarray:
    """Copy parameters of shared generators; everything else starts at zero."""
    lookup = {k: float(t) for k, t in zip(source.keys, params)}
    return np.array([lookup.get(k, 0.0) for k in ansatz.keys], dtype=float)


def finalize_and_optimize(
    ansatz: OrderedAnsatz,
    ints: MolecularIntegrals,
    config: ProtocolConfig = ProtocolConfig(),
    indexing: SpinOrbitalIndexing | None = None,
    hamiltonian: PauliSum | None = None,
    psi_sd: PsiSD | None = None,
) -> tuple[float, np.ndarray, Statevector, OptimizerResult]:
    """VQE over every factor; zero init, or singles/doubles warm-started from ``psi_sd``."""
    occ, ham = _context(ints, indexing, hamiltonian)
    ref = prepare_reference(occ)
    init = None
    if config.warm_start and psi_sd is not None:
        init = warm_start_params(ansatz, psi_sd.ansatz, psi_sd.params)
    res = optimize(ansatz, ham, ref, config, init)
    if config.noise.noiseless:
        params, energy = res.best_params, res.best_energy
    else:
        params, energy = res.final_params, res.final_energy
    state = apply_ansatz(ref, ansatz, params)
    return float(energy), np.asarray(params, dtype=float), state, res


def run_tsqs_extension(
    ansatz: OrderedAnsatz,
    state: Statevector,
    ints: MolecularIntegrals,
    config: ProtocolConfig = ProtocolConfig(),
    indexing: SpinOrbitalIndexing | None = None,
    trace: ProtocolTrace | None = None,
) -> OrderedAnsatz:
    """Steps 2-6 again on an optimized triples ansatz, now targeting quadruples.

    Each quadruple is reached by a nested pair of scatterers on one double;
    its measure is the product of the two scatterer measures.
    """
    occ = SpinOrbitalIndexing.aufbau(ints) if indexing is None else indexing
    if occ.n_electrons < 4 or min(len(occ.occupied), len(occ.virtual)) < 4:
        return ansatz
    trace = ProtocolTrace() if trace is None else trace
    ordered, primary = step2_build_primary(ansatz, state, config, occ)
    if not primary:
        return ansatz
    probs = state.probabilities()
    extra = []
    for it in trace.iterations:
        for acc in it["accepted"]:
            bits = sum(1 << p for p, ch in enumerate(acc["target"]) if ch == "1")
            extra.append(Configuration(bits, occ.n_spin, float(probs[bits])))
    known = {c.bits for c in primary}
    weights = [c.with_probability(float(probs[c.bits])) for c in primary]
    weights += [c for c in extra if c.bits not in known and c.probability > 0]
    loop = _initial_loop(ordered, weights, config, occ, 4)
    loop = _loop(loop, ints, occ, config, 4, trace)
    return loop.ansatz


def overlap(state_a: Statevector, state_b: Statevector) -> float:
    """``|<a|b>|``."""
    return _overlap(state_a, state_b)


# ------------------------------------------------------------ drivers


def run_protocol(
    ints: MolecularIntegrals,
    config: ProtocolConfig = ProtocolConfig(),
    quadruples: bool = False,
    indexing: SpinOrbitalIndexing | None = None,
    hamiltonian: PauliSum | None = None,
) -> ProtocolResult:
    """Full construction and final optimization."""
    occ, ham = _context(ints, indexing, hamiltonian)
    psi_sd = step1_prepare_psi_sd(ints, config, occ, ham)
    ansatz, trace = run_ts_loop(ints, config, occ, ham, psi_sd)
    energy, params, state, res = finalize_and_optimize(ansatz, ints, config, occ, ham, psi_sd)
    trace.energies["ts"] = energy
    if quadruples:
        ext = run_tsqs_extension(ansatz, state, ints, config, occ, trace)
        if len(ext) != len(ansatz):
            source = PsiSD(state, ansatz, params, energy, res)
            ansatz = ext
            energy, params, state, res = finalize_and_optimize(ansatz, ints, config, occ, ham, source)
        trace.energies["tsqs"] = energy
    trace.energies["final"] = energy
    trace.meta["cnot_count"] = cnot_cost(ansatz, occ.n_spin).cnot_count
    return ProtocolResult(ansatz, energy, params, state, trace, psi_sd, res)


def conventional(
    ints: MolecularIntegrals,
    family: str,
    config: ProtocolConfig = ProtocolConfig(),
    indexing: SpinOrbitalIndexing | None = None,
    hamiltonian: PauliSum | None = None,
) -> tuple[OrderedAnsatz, OptimizerResult]:
    """Unscreened ``duccsd`` or ``duccsdt`` optimized from zero."""
    occ, ham = _context(ints, indexing, hamiltonian)
    rank = {"duccsd": 2, "duccsdt": 3}[family]
    ansatz = build_conventional(occ, rank)
    return ansatz, optimize(ansatz, ham, prepare_reference(occ), config)


__all__: list[Any] = [
    "ProtocolConfig", "ProtocolTrace", "PsiSD", "LoopState", "ProtocolResult",
    "step1_prepare_psi_sd", "step2_build_primary", "run_ts_loop", "resume_ts_loop",
    "finalize_and_optimize", "run_tsqs_extension", "overlap", "run_protocol", "conventional",
    "warm_start_params", "save_checkpoint", "load_checkpoint", "optimize", "derive_seed",
]
