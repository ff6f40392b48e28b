"""Ordered disentangled UCC ansatzes, scatterer factorization and insertion.

An :class:`OrderedAnsatz` lists its factors in application order: factor 0
acts first on the reference determinant.  Excitations appear in
nonincreasing rank (doubles block, then singles block), and every scatterer
sits right after its paired double or after another scatterer paired to the
same double.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import AmbiguityError, DegeneracyError, PairingError, RankError, SectorError
from .generators import Configuration, Generator, act_on_reference, apply_string
from .integrals import (
    MolecularIntegrals,
    SpinOrbitalIndexing,
    mp2_amplitude,
    scatterer_mp2_measure,
    spin_orbital_energies,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnsatzFactor:
    generator: Generator
    paired_with: Generator | None = None
    probability: float | None = None
    measure: float | None = None


@dataclass(frozen=True)
class OrderedAnsatz:
    factors: tuple[AnsatzFactor, ...] = ()
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "factors", tuple(self.factors))
        self.validate()

    def __len__(self) -> int:
        return len(self.factors)

    def __iter__(self):
        return iter(self.factors)

    @property
    def generators(self) -> list[Generator]:
        return [f.generator for f in self.factors]

    @property
    def keys(self) -> list[tuple[Generator, Generator | None]]:
        """``(generator, paired double)`` per factor; unique within an ansatz."""
        return [(f.generator, f.paired_with) for f in self.factors]

    @property
    def n_parameters(self) -> int:
        return len(self.factors)

    @property
    def pairing(self) -> dict[int, int]:
        """Scatterer slot -> slot of the double it multiplies."""
        index = {f.generator: k for k, f in enumerate(self.factors) if f.paired_with is None}
        return {k: index[f.paired_with] for k, f in enumerate(self.factors) if f.paired_with is not None}

    def slot_of(self, gen: Generator, paired_with: Generator | None = None) -> int:
        for k, f in enumerate(self.factors):
            if f.generator == gen and f.paired_with == paired_with:
                return k
        raise KeyError(gen.label())

    def count(self, kind: str | None = None, rank: int | None = None) -> int:
        return sum(
            1 for g in self.generators
            if (kind is None or g.kind == kind) and (rank is None or (not g.is_scatterer and g.rank == rank))
        )

    @property
    def scatterers(self) -> list[Generator]:
        return [g for g in self.generators if g.is_scatterer]

    def validate(self) -> None:
        seen: set[tuple] = set()
        last_rank = None
        group: Generator | None = None
        for f in self.factors:
            g = f.generator
            if (g, f.paired_with) in seen:
                raise ValueError(f"duplicate factor {g.label()}")
            seen.add((g, f.paired_with))
            if g.is_scatterer:
                if f.paired_with is None or f.paired_with != group:
                    raise PairingError(f"scatterer {g.label()} is not adjacent to its paired double")
                continue
            if f.paired_with is not None:
                raise PairingError(f"excitation {g.label()} cannot be paired")
            if last_rank is not None and g.rank > last_rank:
                raise ValueError("excitation blocks must be in nonincreasing rank order")
            last_rank = g.rank
            group = g if g.rank >= 2 else None

    def to_dict(self) -> dict:
        index = {f.generator: k for k, f in enumerate(self.factors) if f.paired_with is None}
        return {
            "factors": [
                {
                    "generator": f.generator.to_dict(),
                    "paired_with": None if f.paired_with is None else index[f.paired_with],
                    "probability": f.probability,
                    "measure": f.measure,
                }
                for f in self.factors
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OrderedAnsatz":
        gens = [Generator.from_dict(f["generator"]) for f in data["factors"]]
        factors = []
        for g, f in zip(gens, data["factors"]):
            pw = None if f["paired_with"] is None else gens[f["paired_with"]]
            factors.append(AnsatzFactor(g, pw, f.get("probability"), f.get("measure")))
        return cls(tuple(factors))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "OrderedAnsatz":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_generators(cls, gens: Iterable[Generator]) -> "OrderedAnsatz":
        return cls(tuple(AnsatzFactor(g) for g in gens))


# ------------------------------------------------------------------ pools


def _spin(p: int, n_spatial: int) -> int:
    return 1 if p < n_spatial else -1


def enumerate_excitations(indexing: SpinOrbitalIndexing, rank: int) -> list[Generator]:
    """All S_z-conserving particle-hole excitations of the given rank, lexicographic."""
    n = indexing.n_spatial
    out = []
    for holes in itertools.combinations(indexing.occupied, rank):
        s_h = sum(_spin(p, n) for p in holes)
        for parts in itertools.combinations(indexing.virtual, rank):
            if sum(_spin(p, n) for p in parts) == s_h:
                out.append(Generator.excitation(holes, parts))
    return out


def build_duccsd_pool(
    indexing: SpinOrbitalIndexing,
    ints: MolecularIntegrals,
    mp2_threshold: float | None,
    energies: np.ndarray | None = None,
) -> OrderedAnsatz:
    """Singles plus doubles whose MP2 amplitude magnitude exceeds the threshold.

    ``mp2_threshold=None`` keeps every spin-allowed double.  The doubles
    block precedes the singles block; both are lexicographic.
    """
    if mp2_threshold is not None and mp2_threshold < 0:
        raise ValueError("threshold must be nonnegative")
    singles = enumerate_excitations(indexing, 1)
    doubles = enumerate_excitations(indexing, 2)
    if mp2_threshold is not None:
        eps = spin_orbital_energies(ints, indexing) if energies is None else energies
        kept = []
        for d in doubles:
            try:
                t = mp2_amplitude(ints, indexing, d.destructions, d.creations, eps)
            except DegeneracyError:
                log.warning("degenerate MP2 denominator for %s; screened out", d.label())
                continue
            if abs(t) > mp2_threshold:
                kept.append(AnsatzFactor(d, measure=abs(t)))
        dfactors = kept
    else:
        dfactors = [AnsatzFactor(d) for d in doubles]
    return OrderedAnsatz(tuple(dfactors) + tuple(AnsatzFactor(s) for s in singles))


def build_conventional(indexing: SpinOrbitalIndexing, max_rank: int) -> OrderedAnsatz:
    """Unscreened pool of all S_z-conserving excitations up to ``max_rank``.

    Higher ranks are applied first: triples, then doubles, then singles.
    """
    gens: list[Generator] = []
    for r in range(max_rank, 0, -1):
        gens.extend(enumerate_excitations(indexing, r))
    return OrderedAnsatz.from_generators(gens)


# ------------------------------------------------------- probability order


def determinant_of(gen: Generator, indexing: SpinOrbitalIndexing) -> int:
    hit = act_on_reference(gen, indexing.reference_bits)
    if hit is None:
        raise ValueError(f"{gen.label()} annihilates the reference")
    return hit[0]


def reorder_by_probability(
    ansatz: OrderedAnsatz,
    configs: Sequence[Configuration],
    prob_threshold: float,
    indexing: SpinOrbitalIndexing,
    screen_singles: bool = True,
) -> OrderedAnsatz:
    """Sort each excitation block by descending determinant probability.

    Operators whose determinant probability falls below ``prob_threshold``
    are removed (singles only when ``screen_singles``).  Ties are broken
    lexicographically on ``(destructions, creations)``.  Scatterers travel
    with their paired double.
    """
    prob = {c.bits: c.probability for c in configs}
    owner: dict[int, Generator] = {}
    groups: dict[Generator, list[AnsatzFactor]] = {}
    heads: list[AnsatzFactor] = []
    for f in ansatz.factors:
        if f.generator.is_scatterer:
            groups[f.paired_with].append(f)
            continue
        det = determinant_of(f.generator, indexing)
        if det in owner:
            raise AmbiguityError(
                f"{f.generator.label()} and {owner[det].label()} map to the same determinant"
            )
        owner[det] = f.generator
        heads.append(replace(f, probability=float(prob.get(det, 0.0))))
        groups[f.generator] = []
    kept = [
        h for h in heads
        if h.probability >= prob_threshold or (h.generator.rank == 1 and not screen_singles)
    ]
    kept.sort(key=lambda h: (-h.generator.rank, -h.probability, h.generator.sort_key()))
    out: list[AnsatzFactor] = []
    for h in kept:
        out.append(h)
        out.extend(groups[h.generator])
    return OrderedAnsatz(tuple(out))


def excitation_rank(config: Configuration | int, reference: Configuration | int) -> int:
    c = config.bits if isinstance(config, Configuration) else int(config)
    r = reference.bits if isinstance(reference, Configuration) else int(reference)
    if c.bit_count() != r.bit_count():
        raise SectorError(f"particle numbers differ: {c.bit_count()} vs {r.bit_count()}")
    return (r & ~c).bit_count()


# ----------------------------------------------------------- factorization


@dataclass(frozen=True)
class Factorization:
    """A high-rank determinant reached as nested scatterers on an ansatz double.

    ``scatterers`` are in application order (innermost commutator first).
    ``coupling`` is the sign relating the nested commutator to the target
    excitation generator with ascending index order.
    """

    target: int
    double: Generator
    scatterers: tuple[Generator, ...]
    measure: float
    coupling: int
    measures: tuple[float, ...] = ()

    def target_generator(self, indexing: SpinOrbitalIndexing) -> Generator:
        return target_excitation(self.target, indexing)


def target_excitation(bits: int, indexing: SpinOrbitalIndexing) -> Generator:
    ref = indexing.reference_bits
    holes = tuple(p for p in indexing.occupied if not bits >> p & 1)
    parts = tuple(p for p in indexing.virtual if bits >> p & 1)
    if bits.bit_count() != ref.bit_count():
        raise SectorError("target has the wrong particle number")
    return Generator.excitation(holes, parts)


def _scatterer_step(src_h: frozenset, src_p: frozenset, dst_h: frozenset, dst_p: frozenset):
    """Scatterer taking excitation (src_h -> src_p) to (dst_h -> dst_p), or None.

    Two patterns raise the rank by one: a created hole ``l`` of the source is
    refilled while two new holes open and one particle is added, or a source
    particle ``e`` is scattered into two new particles while one hole opens.
    """
    if len(dst_h) != len(src_h) + 1:
        return None
    if src_p <= dst_p and len(src_h & dst_h) == len(src_h) - 1:
        (l,) = src_h - dst_h
        new_h = sorted(dst_h - src_h)
        (c,) = dst_p - src_p
        if len(new_h) != 2:
            return None
        return Generator.scatterer(sorted((c, l)), new_h)
    if src_h <= dst_h and len(src_p & dst_p) == len(src_p) - 1:
        (e,) = src_p - dst_p
        (k,) = dst_h - src_h
        new_p = sorted(dst_p - src_p)
        if len(new_p) != 2:
            return None
        return Generator.scatterer(new_p, sorted((k, e)))
    return None


def _hp(gen: Generator) -> tuple[frozenset, frozenset]:
    return frozenset(gen.destructions), frozenset(gen.creations)


def _sign_chain(double: Generator, scatterers: Sequence[Generator],
                target: Generator, indexing: SpinOrbitalIndexing) -> int:
    """Sign of the nested commutator acting on the reference relative to the target."""
    ref = indexing.reference_bits
    hit = act_on_reference(double, ref)
    bits, sign = hit
    for s in scatterers:
        nxt = apply_string(bits, s.creations, s.destructions)
        if nxt is None:
            raise ValueError(f"{s.label()} does not connect")
        bits, sg = nxt
        sign *= sg
    tb, ts = act_on_reference(target, ref)
    if tb != bits:
        raise ValueError("chain does not reach the target")
    return sign * ts


def factorization_candidates(
    target: Configuration | int,
    ansatz: OrderedAnsatz,
    ints: MolecularIntegrals,
    indexing: SpinOrbitalIndexing,
    energies: np.ndarray | None = None,
) -> list[Factorization]:
    """Every (double, scatterer chain) reaching ``target``, best first."""
    bits = target.bits if isinstance(target, Configuration) else int(target)
    rank = excitation_rank(bits, indexing.reference_bits)
    if rank < 3:
        raise RankError(f"target rank {rank} < 3 needs no scatterer")
    eps = spin_orbital_energies(ints, indexing) if energies is None else energies
    tgt = target_excitation(bits, indexing)
    th, tp = _hp(tgt)
    cache: dict[Generator, float] = {}

    def measure(s: Generator) -> float:
        if s not in cache:
            try:
                cache[s] = scatterer_mp2_measure(ints, indexing, s, eps)
            except DegeneracyError:
                log.warning("degenerate scatterer denominator for %s; measure set to 0", s.label())
                cache[s] = 0.0
        return cache[s]

    out: list[Factorization] = []
    for d in ansatz.generators:
        if d.is_scatterer or d.rank != 2:
            continue
        dh, dp = _hp(d)
        chains: list[tuple[Generator, ...]] = []
        if rank == 3:
            s = _scatterer_step(dh, dp, th, tp)
            if s is not None:
                chains.append((s,))
        else:
            chains.extend(_nested_chains(dh, dp, th, tp, rank))
        for chain in chains:
            ms = tuple(measure(s) for s in chain)
            lam = _sign_chain(d, chain, tgt, indexing)
            out.append(Factorization(bits, d, chain, float(np.prod(ms)), lam, ms))
    out.sort(key=lambda f: (-f.measure, f.double.sort_key(), [s.sort_key() for s in f.scatterers]))
    return out


def _nested_chains(dh, dp, th, tp, rank):
    """Scatterer sequences raising a double to ``rank`` one step at a time."""
    frontier = [((), dh, dp)]
    for step_rank in range(3, rank + 1):
        nxt = []
        for chain, h, p in frontier:
            if step_rank == rank:
                s = _scatterer_step(h, p, th, tp)
                if s is not None:
                    nxt.append((chain + (s,), th, tp))
                continue
            for mid_h in itertools.combinations(sorted(h | th), step_rank):
                for mid_p in itertools.combinations(sorted(p | tp), step_rank):
                    mh, mp = frozenset(mid_h), frozenset(mid_p)
                    if not (mh <= th | h and mp <= tp | p):
                        continue
                    s = _scatterer_step(h, p, mh, mp)
                    if s is not None:
                        nxt.append((chain + (s,), mh, mp))
        frontier = nxt
    return [c for c, h, p in frontier if h == th and p == tp]


def factorize_high_rank(
    target: Configuration | int,
    ansatz: OrderedAnsatz,
    ints: MolecularIntegrals,
    indexing: SpinOrbitalIndexing,
    measure_threshold: float,
    energies: np.ndarray | None = None,
) -> Factorization | None:
    """Best factorization whose scatterer measure product exceeds the threshold."""
    cands = factorization_candidates(target, ansatz, ints, indexing, energies)
    if not cands or cands[0].measure <= measure_threshold:
        return None
    return cands[0]


def insert_scatterer(
    ansatz: OrderedAnsatz,
    scatterers: Sequence[Generator] | Generator,
    paired_double: int | Generator,
    measures: Sequence[float] | None = None,
) -> OrderedAnsatz:
    """Place scatterers right after the paired double's group.

    Later insertions to the same double are applied after earlier ones; a
    scatterer already attached to that double is not added twice.
    """
    if isinstance(scatterers, Generator):
        scatterers = [scatterers]
    factors = list(ansatz.factors)
    slot = ansatz.slot_of(paired_double) if isinstance(paired_double, Generator) else int(paired_double)
    if not 0 <= slot < len(factors):
        raise PairingError(f"slot {slot} outside the ansatz")
    dbl = factors[slot].generator
    if dbl.is_scatterer or dbl.rank != 2:
        raise PairingError(f"{dbl.label()} is not a double excitation; scatterers pair with doubles only")
    end = slot + 1
    while end < len(factors) and factors[end].paired_with == dbl:
        end += 1
    present = {f.generator for f in factors[slot + 1:end]}
    new = [
        AnsatzFactor(s, paired_with=dbl, measure=None if measures is None else float(measures[k]))
        for k, s in enumerate(scatterers)
        if s not in present
    ]
    for s in scatterers:
        if not s.is_scatterer:
            raise PairingError(f"{s.label()} is not a scatterer")
    return OrderedAnsatz(tuple(factors[:end] + new + factors[end:]))
