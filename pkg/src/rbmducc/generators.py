"""Fermionic anti-hermitian generators and their action on occupation bit-strings.

A generator ``kappa = tau - tau^dagger`` is stored through the index lists of
``tau``.  For creations ``(c0, c1, ...)`` and destructions ``(d0, d1, ...)``
the operator string is

    tau = a+_{c0} a+_{c1} ... a_{d1} a_{d0}

so the first destruction acts first on a ket.  Occupation bit ``p`` of a
basis index is spin orbital ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidGeneratorError

EXCITATION = "excitation"
SCATTERER = "scatterer"


@dataclass(frozen=True)
class Generator:
    kind: str
    creations: tuple[int, ...]
    destructions: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.kind not in (EXCITATION, SCATTERER):
            raise InvalidGeneratorError(f"unknown generator kind {self.kind!r}")
        object.__setattr__(self, "creations", tuple(int(p) for p in self.creations))
        object.__setattr__(self, "destructions", tuple(int(p) for p in self.destructions))
        if len(self.creations) != len(self.destructions) or not self.creations:
            raise InvalidGeneratorError(
                f"need equal, nonzero numbers of creations and destructions: {self}"
            )
        idx = self.creations + self.destructions
        if len(set(idx)) != len(idx):
            raise InvalidGeneratorError(f"repeated orbital index in {self}")
        if min(idx) < 0:
            raise InvalidGeneratorError(f"negative orbital index in {self}")
        if self.kind == SCATTERER and len(self.creations) != 2:
            raise InvalidGeneratorError("scatterers are two-body operators")

    @classmethod
    def excitation(cls, holes: Sequence[int], particles: Sequence[int]) -> "Generator":
        """``a+_{particles} ... a_{holes}`` minus its adjoint."""
        return cls(EXCITATION, tuple(particles), tuple(holes))

    @classmethod
    def scatterer(cls, creations: Sequence[int], destructions: Sequence[int]) -> "Generator":
        return cls(SCATTERER, tuple(creations), tuple(destructions))

    @property
    def order(self) -> int:
        """Number of creation (equivalently destruction) operators."""
        return len(self.creations)

    @property
    def rank(self) -> int:
        """Effective particle-hole rank; scatterers count as one."""
        return 1 if self.kind == SCATTERER else len(self.creations)

    @property
    def is_scatterer(self) -> bool:
        return self.kind == SCATTERER

    @property
    def creation_mask(self) -> int:
        return _mask(self.creations)

    @property
    def destruction_mask(self) -> int:
        return _mask(self.destructions)

    @property
    def max_index(self) -> int:
        return max(self.creations + self.destructions)

    def sort_key(self) -> tuple:
        return (self.kind != EXCITATION, self.destructions, self.creations)

    def label(self) -> str:
        head = "S" if self.is_scatterer else "K"
        d = ",".join(map(str, self.destructions))
        c = ",".join(map(str, self.creations))
        return f"{head}[{d}->{c}]"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "creations": list(self.creations),
            "destructions": list(self.destructions),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Generator":
        return cls(data["kind"], tuple(data["creations"]), tuple(data["destructions"]))

    def check_pattern(self, occupied: Iterable[int]) -> None:
        """Validate index classes against a reference occupation.

        Excitations move occupied to virtual.  Scatterers follow one of two
        patterns: two occupied destroyed with one virtual and one occupied
        created, or one occupied and one virtual destroyed with two virtuals
        created.
        """
        occ = set(occupied)
        n_occ_d = sum(p in occ for p in self.destructions)
        n_occ_c = sum(p in occ for p in self.creations)
        if self.kind == EXCITATION:
            if n_occ_d != self.order or n_occ_c != 0:
                raise InvalidGeneratorError(
                    f"{self.label()} is not a particle-hole excitation of the reference"
                )
            return
        if (n_occ_d, n_occ_c) not in ((2, 1), (1, 0)):
            raise InvalidGeneratorError(f"{self.label()} matches no scatterer pattern")


def _mask(indices: Iterable[int]) -> int:
    m = 0
    for p in indices:
        m |= 1 << p
    return m


def _parity_below(bits: int, p: int) -> int:
    return (bits & ((1 << p) - 1)).bit_count() & 1


def apply_string(bits: int, creations: Sequence[int], destructions: Sequence[int]):
    """Act with ``a+_{c0}..a+_{ck} a_{dk}..a_{d0}`` on basis state ``bits``.

    Returns ``(new_bits, sign)`` or ``None`` when the result vanishes.
    """
    sign = 1
    for p in destructions:
        if not bits >> p & 1:
            return None
        if _parity_below(bits, p):
            sign = -sign
        bits ^= 1 << p
    for p in reversed(creations):
        if bits >> p & 1:
            return None
        if _parity_below(bits, p):
            sign = -sign
        bits |= 1 << p
    return bits, sign


def act_on_reference(gen: Generator, reference_bits: int) -> tuple[int, int] | None:
    """``tau |reference>`` as ``(bits, sign)``; the adjoint part annihilates it."""
    return apply_string(reference_bits, gen.creations, gen.destructions)


def bits_to_string(bits: int, n: int) -> str:
    """Occupation string with spin orbital 0 first."""
    return "".join("1" if bits >> p & 1 else "0" for p in range(n))


def string_to_bits(s: str) -> int:
    return sum(1 << p for p, ch in enumerate(s) if ch == "1")


@dataclass(frozen=True)
class Configuration:
    """Occupation bit-string of ``n`` spin orbitals with a probability weight."""

    bits: int
    n: int
    probability: float = 0.0

    @property
    def string(self) -> str:
        return bits_to_string(self.bits, self.n)

    @property
    def n_particles(self) -> int:
        return self.bits.bit_count()

    def ms2(self, n_spatial: int) -> int:
        alpha = (self.bits & ((1 << n_spatial) - 1)).bit_count()
        return 2 * alpha - self.n_particles

    def vector(self) -> np.ndarray:
        return np.array([self.bits >> p & 1 for p in range(self.n)], dtype=float)

    def with_probability(self, p: float) -> "Configuration":
        return Configuration(self.bits, self.n, float(p))

    @classmethod
    def from_string(cls, s: str, probability: float = 0.0) -> "Configuration":
        return cls(string_to_bits(s), len(s), probability)
