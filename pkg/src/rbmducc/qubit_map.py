"""Pauli-string algebra and the Jordan-Wigner mapping.

Qubit ``q`` is spin orbital ``q``; in a basis index, bit ``q`` holds the
occupation of qubit ``q`` (``|1>`` = occupied).  A Pauli string is kept as a
pair of bit masks ``(x, z)``: qubit ``q`` carries X for ``(1,0)``, Z for
``(0,1)`` and Y for ``(1,1)``.  With ``Y = iXZ`` a string equals
``i^{#Y} X^x Z^z``, which makes products a few integer operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import InvalidGeneratorError
from .generators import Generator
from .integrals import MolecularIntegrals, SpinOrbitalIndexing

DROP_TOL = 1e-14
_I_POW = (1, 1j, -1, -1j)


def _popcount(v: int) -> int:
    return v.bit_count()


def _axes_to_masks(axes: str) -> tuple[int, int]:
    x = z = 0
    for q, ch in enumerate(axes):
        if ch in "XY":
            x |= 1 << q
        if ch in "ZY":
            z |= 1 << q
        if ch not in "IXYZ":
            raise ValueError(f"bad Pauli letter {ch!r} in {axes!r}")
    return x, z


def _masks_to_axes(x: int, z: int, n: int) -> str:
    return "".join("IXZY"[(x >> q & 1) | (z >> q & 1) << 1] for q in range(n))


def _mul_strings(x1: int, z1: int, x2: int, z2: int) -> tuple[int, int, complex]:
    x, z = x1 ^ x2, z1 ^ z2
    k = _popcount(x1 & z1) + _popcount(x2 & z2) - _popcount(x & z) + 2 * _popcount(z1 & x2)
    return x, z, _I_POW[k % 4]


@dataclass(frozen=True)
class PauliString:
    axes: str
    coefficient: complex

    @property
    def weight(self) -> int:
        return sum(ch != "I" for ch in self.axes)


class PauliSum:
    """Linear combination of Pauli strings on ``n_qubits`` qubits.

    Terms are deduplicated by axes and terms below ``DROP_TOL`` in magnitude
    are dropped.  Instances are treated as immutable.
    """

    __slots__ = ("n_qubits", "_terms", "_sparse")

    def __init__(self, n_qubits: int, terms: Mapping[tuple[int, int], complex] | None = None):
        self.n_qubits = int(n_qubits)
        self._terms = {k: complex(v) for k, v in (terms or {}).items() if abs(v) >= DROP_TOL}
        self._sparse = None

    # ---------------------------------------------------------- construction
    @classmethod
    def from_labels(cls, labels: Mapping[str, complex]) -> "PauliSum":
        labels = dict(labels)
        if not labels:
            raise ValueError("from_labels needs at least one term")
        n = len(next(iter(labels)))
        acc: dict[tuple[int, int], complex] = {}
        for axes, c in labels.items():
            if len(axes) != n:
                raise ValueError("inconsistent string lengths")
            key = _axes_to_masks(axes)
            acc[key] = acc.get(key, 0) + c
        return cls(n, acc)

    @classmethod
    def identity(cls, n_qubits: int, coefficient: complex = 1.0) -> "PauliSum":
        return cls(n_qubits, {(0, 0): coefficient})

    # -------------------------------------------------------------- algebra
    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        acc = dict(self._terms)
        for k, v in other._terms.items():
            acc[k] = acc.get(k, 0) + v
        return PauliSum(self.n_qubits, acc)

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-1.0) * other

    def __neg__(self) -> "PauliSum":
        return (-1.0) * self

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            self._check(other)
            acc: dict[tuple[int, int], complex] = {}
            for (x1, z1), c1 in self._terms.items():
                for (x2, z2), c2 in other._terms.items():
                    x, z, ph = _mul_strings(x1, z1, x2, z2)
                    acc[(x, z)] = acc.get((x, z), 0) + ph * c1 * c2
            return PauliSum(self.n_qubits, acc)
        return PauliSum(self.n_qubits, {k: other * v for k, v in self._terms.items()})

    __rmul__ = __mul__

    def dagger(self) -> "PauliSum":
        return PauliSum(self.n_qubits, {k: np.conj(v) for k, v in self._terms.items()})

    def _check(self, other: "PauliSum") -> None:
        if other.n_qubits != self.n_qubits:
            raise ValueError(f"qubit counts differ: {self.n_qubits} vs {other.n_qubits}")

    # --------------------------------------------------------------- access
    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, PauliSum) and self.n_qubits == other.n_qubits and self._terms == other._terms

    def __repr__(self) -> str:
        return f"PauliSum(n_qubits={self.n_qubits}, terms={len(self)})"

    def items(self):
        """``((xmask, zmask), coefficient)`` pairs in a fixed order."""
        return sorted(self._terms.items())

    @property
    def terms(self) -> list[PauliString]:
        return [PauliString(_masks_to_axes(x, z, self.n_qubits), c) for (x, z), c in self.items()]

    def coefficient(self, axes: str) -> complex:
        return self._terms.get(_axes_to_masks(axes), 0.0)

    @property
    def constant(self) -> float:
        return self._terms.get((0, 0), 0.0).real

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= tol for c in self._terms.values())

    def is_antihermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(c.real) <= tol for c in self._terms.values())

    def weights(self) -> list[int]:
        return [_popcount(x | z) for (x, z), _ in self.items()]

    # ----------------------------------------------------------- matrices
    def to_sparse(self) -> sp.csr_matrix:
        """Matrix in the computational basis (cached)."""
        if self._sparse is None:
            self._sparse = _build_sparse(self)
        return self._sparse

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.to_sparse() @ psi

    def format_lines(self) -> str:
        """Debug serialization, one ``coefficient AXES`` line per term."""
        lines = []
        for t in self.terms:
            c = t.coefficient
            if c.imag == 0.0:
                lines.append(f"{c.real:+.7f} {t.axes}")
            elif c.real == 0.0:
                lines.append(f"{c.imag:+.7f}i {t.axes}")
            else:
                lines.append(f"{c.real:+.7f}{c.imag:+.7f}i {t.axes}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def parse_lines(cls, text: str) -> "PauliSum":
        labels: dict[str, complex] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            coeff, axes = line.split()
            if coeff.endswith("i"):
                body = coeff[:-1]
                cut = max(body.rfind("+"), body.rfind("-"))
                if cut > 0:
                    value = complex(float(body[:cut]), float(body[cut:]))
                else:
                    value = 1j * float(body)
            else:
                value = complex(float(coeff))
            labels[axes] = labels.get(axes, 0) + value
        return cls.from_labels(labels)


def _build_sparse(op: PauliSum) -> sp.csr_matrix:
    n = op.n_qubits
    dim = 1 << n
    b = np.arange(dim, dtype=np.int64)
    by_x: dict[int, np.ndarray] = {}
    for (x, z), c in op.items():
        ny = _popcount(x & z)
        par = np.bitwise_count(b & z) & 1
        vals = c * _I_POW[ny % 4] * (1.0 - 2.0 * par)
        if x in by_x:
            by_x[x] = by_x[x] + vals
        else:
            by_x[x] = vals.astype(complex)
    rows, cols, data = [], [], []
    for x in sorted(by_x):
        vals = by_x[x]
        keep = vals != 0
        cols.append(b[keep])
        rows.append(b[keep] ^ x)
        data.append(vals[keep])
    if not data:
        return sp.csr_matrix((dim, dim), dtype=complex)
    m = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    m.sort_indices()
    return m


# ------------------------------------------------------------ Jordan-Wigner


@lru_cache(maxsize=None)
def _ladder(p: int, n: int, dagger: bool) -> PauliSum:
    below = (1 << p) - 1
    xp = 1 << p
    # a_p = Z..Z (X + iY)/2 ; a+_p = Z..Z (X - iY)/2 ;  Y = i X Z on qubit p
    # X term: x=xp, z=below ; Y term: x=xp, z=below|xp
    y_coeff = -0.5j if dagger else 0.5j
    return PauliSum(n, {(xp, below): 0.5, (xp, below | xp): y_coeff})


def jw_ladder(p: int, n: int, dagger: bool = False) -> PauliSum:
    if not 0 <= p < n:
        raise InvalidGeneratorError(f"mode {p} outside [0,{n})")
    return _ladder(p, n, dagger)


def jw_string(creations: Iterable[int], destructions: Iterable[int], n: int) -> PauliSum:
    """``a+_{c0} a+_{c1} ... a_{d1} a_{d0}`` as a PauliSum."""
    creations, destructions = list(creations), list(destructions)
    op = PauliSum.identity(n)
    for p in creations:
        op = op * jw_ladder(p, n, True)
    for p in reversed(destructions):
        op = op * jw_ladder(p, n, False)
    return op


def jw_generator(gen: Generator, n_spin: int) -> PauliSum:
    """Anti-hermitian qubit image of ``tau - tau^dagger``."""
    if gen.max_index >= n_spin:
        raise InvalidGeneratorError(f"{gen.label()} does not fit {n_spin} spin orbitals")
    return _jw_generator_cached(gen, n_spin)


@lru_cache(maxsize=4096)
def _jw_generator_cached(gen: Generator, n_spin: int) -> PauliSum:
    tau = jw_string(gen.creations, gen.destructions, n_spin)
    return tau - tau.dagger()


def jw_hamiltonian(ints: MolecularIntegrals, indexing: SpinOrbitalIndexing | None = None) -> PauliSum:
    """Qubit Hamiltonian ``E_core + sum h_pq a+p aq + sum_{p<q,r<s} <pq||rs> a+p a+q a_s a_r``."""
    n = ints.n_spin
    if indexing is not None and indexing.n_spin != n:
        raise ValueError("indexing does not match the integrals")
    h = ints.h1_spin
    g = ints.asym_spin
    acc: dict[tuple[int, int], complex] = {(0, 0): ints.core_energy}

    def add(op: PauliSum, scale: float) -> None:
        for k, v in op._terms.items():
            acc[k] = acc.get(k, 0) + scale * v

    for p in range(n):
        for q in range(n):
            if h[p, q] != 0.0:
                add(jw_string((p,), (q,), n), h[p, q])
    for p in range(n):
        for q in range(p + 1, n):
            for r in range(n):
                for s in range(r + 1, n):
                    v = g[p, q, r, s]
                    if v != 0.0:
                        add(jw_string((p, q), (r, s), n), v)
    worst = max((abs(v.imag) for v in acc.values()), default=0.0)
    if worst > 1e-10:
        raise ValueError(f"Hamiltonian has imaginary Pauli coefficients ({worst:.2e})")
    return PauliSum(n, {k: v.real for k, v in acc.items()})


def pauli_mutually_commute(op: PauliSum) -> bool:
    keys = list(op._terms)
    for a in range(len(keys)):
        x1, z1 = keys[a]
        for b in range(a + 1, len(keys)):
            x2, z2 = keys[b]
            if (_popcount(x1 & z2) + _popcount(z1 & x2)) & 1:
                return False
    return True


def number_operator(n: int) -> PauliSum:
    op = PauliSum(n)
    for p in range(n):
        op = op + jw_string((p,), (p,), n)
    return op


def sz_operator(n_spatial: int) -> PauliSum:
    """Twice the total S_z (alpha block minus beta block)."""
    n = 2 * n_spatial
    op = PauliSum(n)
    for p in range(n):
        op = op + (1.0 if p < n_spatial else -1.0) * jw_string((p,), (p,), n)
    return op
