"""Brute-force reference computations.

Everything here is built from elementary 2x2 ladder matrices and Kronecker
products, independent of the Pauli algebra in :mod:`rbmducc.qubit_map`.
Operators are held as scipy sparse matrices over the full ``2**n`` space
(bit ``q`` of a basis index is mode ``q``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidGeneratorError, ResourceError
from .generators import Generator
from .integrals import MolecularIntegrals, SpinOrbitalIndexing

MAX_SPIN_ORBITALS = 14
DENSE_SECTOR_LIMIT = 2500
PROPORTIONALITY_TOL = 1e-10

_ID = sp.identity(2, format="csr", dtype=complex)
_Z = sp.csr_matrix(np.diag([1.0, -1.0]).astype(complex))
_LOWER = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex))  # |0><1|


@dataclass
class DenseOperator:
    matrix: sp.csr_matrix
    n_qubits: int

    def __post_init__(self) -> None:
        dim = 1 << self.n_qubits
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match {self.n_qubits} qubits")

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def is_hermitian(self) -> bool:
        return _norm(self.matrix - self.matrix.getH()) <= 1e-12 * max(1.0, _norm(self.matrix))

    @property
    def is_antihermitian(self) -> bool:
        return _norm(self.matrix + self.matrix.getH()) <= 1e-12 * max(1.0, _norm(self.matrix))

    def __matmul__(self, other: "DenseOperator") -> "DenseOperator":
        return DenseOperator((self.matrix @ other.matrix).tocsr(), self.n_qubits)

    def __sub__(self, other: "DenseOperator") -> "DenseOperator":
        return DenseOperator((self.matrix - other.matrix).tocsr(), self.n_qubits)


def _norm(m) -> float:
    return float(np.sqrt(np.sum(np.abs(m.data) ** 2))) if sp.issparse(m) else float(np.linalg.norm(m))


def _guard(n: int) -> None:
    if n > MAX_SPIN_ORBITALS:
        raise ResourceError(f"{n} spin orbitals exceed the oracle limit of {MAX_SPIN_ORBITALS}")


def _kron_chain(ops_low_to_high: Sequence[sp.spmatrix]) -> sp.csr_matrix:
    out = sp.identity(1, format="csr", dtype=complex)
    for op in ops_low_to_high:
        out = sp.kron(op, out, format="csr")
    return out


@lru_cache(maxsize=256)
def annihilator(p: int, n: int) -> sp.csr_matrix:
    """``a_p`` with a Z string on modes below ``p``."""
    _guard(n)
    if not 0 <= p < n:
        raise InvalidGeneratorError(f"mode {p} outside [0,{n})")
    ops = [_Z] * p + [_LOWER] + [_ID] * (n - p - 1)
    return _kron_chain(ops)


def creator(p: int, n: int) -> sp.csr_matrix:
    return annihilator(p, n).getH().tocsr()


def dense_from_fermion_string(
    creations: Sequence[int], destructions: Sequence[int], n_spin: int
) -> DenseOperator:
    """``a+_{c0} a+_{c1} ... a_{d1} a_{d0}`` as a full matrix."""
    idx = list(creations) + list(destructions)
    if len(set(creations)) != len(creations) or len(set(destructions)) != len(destructions):
        raise InvalidGeneratorError(f"index collision in {idx}")
    m = sp.identity(1 << n_spin, format="csr", dtype=complex)
    for p in creations:
        m = m @ creator(p, n_spin)
    for p in reversed(list(destructions)):
        m = m @ annihilator(p, n_spin)
    return DenseOperator(m.tocsr(), n_spin)


def dense_generator(gen: Generator, n_spin: int) -> DenseOperator:
    tau = dense_from_fermion_string(gen.creations, gen.destructions, n_spin).matrix
    return DenseOperator((tau - tau.getH()).tocsr(), n_spin)


def fermionic_hamiltonian(ints: MolecularIntegrals) -> DenseOperator:
    """``E_core + sum h_pq a+p aq + 1/2 sum <pq|rs> a+p a+q a_s a_r``."""
    n = ints.n_spin
    _guard(n)
    dim = 1 << n
    h = ints.h1_spin
    g = ints.eri_spin
    H = ints.core_energy * sp.identity(dim, format="csr", dtype=complex)
    a = [annihilator(p, n) for p in range(n)]
    ad = [creator(p, n) for p in range(n)]
    for p in range(n):
        for q in range(n):
            if h[p, q] != 0.0:
                H = H + h[p, q] * (ad[p] @ a[q])
    pairs_lo = {(r, s): (a[s] @ a[r]).tocsr() for r in range(n) for s in range(n) if r != s}
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            inner = None
            for (r, s), m in pairs_lo.items():
                v = g[p, q, r, s]
                if v != 0.0:
                    inner = v * m if inner is None else inner + v * m
            if inner is not None:
                H = H + 0.5 * (ad[p] @ ad[q] @ inner)
    return DenseOperator(H.tocsr(), n)


def sector_indices(n_spin: int, n_electrons: int, ms2: int | None = None) -> np.ndarray:
    n_spatial = n_spin // 2
    b = np.arange(1 << n_spin, dtype=np.int64)
    keep = np.bitwise_count(b) == n_electrons
    if ms2 is not None:
        alpha = np.bitwise_count(b & ((1 << n_spatial) - 1)).astype(np.int64)
        keep &= 2 * alpha - n_electrons == ms2
    return b[keep]


def fci_ground(
    ints: MolecularIntegrals, indexing: SpinOrbitalIndexing | None = None,
    hamiltonian: DenseOperator | None = None,
) -> tuple[float, np.ndarray]:
    """Lowest eigenpair in the particle-number / S_z sector of the reference.

    The returned vector lives in the full ``2**n`` space.
    """
    if indexing is None:
        indexing = SpinOrbitalIndexing.aufbau(ints)
    n = ints.n_spin
    _guard(n)
    H = (hamiltonian or fermionic_hamiltonian(ints)).matrix
    idx = sector_indices(n, indexing.n_electrons, indexing.ms2)
    sub = H[idx][:, idx]
    if idx.shape[0] <= DENSE_SECTOR_LIMIT:
        w, v = np.linalg.eigh(sub.toarray())
        e, vec = float(w[0]), v[:, 0]
    else:
        w, v = spla.eigsh(sub, k=1, which="SA", tol=1e-12)
        e, vec = float(w[0]), v[:, 0]
    vec = vec / np.linalg.norm(vec)
    resid = np.linalg.norm(sub @ vec - e * vec)
    if resid > 1e-9:
        raise ArithmeticError(f"FCI residual {resid:.2e} above 1e-9")
    # fix the phase so the largest component is real positive
    k = int(np.argmax(np.abs(vec)))
    vec = vec * (abs(vec[k]) / vec[k])
    full = np.zeros(1 << n, dtype=complex)
    full[idx] = vec
    return e, full


def commutator(a: DenseOperator, b: DenseOperator) -> DenseOperator:
    return DenseOperator((a.matrix @ b.matrix - b.matrix @ a.matrix).tocsr(), a.n_qubits)


def proportionality(op: DenseOperator, target: DenseOperator, tol: float = PROPORTIONALITY_TOL):
    """Scalar ``lam`` with ``op = lam * target`` within ``tol``, or ``None``."""
    t = target.matrix
    tt = _norm(t) ** 2
    if tt == 0.0:
        return None
    lam = complex((t.multiply(op.matrix.conj())).sum().conjugate() / tt)
    resid = _norm(op.matrix - lam * t)
    if abs(lam) < tol or resid > tol * max(1.0, np.sqrt(tt)):
        return None
    if abs(lam.imag) < tol:
        return float(lam.real)
    return lam


def verify_factorization(
    scatterers: Generator | Sequence[Generator],
    double: Generator,
    target: Generator,
    n_spin: int,
):
    """Coefficient ``lam`` with ``[s_k, ... [s_1, kappa_D]] = lam * kappa_T``, else ``None``."""
    if isinstance(scatterers, Generator):
        scatterers = [scatterers]
    acc = dense_generator(double, n_spin)
    for s in scatterers:
        acc = commutator(dense_generator(s, n_spin), acc)
    return proportionality(acc, dense_generator(target, n_spin))


def brute_force_mp2(ints: MolecularIntegrals, indexing: SpinOrbitalIndexing,
                    hamiltonian: DenseOperator | None = None,
                    energies: np.ndarray | None = None) -> float:
    """Second-order energy ``sum_D |<D|H|0>|^2 / (E_0 - E_D)`` over doubles.

    Matrix elements come from the dense Hamiltonian; denominators from the
    orbital energies.
    """
    from .integrals import spin_orbital_energies

    H = (hamiltonian or fermionic_hamiltonian(ints)).matrix
    eps = spin_orbital_energies(ints, indexing) if energies is None else energies
    ref = indexing.reference_bits
    col = H[:, ref].toarray().ravel()
    total = 0.0
    for det in np.flatnonzero(np.abs(col) > 0):
        det = int(det)
        if det.bit_count() != ref.bit_count():
            continue
        holes = [p for p in indexing.occupied if not det >> p & 1]
        if len(holes) != 2:
            continue
        parts = [p for p in indexing.virtual if det >> p & 1]
        delta = eps[holes].sum() - eps[parts].sum()
        total += abs(col[det]) ** 2 / delta
    return float(total)


def golden_values(ints: MolecularIntegrals) -> dict:
    from .integrals import hf_energy, mp2_energy

    occ = SpinOrbitalIndexing.aufbau(ints)
    e, _ = fci_ground(ints, occ)
    return {
        "fci_energy": e,
        "hf_energy": hf_energy(ints, occ),
        "mp2_energy": mp2_energy(ints, occ),
    }


def write_golden(path: str | Path, values: dict) -> None:
    Path(path).write_text(json.dumps(values, indent=2, sort_keys=True) + "\n")


def read_golden(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
