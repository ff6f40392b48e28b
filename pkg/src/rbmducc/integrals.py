"""FCIDUMP ingestion, spin-orbital expansion and MP2 measures.

Spin orbitals use block ordering: alpha spatial orbital ``p`` is spin orbital
``p`` and beta spatial orbital ``p`` is spin orbital ``p + n_spatial``.
Two-electron integrals are stored in chemists' notation ``(pq|rs)`` over
spatial orbitals; antisymmetrized physicists' integrals over spin orbitals
are built on first use.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConsistencyError, DegeneracyError, FcidumpIndexError, ParseError
from .generators import Generator

log = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
DUPLICATE_TOL = 1e-10
DEGENERACY_TOL = 1e-12

_HEADER_RE = re.compile(r"&FCI(.*?)(?:&END|/)", re.IGNORECASE | re.DOTALL)


@dataclass(frozen=True, eq=False)
class MolecularIntegrals:
    n_spatial: int
    n_electrons: int
    ms2: int
    core_energy: float
    h1: np.ndarray
    h2: np.ndarray
    orbital_energies: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.n_spatial
        if self.h1.shape != (n, n) or self.h2.shape != (n, n, n, n):
            raise ValueError("integral arrays do not match n_spatial")
        if self.n_electrons > 2 * n or self.n_electrons < 0:
            raise ValueError(f"{self.n_electrons} electrons do not fit {n} orbitals")
        if (self.n_electrons + self.ms2) % 2 or abs(self.ms2) > self.n_electrons:
            raise ValueError(f"MS2={self.ms2} inconsistent with NELEC={self.n_electrons}")
        self.h1.setflags(write=False)
        self.h2.setflags(write=False)
        if self.orbital_energies is not None:
            self.orbital_energies.setflags(write=False)

    @property
    def n_spin(self) -> int:
        return 2 * self.n_spatial

    @cached_property
    def h1_spin(self) -> np.ndarray:
        """One-electron integrals over spin orbitals."""
        n = self.n_spatial
        h = np.zeros((2 * n, 2 * n))
        h[:n, :n] = self.h1
        h[n:, n:] = self.h1
        return h

    @cached_property
    def eri_spin(self) -> np.ndarray:
        """Physicists' ``<pq|rs>`` over spin orbitals."""
        n = self.n_spatial
        phys = self.h2.transpose(0, 2, 1, 3)  # (pr|qs) -> <pq|rs>
        g = np.zeros((2 * n,) * 4)
        for s1 in (0, n):
            for s2 in (0, n):
                g[s1:s1 + n, s2:s2 + n, s1:s1 + n, s2:s2 + n] = phys
        return g

    @cached_property
    def asym_spin(self) -> np.ndarray:
        """Antisymmetrized ``<pq||rs> = <pq|rs> - <pq|sr>``."""
        g = self.eri_spin
        return g - g.transpose(0, 1, 3, 2)

    def with_energies(self, energies: np.ndarray | None) -> "MolecularIntegrals":
        return MolecularIntegrals(
            self.n_spatial, self.n_electrons, self.ms2, self.core_energy,
            self.h1.copy(), self.h2.copy(),
            None if energies is None else np.asarray(energies, float).copy(),
            dict(self.metadata),
        )


@dataclass(frozen=True)
class SpinOrbitalIndexing:
    n_spatial: int
    occupied: tuple[int, ...]

    def __post_init__(self) -> None:
        occ = tuple(sorted(int(p) for p in self.occupied))
        if len(set(occ)) != len(occ) or (occ and (occ[0] < 0 or occ[-1] >= self.n_spin)):
            raise ValueError(f"invalid occupation {self.occupied}")
        object.__setattr__(self, "occupied", occ)

    @property
    def n_spin(self) -> int:
        return 2 * self.n_spatial

    @property
    def n_electrons(self) -> int:
        return len(self.occupied)

    @property
    def virtual(self) -> tuple[int, ...]:
        occ = set(self.occupied)
        return tuple(p for p in range(self.n_spin) if p not in occ)

    @property
    def reference_bits(self) -> int:
        return sum(1 << p for p in self.occupied)

    @property
    def ms2(self) -> int:
        n = self.n_spatial
        return sum(1 if p < n else -1 for p in self.occupied)

    def is_alpha(self, p: int) -> bool:
        return p < self.n_spatial

    def spatial(self, p: int) -> int:
        return p % self.n_spatial

    @classmethod
    def aufbau(cls, ints: MolecularIntegrals) -> "SpinOrbitalIndexing":
        """Fill the lowest orbitals per spin, respecting MS2."""
        n = ints.n_spatial
        n_alpha = (ints.n_electrons + ints.ms2) // 2
        n_beta = ints.n_electrons - n_alpha
        if ints.orbital_energies is not None:
            order = np.argsort(ints.orbital_energies, kind="stable")
        else:
            order = np.arange(n)
        occ = [int(p) for p in order[:n_alpha]] + [int(p) + n for p in order[:n_beta]]
        return cls(n, tuple(occ))


# ---------------------------------------------------------------- FCIDUMP I/O


def _parse_header(text: str) -> tuple[dict, int]:
    m = _HEADER_RE.search(text)
    if m is None:
        raise ParseError("missing &FCI ... &END header")
    body = m.group(1)
    fields: dict[str, list[str]] = {}
    key = None
    for tok in re.split(r"[,\s]+", body):
        if not tok:
            continue
        if "=" in tok:
            key, _, val = tok.partition("=")
            key = key.strip().upper()
            fields[key] = [val] if val else []
        elif key is not None:
            fields[key].append(tok)
    header = {}
    for name in ("NORB", "NELEC"):
        if name not in fields or not fields[name]:
            raise ParseError(f"header lacks {name}")
        try:
            header[name] = int(fields[name][0])
        except ValueError as exc:
            raise ParseError(f"bad {name} value {fields[name]!r}") from exc
    try:
        header["MS2"] = int(fields["MS2"][0]) if fields.get("MS2") else 0
    except ValueError as exc:
        raise ParseError(f"bad MS2 value {fields['MS2']!r}") from exc
    if header["NORB"] < 1:
        raise ParseError("NORB must be positive")
    return header, m.end()


def _store(arr: np.ndarray, seen: np.ndarray, keys, value: float, line_no: int) -> None:
    for key in keys:
        if seen[key] and abs(arr[key] - value) > DUPLICATE_TOL:
            raise ConsistencyError(
                f"line {line_no}: value {value!r} conflicts with stored {arr[key]!r} at {key}"
            )
    for key in keys:
        arr[key] = value
        seen[key] = True


def _eri_images(p, q, r, s):
    return {
        (p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
        (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p),
    }


def parse_fcidump(path: str | Path) -> MolecularIntegrals:
    """Read an FCIDUMP file into :class:`MolecularIntegrals`.

    ``(i,0,0,0)`` lines are orbital energies, ``(0,0,0,0)`` is the core
    energy, ``(i,j,0,0)`` one-electron and ``(i,j,k,l)`` two-electron
    integrals in chemists' notation.  Every value is written to all of its
    permutational images; images that were already set must agree.
    """
    text = Path(path).read_text()
    return parse_fcidump_text(text, source=str(path))


def parse_fcidump_text(text: str, source: str = "<string>") -> MolecularIntegrals:
    header, end = _parse_header(text)
    n = header["NORB"]
    h1 = np.zeros((n, n))
    h2 = np.zeros((n, n, n, n))
    seen1 = np.zeros((n, n), bool)
    seen2 = np.zeros((n, n, n, n), bool)
    orbe = np.zeros(n)
    seen_e = np.zeros(n, bool)
    core = 0.0
    line_no = text[:end].count("\n") + 1
    for raw in text[end:].splitlines():
        line_no += 1
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise ParseError(f"{source}:{line_no}: expected 'value i j k l', got {raw!r}")
        try:
            value = float(parts[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(x) for x in parts[1:])
        except ValueError as exc:
            raise ParseError(f"{source}:{line_no}: cannot parse {raw!r}") from exc
        for x in (i, j, k, l):
            if x < 0 or x > n:
                raise FcidumpIndexError(f"{source}:{line_no}: index {x} outside [1,{n}]")
        if i and j and k and l:
            keys = _eri_images(i - 1, j - 1, k - 1, l - 1)
            _store(h2, seen2, keys, value, line_no)
        elif i and j and not k and not l:
            _store(h1, seen1, {(i - 1, j - 1), (j - 1, i - 1)}, value, line_no)
        elif i and not j and not k and not l:
            _store(orbe, seen_e, [(i - 1,)], value, line_no)
        elif not (i or j or k or l):
            core = value
        else:
            raise ParseError(f"{source}:{line_no}: unsupported index pattern {i} {j} {k} {l}")
    energies = orbe if seen_e.all() else None
    if seen_e.any() and not seen_e.all():
        log.warning("%s: partial orbital-energy lines ignored", source)
    return MolecularIntegrals(
        n, header["NELEC"], header["MS2"], core, h1, h2, energies, {"source": source}
    )


def format_fcidump(ints: MolecularIntegrals) -> str:
    """Serialize to FCIDUMP text; ``repr`` floats make the round trip exact."""
    n = ints.n_spatial
    out = [f" &FCI NORB={n},NELEC={ints.n_electrons},MS2={ints.ms2},", " &END"]
    for i in range(n):
        for j in range(i + 1):
            for k in range(n):
                for l in range(k + 1):
                    if i * (i + 1) // 2 + j < k * (k + 1) // 2 + l:
                        continue
                    v = ints.h2[i, j, k, l]
                    if v != 0.0:
                        out.append(f"{float(v)!r} {i + 1} {j + 1} {k + 1} {l + 1}")
    for i in range(n):
        for j in range(i + 1):
            v = ints.h1[i, j]
            if v != 0.0:
                out.append(f"{float(v)!r} {i + 1} {j + 1} 0 0")
    if ints.orbital_energies is not None:
        for i, e in enumerate(ints.orbital_energies):
            out.append(f"{float(e)!r} {i + 1} 0 0 0")
    out.append(f"{float(ints.core_energy)!r} 0 0 0 0")
    return "\n".join(out) + "\n"


def write_fcidump(ints: MolecularIntegrals, path: str | Path) -> None:
    Path(path).write_text(format_fcidump(ints))


def check_symmetry(ints: MolecularIntegrals, tol: float = SYMMETRY_TOL) -> None:
    h1, h2 = ints.h1, ints.h2
    if np.max(np.abs(h1 - h1.T), initial=0.0) > tol:
        raise ConsistencyError("h1 is not symmetric")
    for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
        if np.max(np.abs(h2 - h2.transpose(perm)), initial=0.0) > tol:
            raise ConsistencyError(f"h2 violates permutational symmetry {perm}")


# ------------------------------------------------------------ orbital energies


def fock_diagonal(ints: MolecularIntegrals, occ: SpinOrbitalIndexing) -> np.ndarray:
    """Diagonal of the Fock operator over spin orbitals for occupation ``occ``."""
    eps = np.diag(ints.h1_spin).copy()
    if occ.occupied:
        o = list(occ.occupied)
        allp = list(range(ints.n_spin))
        eps += np.einsum("pipi->p", ints.asym_spin[np.ix_(allp, o, allp, o)])
    return eps


def spin_orbital_energies(
    ints: MolecularIntegrals, occ: SpinOrbitalIndexing, recompute: bool = False
) -> np.ndarray:
    """Orbital energies per spin orbital, from the file when available."""
    if ints.orbital_energies is None or recompute:
        return fock_diagonal(ints, occ)
    return np.concatenate([ints.orbital_energies, ints.orbital_energies])


# ------------------------------------------------------------------------ MP2


def _quotient(ints, eps, cre: Sequence[int], des: Sequence[int]) -> float:
    num = ints.asym_spin[cre[0], cre[1], des[0], des[1]]
    den = eps[des[0]] + eps[des[1]] - eps[cre[0]] - eps[cre[1]]
    if abs(den) < DEGENERACY_TOL:
        raise DegeneracyError(f"denominator {den:.3e} for {tuple(des)}->{tuple(cre)}")
    return float(num / den)


def mp2_amplitude(
    ints: MolecularIntegrals,
    occ: SpinOrbitalIndexing,
    holes: tuple[int, int],
    particles: tuple[int, int],
    energies: np.ndarray | None = None,
) -> float:
    """First-order amplitude ``<ab||ij> / (e_i + e_j - e_a - e_b)``."""
    i, j = holes
    a, b = particles
    occupied = set(occ.occupied)
    if i == j or a == b or not {i, j} <= occupied or {a, b} & occupied:
        raise ValueError(f"({i},{j})->({a},{b}) is not a double excitation of the reference")
    eps = spin_orbital_energies(ints, occ) if energies is None else energies
    return _quotient(ints, eps, (a, b), (i, j))


def scatterer_mp2_measure(
    ints: MolecularIntegrals,
    occ: SpinOrbitalIndexing,
    scatterer: Generator,
    energies: np.ndarray | None = None,
) -> float:
    """Magnitude of the perturbative quotient read off the scatterer's first term.

    The numerator is the antisymmetrized integral between the two created and
    the two destroyed spin orbitals; the denominator is the orbital-energy
    difference destroyed minus created.  This extends the MP2 amplitude to
    occupied-occupied and virtual-virtual transitions.
    """
    if not scatterer.is_scatterer:
        raise ValueError(f"{scatterer.label()} is not a scatterer")
    scatterer.check_pattern(occ.occupied)
    eps = spin_orbital_energies(ints, occ) if energies is None else energies
    return abs(_quotient(ints, eps, scatterer.creations, scatterer.destructions))


def mp2_energy(ints: MolecularIntegrals, occ: SpinOrbitalIndexing,
               energies: np.ndarray | None = None) -> float:
    """Second-order correlation energy ``1/4 sum |<ij||ab>|^2 / D``."""
    o = list(occ.occupied)
    v = list(occ.virtual)
    if not o or not v:
        return 0.0
    eps = spin_orbital_energies(ints, occ) if energies is None else energies
    g = ints.asym_spin[np.ix_(o, o, v, v)]
    eo, ev = eps[o], eps[v]
    d = eo[:, None, None, None] + eo[None, :, None, None] - ev[None, None, :, None] - ev[None, None, None, :]
    mask = np.abs(g) > 0.0
    if np.any(np.abs(d[mask]) < DEGENERACY_TOL):
        raise DegeneracyError("degenerate MP2 denominator")
    return float(0.25 * np.sum(np.where(mask, g**2 / np.where(mask, d, 1.0), 0.0)))


def hf_energy(ints: MolecularIntegrals, occ: SpinOrbitalIndexing) -> float:
    o = list(occ.occupied)
    if not o:
        return float(ints.core_energy)
    e1 = ints.h1_spin[o, o].sum()
    e2 = 0.5 * np.einsum("ijij->", ints.asym_spin[np.ix_(o, o, o, o)])
    return float(ints.core_energy + e1 + e2)
