"""Time the compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--qubits 10 12 14] [--repeat 5]

Each row reports the best-of-``repeat`` wall time per call and the speedup of
the compiled backend.  The last block times a full dUCCSDT ansatz application
on the bundled BH asset, which is what the optimizers spend most time on.
"""

from __future__ import annotations

import argparse
import timeit
from pathlib import Path

import numpy as np

import rbmducc
from rbmducc import kernels, simulator
from rbmducc.ansatz import build_conventional
from rbmducc.generators import Generator
from rbmducc.integrals import SpinOrbitalIndexing, parse_fcidump
from rbmducc.simulator import apply_ansatz, pair_table, prepare_reference


def _random_state(n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return psi / np.linalg.norm(psi)


def _best(fn, repeat: int, number: int) -> float:
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def kernel_rows(n: int, repeat: int, backends: dict) -> list[tuple[str, int, dict]]:
    gen = Generator.excitation((0, 1), (n - 2, n - 1))
    xs, ys, signs = pair_table(gen, n)
    psi = _random_state(n)
    other = _random_state(n, 1)
    xmask = (1 << 0) | (1 << (n - 1))
    zmask = sum(1 << q for q in range(1, n - 1)) | 1
    cases = {
        "rotate_pairs": lambda m: lambda: m.rotate_pairs(psi, xs, ys, signs, 0.99, 0.01),
        "generator_overlap": lambda m: lambda: m.generator_overlap(other, psi, xs, ys, signs),
        "pauli_rotation": lambda m: lambda: m.pauli_rotation(psi, xmask, zmask, 1, 0.01),
    }
    rows = []
    for name, make in cases.items():
        times = {b: _best(make(m), repeat, 200) for b, m in backends.items()}
        rows.append((name, n, times))
    return rows


def ansatz_row(repeat: int, backends: dict) -> tuple[str, int, dict]:
    ints = parse_fcidump(Path(rbmducc.__file__).parent / "assets" / "bh_2.25.FCIDUMP")
    occ = SpinOrbitalIndexing.aufbau(ints)
    ansatz = build_conventional(occ, 3)
    ref = prepare_reference(occ)
    params = np.random.default_rng(2).normal(scale=0.1, size=len(ansatz))
    times = {}
    for b, m in backends.items():
        saved = (kernels.rotate_pairs, kernels.generator_overlap, kernels.pauli_rotation)
        kernels.rotate_pairs, kernels.generator_overlap, kernels.pauli_rotation = (
            m.rotate_pairs, m.generator_overlap, m.pauli_rotation)
        try:
            times[b] = _best(lambda: apply_ansatz(ref, ansatz, params), repeat, 5)
        finally:
            kernels.rotate_pairs, kernels.generator_overlap, kernels.pauli_rotation = saved
    return f"apply dUCCSDT ({len(ansatz)} factors)", occ.n_spin, times


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--qubits", type=int, nargs="+", default=[10, 12, 14])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    backends = {"python": kernels.backend("python")}
    try:
        backends["cython"] = kernels.backend("cython")
    except ImportError:
        print("compiled kernels not built; timing the numpy fallback only")

    rows = []
    for n in args.qubits:
        rows.extend(kernel_rows(n, args.repeat, backends))
    simulator.pair_table.cache_clear()
    rows.append(ansatz_row(args.repeat, backends))

    header = f"{'kernel':<32}{'qubits':>7}" + "".join(f"{b + ' [us]':>15}" for b in backends)
    if "cython" in backends:
        header += f"{'speedup':>10}"
    print(header)
    for name, n, times in rows:
        line = f"{name:<32}{n:>7}" + "".join(f"{times[b] * 1e6:>15.1f}" for b in backends)
        if "cython" in backends:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
