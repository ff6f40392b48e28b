"""Regenerate the bundled FCIDUMP assets with PySCF (RHF / STO-3G).

PySCF is only needed to run this script; the package itself reads the
resulting files.  Usage::

    python tools/make_assets.py [output_dir]
"""

import json
import sys
from pathlib import Path

import numpy as np
from pyscf import ao2mo, gto, mcscf, scf
import pyscf

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from rbmducc.integrals import MolecularIntegrals, write_fcidump  # noqa: E402


def _linear_h(n, spacing):
    return [("H", (0.0, 0.0, i * spacing)) for i in range(n)]


def _triatomic(center, r, angle_deg):
    half = np.radians(angle_deg) / 2
    return [
        (center, (0.0, 0.0, 0.0)),
        ("H", (0.0, r * np.sin(half), r * np.cos(half))),
        ("H", (0.0, -r * np.sin(half), r * np.cos(half))),
    ]


def systems():
    out = {}
    for r in (0.5, 0.735, 1.0, 1.5, 2.0):
        out[f"h2_{r:g}"] = dict(atom=[("H", (0, 0, 0)), ("H", (0, 0, r))], frozen=0,
                               geometry={"bond_length_angstrom": r})
    out["h4_1"] = dict(atom=_linear_h(4, 1.0), frozen=0,
                       geometry={"linear_spacing_angstrom": 1.0})
    for r in (1.25, 1.75, 2.25, 2.75):
        out[f"bh_{r:g}"] = dict(atom=[("B", (0, 0, 0)), ("H", (0, 0, r))], frozen=1,
                               geometry={"bond_length_angstrom": r})
    out["h2o_0.96"] = dict(atom=_triatomic("O", 0.96, 104.5), frozen=1,
                           geometry={"oh_angstrom": 0.96, "hoh_degrees": 104.5})
    out["ch2_1.11"] = dict(atom=_triatomic("C", 1.11, 101.0), frozen=1,
                           geometry={"ch_angstrom": 1.11, "hch_degrees": 101.0, "state": "singlet"})
    return out


def build(name, spec, outdir):
    mol = gto.M(atom=spec["atom"], basis="sto-3g", unit="angstrom", verbose=0)
    mf = scf.RHF(mol)
    mf.conv_tol = 1e-14
    mf.conv_tol_grad = 1e-11
    mf.kernel()
    assert mf.converged, name
    nfrozen = spec["frozen"]
    nmo = mf.mo_coeff.shape[1]
    ncas = nmo - nfrozen
    nelecas = mol.nelectron - 2 * nfrozen
    mc = mcscf.CASCI(mf, ncas, nelecas)
    h1, ecore = mc.get_h1eff()
    h2 = ao2mo.restore(1, mc.get_h2eff(), ncas)
    h1 = 0.5 * (h1 + h1.T)
    # clean numerical noise so symmetry images agree exactly
    h1[np.abs(h1) < 1e-13] = 0.0
    h2[np.abs(h2) < 1e-13] = 0.0
    ints = MolecularIntegrals(
        ncas, nelecas, 0, float(ecore), h1, h2,
        np.asarray(mf.mo_energy[nfrozen:], float),
    )
    path = outdir / f"{name}.FCIDUMP"
    write_fcidump(ints, path)
    meta = {
        "id": name,
        "basis": "sto-3g",
        "method": "RHF",
        "frozen_core_orbitals": nfrozen,
        "geometry": spec["geometry"],
        "atoms": [[a, list(map(float, xyz))] for a, xyz in spec["atom"]],
        "hf_energy": float(mf.e_tot),
        "generator": f"pyscf {pyscf.__version__}",
    }
    return meta


def main():
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parents[1] / "src" / "rbmducc" / "assets")
    outdir.mkdir(parents=True, exist_ok=True)
    index = {}
    for name, spec in systems().items():
        index[name] = build(name, spec, outdir)
        print(name, index[name]["hf_energy"])
    (outdir / "assets.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
