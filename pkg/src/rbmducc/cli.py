"""Command-line driver.

Commands
--------
``run``      one system, one ansatz family.
``compare``  all bundled geometries of one molecule, three families.
``noisy``    seeded SPSA replicas under the noise surrogate.
``oracle``   regenerate the golden FCI/HF/MP2 values.

Settings come from an optional ``key = value`` file (``--config``), then
command-line flags.  Exit codes: 0 success, 1 runtime failure, 2 invalid
configuration, 3 missing assets.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import kernels
from .errors import RbmDuccError
from .integrals import MolecularIntegrals, SpinOrbitalIndexing, hf_energy, parse_fcidump
from .protocol import ProtocolConfig, conventional, run_protocol, run_ts_loop, step1_prepare_psi_sd
from .qubit_map import jw_hamiltonian
from .rbm import RbmHyper
from .simulator import NoiseConfig, cnot_cost, prepare_reference
from .vqe import ObjectiveSpec, minimize_spsa

ASSET_ENV = "RBMDUCC_ASSETS"
FAMILIES = ("duccsd", "duccsdt", "rbm-ts", "rbm-tsqs")
NOISY_FAMILIES = ("rbm-ts-1", "rbm-ts-2", "duccsd", "duccsdt")
ALIASES = {"h2": "h2_0.735", "h4": "h4_1", "bh": "bh_2.25", "h2o": "h2o_0.96", "ch2": "ch2_1.11"}
OUTPUT_SCHEMA = 1

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ASSETS = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class AssetError(Exception):
    pass


@dataclass
class RunConfig:
    system: str = "h2"
    family: str = "rbm-ts"
    optimizer: str = "cg"
    out: str = "runs/out"
    seed: int = 0
    mp2_threshold: float = 1e-5
    prob_threshold: float = 1e-5
    measure_threshold: float = 1e-6
    max_iterations: int = 20
    screen_singles: bool = True
    warm_start: bool = True
    rbm_epochs: int = 2000
    rbm_learning_rate: float = 0.05
    rbm_hidden: int = 0
    rbm_batch_size: int = 32
    n_samples: int = 5000
    burn_in: int = 100
    noise_mode: str = "noiseless"
    p1: float = 0.0
    p2: float = 0.0
    p_readout: float = 0.0
    shots: int = 10_000
    trajectories: int = 1
    noise_seed: int = 0
    spsa_max_iter: int = 500
    replicas: int = 20
    workers: int = 1
    families: str = ",".join(NOISY_FAMILIES)
    geometries: list[str] | None = None

    def protocol_config(self) -> ProtocolConfig:
        noise = NoiseConfig(
            p1=self.p1, p2=self.p2, p_readout=self.p_readout, shots=self.shots,
            mode=self.noise_mode, trajectories=self.trajectories, seed=self.noise_seed,
        )
        rbm = RbmHyper(
            n_hidden=self.rbm_hidden or None, learning_rate=self.rbm_learning_rate,
            epochs=self.rbm_epochs, batch_size=self.rbm_batch_size,
        )
        return ProtocolConfig(
            mp2_threshold=self.mp2_threshold, prob_threshold=self.prob_threshold,
            measure_threshold=self.measure_threshold, max_iterations=self.max_iterations,
            screen_singles=self.screen_singles, warm_start=self.warm_start, seed=self.seed,
            rbm=rbm, n_samples=self.n_samples, burn_in=self.burn_in, optimizer=self.optimizer,
            spsa_max_iter=self.spsa_max_iter, noise=noise,
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


# ------------------------------------------------------------- config


def _coerce(name: str, raw):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds:
        raise ConfigError(f"unknown setting {name!r}")
    kind = kinds[name]
    if not isinstance(raw, str):
        return raw
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("list"):
            return [s.strip() for s in raw.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw.strip()


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, value)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        values.update(parse_config_text(path.read_text()))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = _coerce(f.name, v)
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.optimizer not in ("cg", "spsa"):
        raise ConfigError(f"unknown optimizer {cfg.optimizer!r}")
    if cfg.noise_mode not in ("noiseless", "shot-gaussian", "trajectory"):
        raise ConfigError(f"unknown noise mode {cfg.noise_mode!r}")
    if cfg.optimizer == "cg" and cfg.noise_mode != "noiseless":
        raise ConfigError("CG cannot be used with noise; choose --optimizer spsa")
    if cfg.replicas < 1 or cfg.workers < 1:
        raise ConfigError("replicas and workers must be >= 1")
    try:
        cfg.protocol_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ------------------------------------------------------------- assets


def asset_root() -> Path:
    env = os.environ.get(ASSET_ENV)
    return Path(env) if env else Path(__file__).parent / "assets"


def asset_index() -> dict:
    path = asset_root() / "assets.json"
    return json.loads(path.read_text()) if path.is_file() else {}


def resolve_system(name: str) -> tuple[str, MolecularIntegrals]:
    """Asset id, alias or FCIDUMP path."""
    path = Path(name)
    if path.suffix.upper() == ".FCIDUMP" or path.is_file():
        if not path.is_file():
            raise AssetError(f"FCIDUMP file {path} not found")
        return path.stem, parse_fcidump(path)
    key = ALIASES.get(name.lower(), name)
    path = asset_root() / f"{key}.FCIDUMP"
    if not path.is_file():
        raise AssetError(f"no bundled asset {key!r} under {asset_root()}")
    return key, parse_fcidump(path)


def molecule_geometries(molecule: str) -> list[str]:
    root = asset_root()
    ids = sorted(
        (p.stem for p in root.glob(f"{molecule.lower()}_*.FCIDUMP")),
        key=lambda s: float(s.split("_", 1)[1]),
    )
    return ids


# ------------------------------------------------------------- running


def _fci(ints: MolecularIntegrals, occ: SpinOrbitalIndexing) -> float | None:
    from .oracle import MAX_SPIN_ORBITALS, fci_ground

    if ints.n_spin > MAX_SPIN_ORBITALS:
        return None
    return fci_ground(ints, occ)[0]


def run_family(ints: MolecularIntegrals, family: str, cfg: RunConfig) -> dict:
    """Build and optimize one family; returns energies, cost and artifacts."""
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    pcfg = cfg.protocol_config()
    occ = SpinOrbitalIndexing.aufbau(ints)
    ham = jw_hamiltonian(ints, occ)
    trace = None
    if family in ("duccsd", "duccsdt"):
        ansatz, res = conventional(ints, family, pcfg, occ, ham)
        energy = res.best_energy if pcfg.noise.noiseless else res.final_energy
    else:
        out = run_protocol(ints, pcfg, quadruples=family == "rbm-tsqs", indexing=occ, hamiltonian=ham)
        ansatz, res, energy, trace = out.ansatz, out.optimizer, out.energy, out.trace
    fci = _fci(ints, occ)
    cost = cnot_cost(ansatz, occ.n_spin)
    return {
        "family": family,
        "energy": float(energy),
        "fci_energy": fci,
        "error": None if fci is None else float(energy - fci),
        "hf_energy": hf_energy(ints, occ),
        "cnot_count": cost.cnot_count,
        "single_qubit_count": cost.single_qubit_count,
        "n_parameters": len(ansatz),
        "n_scatterers": len(ansatz.scatterers),
        "evaluations": res.evaluations,
        "_result": res,
        "_trace": trace,
        "_ansatz": ansatz,
    }


def _public(rec: dict) -> dict:
    return {k: v for k, v in rec.items() if not k.startswith("_")}


def manifest(cfg: RunConfig, command: str, extra: dict | None = None) -> dict:
    try:
        version = metadata.version("rbmducc")
    except metadata.PackageNotFoundError:
        version = "unknown"
    out = {
        "schema": OUTPUT_SCHEMA,
        "command": command,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "code_version": version,
        "kernel_backend": kernels.BACKEND,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "seeds": {"protocol": cfg.seed, "noise": cfg.noise_seed},
    }
    if extra:
        out.update(extra)
    return out


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def cmd_run(cfg: RunConfig) -> int:
    name, ints = resolve_system(cfg.system)
    rec = run_family(ints, cfg.family, cfg)
    out = Path(cfg.out)
    energies = dict(_public(rec), system=name)
    _write(out / "energies.json", _dump(energies))
    trace = rec["_trace"]
    if trace is not None:
        _write(out / "trace.json", trace.to_json())
    else:
        _write(out / "trace.json", _dump({"schema": OUTPUT_SCHEMA, "family": cfg.family, "iterations": []}))
    _write(out / "trajectory.csv", rec["_result"].trajectory_csv())
    _write(out / "ansatz.json", rec["_ansatz"].to_json() + "\n")
    _write(out / "manifest.json", _dump(manifest(cfg, "run", {"system": name})))
    print(f"{name} {cfg.family}: E = {rec['energy']:.10f} Ha"
          + ("" if rec["error"] is None else f", E - E_FCI = {rec['error']:.3e}")
          + f", CNOT = {rec['cnot_count']}")
    return EXIT_OK


COMPARE_FAMILIES = ("duccsd", "duccsdt", "rbm-ts")


def compare_rows(ids: list[str], cfg: RunConfig) -> list[dict]:
    rows = []
    index = asset_index()
    for sid in ids:
        _, ints = resolve_system(sid)
        geom = index.get(sid, {}).get("geometry", {})
        row = {"system": sid, "geometry": geom.get("bond_length_angstrom", sid.split("_", 1)[-1])}
        for fam in COMPARE_FAMILIES:
            rec = run_family(ints, fam, cfg)
            row[f"E_{fam}"] = rec["energy"]
            row[f"err_{fam}"] = rec["error"]
            row[f"cnot_{fam}"] = rec["cnot_count"]
        rows.append(row)
    return rows


def rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def cmd_compare(cfg: RunConfig, molecule: str) -> int:
    ids = molecule_geometries(molecule) if cfg.geometries is None else list(cfg.geometries)
    if not ids:
        raise AssetError(f"empty sweep: no geometries for {molecule!r}")
    for sid in ids:
        resolve_system(sid)
    rows = compare_rows(ids, cfg)
    out = Path(cfg.out)
    _write(out / "compare.csv", rows_csv(rows))
    _write(out / "manifest.json", _dump(manifest(cfg, "compare", {"systems": ids})))
    print(rows_csv(rows), end="")
    return EXIT_OK


# ---------------------------------------------------------------- noisy


def _replica(job: tuple) -> tuple[str, int, float, list[float]]:
    family, rep, ansatz_json, ints_path, noise, seed, max_iter = job
    from .ansatz import OrderedAnsatz

    ints = parse_fcidump(ints_path)
    occ = SpinOrbitalIndexing.aufbau(ints)
    spec = ObjectiveSpec(jw_hamiltonian(ints, occ), OrderedAnsatz.from_json(ansatz_json),
                         prepare_reference(occ), noise)
    res = minimize_spsa(spec, None, max_iter, seed)
    return family, rep, float(res.final_energy), [e for _, e in res.trajectory]


def noisy_ansatze(ints: MolecularIntegrals, families: list[str], cfg: RunConfig) -> dict:
    from .ansatz import build_conventional

    pcfg = replace(cfg.protocol_config(), optimizer="spsa")
    occ = SpinOrbitalIndexing.aufbau(ints)
    ham = jw_hamiltonian(ints, occ)
    out = {}
    for fam in families:
        if fam in ("duccsd", "duccsdt"):
            out[fam] = build_conventional(occ, 2 if fam == "duccsd" else 3)
            continue
        noisy_sd = fam == "rbm-ts-1"
        scfg = replace(pcfg, noisy_sd=noisy_sd, optimizer="spsa" if noisy_sd else "cg")
        if not noisy_sd:
            scfg = replace(scfg, noise=NoiseConfig())
        sd = step1_prepare_psi_sd(ints, scfg, occ, ham, replicas=cfg.replicas if noisy_sd else 1)
        out[fam], _ = run_ts_loop(ints, replace(scfg, noise=NoiseConfig(), optimizer="cg"), occ, ham, sd)
    return out


def cmd_noisy(cfg: RunConfig) -> int:
    if cfg.optimizer != "spsa":
        raise ConfigError("noisy runs use SPSA; CG is not allowed")
    if cfg.noise_mode == "noiseless" and not (cfg.p1 or cfg.p2 or cfg.p_readout):
        mode = "noiseless"
    else:
        mode = "shot-gaussian" if cfg.noise_mode == "noiseless" else cfg.noise_mode
    families = [f.strip() for f in cfg.families.split(",") if f.strip()]
    bad = [f for f in families if f not in NOISY_FAMILIES]
    if bad or not families:
        raise ConfigError(f"unknown noisy families {bad}; expected from {', '.join(NOISY_FAMILIES)}")
    name, ints = resolve_system(cfg.system)
    path = Path(cfg.system) if Path(cfg.system).is_file() else asset_root() / f"{name}.FCIDUMP"
    ansatze = noisy_ansatze(ints, families, cfg)
    occ = SpinOrbitalIndexing.aufbau(ints)
    jobs = []
    for fam in families:
        for rep in range(cfg.replicas):
            noise = NoiseConfig(p1=cfg.p1, p2=cfg.p2, p_readout=cfg.p_readout, shots=cfg.shots,
                                mode=mode, trajectories=cfg.trajectories,
                                seed=cfg.noise_seed + 1000 * rep)
            jobs.append((fam, rep, ansatze[fam].to_json(), str(path), noise, cfg.seed + rep,
                         cfg.spsa_max_iter))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_replica, jobs))
    else:
        results = [_replica(j) for j in jobs]
    out = Path(cfg.out)
    summary = {"system": name, "noise_mode": mode, "families": {}}
    for fam in families:
        reps = sorted((r for r in results if r[0] == fam), key=lambda r: r[1])
        traj = np.array([r[3] for r in reps])
        for _, rep, _, t in reps:
            _write(out / fam / f"replica_{rep:03d}.csv",
                   "eval_index,energy_hartree\n" + "".join(f"{i},{e!r}\n" for i, e in enumerate(t)))
        mean = traj.mean(axis=0)
        _write(out / fam / "average.csv",
               "eval_index,energy_hartree\n" + "".join(f"{i},{e!r}\n" for i, e in enumerate(mean)))
        finals = [r[2] for r in reps]
        summary["families"][fam] = {
            "cnot_count": cnot_cost(ansatze[fam], occ.n_spin).cnot_count,
            "mean_final_energy": float(np.mean(finals)),
            "std_final_energy": float(np.std(finals)),
            "final_energies": finals,
        }
        print(f"{fam}: mean final E = {np.mean(finals):.6f} Ha over {len(finals)} replicas, "
              f"CNOT = {summary['families'][fam]['cnot_count']}")
    _write(out / "noisy_summary.json", _dump(summary))
    _write(out / "manifest.json", _dump(manifest(cfg, "noisy", {"system": name, "noise_mode": mode})))
    return EXIT_OK


# ---------------------------------------------------------------- oracle


def cmd_oracle(systems: list[str], out: str | None) -> int:
    from .oracle import golden_values, read_golden, write_golden

    ids = systems or sorted(p.stem for p in asset_root().glob("*.FCIDUMP"))
    if not ids:
        raise AssetError("no assets to process")
    target = Path(out) if out else asset_root() / "golden.json"
    values = read_golden(target) if target.is_file() else {}
    for sid in ids:
        key, ints = resolve_system(sid)
        values[key] = golden_values(ints)
        print(f"{key}: FCI {values[key]['fci_energy']:.12f}")
    write_golden(target, values)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", help="protocol / optimizer seed")
    p.add_argument("--optimizer", help="cg or spsa")
    for name in ("mp2-threshold", "prob-threshold", "measure-threshold", "max-iterations",
                 "screen-singles", "warm-start", "rbm-epochs", "rbm-learning-rate", "rbm-hidden",
                 "rbm-batch-size", "n-samples", "burn-in", "noise-mode", "p1", "p2", "p-readout",
                 "shots", "trajectories", "noise-seed", "spsa-max-iter", "workers"):
        p.add_argument(f"--{name}", dest=name.replace("-", "_"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbmducc", description="RBM-guided dUCC ansatz construction")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="optimize one family on one system")
    p.add_argument("--system", help="asset id, alias (h2, h4, bh, h2o, ch2) or FCIDUMP path")
    p.add_argument("--family", help=f"one of {', '.join(FAMILIES)}")
    _add_common(p)
    p = sub.add_parser("compare", help="sweep bundled geometries of one molecule")
    p.add_argument("--molecule", default="bh")
    p.add_argument("--geometries", help="comma-separated asset ids; default all for the molecule")
    _add_common(p)
    p = sub.add_parser("noisy", help="seeded SPSA replicas under noise")
    p.add_argument("--system")
    p.add_argument("--replicas")
    p.add_argument("--families", help=f"comma-separated subset of {', '.join(NOISY_FAMILIES)}")
    _add_common(p)
    p = sub.add_parser("oracle", help="regenerate golden reference values")
    p.add_argument("systems", nargs="*")
    p.add_argument("--golden", help="output JSON path")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "oracle":
            return cmd_oracle(args.systems, args.golden)
        if args.command == "noisy" and args.optimizer is None:
            args.optimizer = "spsa"
        cfg = build_config(args)
        if args.command == "run":
            if cfg.family not in FAMILIES:
                raise ConfigError(f"unknown family {cfg.family!r}; expected one of {', '.join(FAMILIES)}")
            return cmd_run(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, args.molecule)
        return cmd_noisy(cfg)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"rbmducc: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssetError as exc:
        print(f"rbmducc: error: {exc}", file=sys.stderr)
        return EXIT_ASSETS
    except (RbmDuccError, ValueError) as exc:
        print(f"rbmducc: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
