import csv
import json
import shutil
import subprocess
import sys

import pytest

from conftest import ASSETS, system
from rbmducc.cli import (
    EXIT_ASSETS,
    EXIT_CONFIG,
    EXIT_OK,
    ConfigError,
    RunConfig,
    main,
    parse_config_text,
    resolve_system,
)


def run(tmp_path, *args):
    return main(list(args) + ["--out", str(tmp_path / "out")])


class TestConfigParsing:
    def test_key_value_text(self):
        out = parse_config_text("seed = 4  # comment\nmp2-threshold=1e-4\n\nscreen_singles = no\n")
        assert out == {"seed": 4, "mp2_threshold": 1e-4, "screen_singles": False}

    @pytest.mark.parametrize("text", ["seed 4", "bogus = 1", "seed = four", "warm_start = maybe"])
    def test_bad_text(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_digest_stable(self):
        assert RunConfig(seed=1).digest() == RunConfig(seed=1).digest()
        assert RunConfig(seed=1).digest() != RunConfig(seed=2).digest()


class TestExitCodes:
    @pytest.mark.parametrize("args", [
        ["run", "--system", "h2", "--optimizer", "lbfgs"],
        ["run", "--system", "h2", "--family", "ducc9"],
        ["run", "--system", "h2", "--noise-mode", "shot-gaussian"],
        ["run", "--system", "h2", "--seed", "x"],
        ["noisy", "--system", "h2", "--optimizer", "cg"],
        ["noisy", "--system", "h2", "--families", "rbm-ts-3"],
    ])
    def test_invalid_config(self, tmp_path, args, capsys):
        assert run(tmp_path, *args) == EXIT_CONFIG
        assert "error" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert run(tmp_path, "run", "--config", str(tmp_path / "nope.cfg")) == EXIT_CONFIG

    @pytest.mark.parametrize("args", [
        ["run", "--system", "lih"],
        ["run", "--system", "missing.FCIDUMP"],
        ["compare", "--molecule", "xe"],
    ])
    def test_missing_assets(self, tmp_path, args):
        assert run(tmp_path, *args) == EXIT_ASSETS
        assert not (tmp_path / "out").exists()

    def test_asset_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RBMDUCC_ASSETS", str(tmp_path))
        assert run(tmp_path, "run", "--system", "h2") == EXIT_ASSETS
        shutil.copy(ASSETS / "h2_0.735.FCIDUMP", tmp_path)
        assert resolve_system("h2")[0] == "h2_0.735"


class TestRun:
    def test_h2_outputs(self, tmp_path, h2):
        assert run(tmp_path, "run", "--system", "h2", "--family", "rbm-ts") == EXIT_OK
        out = tmp_path / "out"
        energies = json.loads((out / "energies.json").read_text())
        assert abs(energies["energy"] - h2.fci[0]) <= 1e-8
        assert energies["system"] == "h2_0.735"
        for name in ("trace.json", "trajectory.csv", "ansatz.json", "manifest.json"):
            assert (out / name).is_file()
        man = json.loads((out / "manifest.json").read_text())
        for key in ("config", "config_sha256", "code_version", "kernel_backend", "seeds"):
            assert key in man
        rows = list(csv.reader((out / "trajectory.csv").open()))
        assert rows[0] == ["eval_index", "energy_hartree"]

    def test_fcidump_path_and_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("family = duccsd\nseed = 7\n")
        path = ASSETS / "h2_0.735.FCIDUMP"
        assert run(tmp_path, "run", "--system", str(path), "--config", str(cfg)) == EXIT_OK
        man = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert man["config"]["family"] == "duccsd"
        assert man["config"]["seed"] == 7

    def test_flag_overrides_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("family = duccsd\n")
        assert run(tmp_path, "run", "--system", "h2", "--config", str(cfg), "--family", "duccsdt") == EXIT_OK
        assert json.loads((tmp_path / "out" / "energies.json").read_text())["family"] == "duccsdt"

    def test_trace_byte_identical(self, tmp_path):
        a = main(["run", "--system", "h4", "--seed", "1", "--out", str(tmp_path / "a")])
        b = main(["run", "--system", "h4", "--seed", "1", "--out", str(tmp_path / "b")])
        assert a == b == EXIT_OK
        assert (tmp_path / "a" / "trace.json").read_bytes() == (tmp_path / "b" / "trace.json").read_bytes()

    def test_compare_subset(self, tmp_path):
        code = run(tmp_path, "compare", "--molecule", "h2", "--geometries", "h2_0.735,h2_1")
        assert code == EXIT_OK
        rows = list(csv.DictReader((tmp_path / "out" / "compare.csv").open()))
        assert [r["system"] for r in rows] == ["h2_0.735", "h2_1"]
        for r in rows:
            assert abs(float(r["err_duccsd"])) <= 1e-8

    def test_noisy_small(self, tmp_path):
        code = run(tmp_path, "noisy", "--system", "h2", "--families", "duccsd", "--replicas", "2",
                   "--spsa-max-iter", "5", "--p1", "1e-5", "--p-readout", "5e-3")
        assert code == EXIT_OK
        summary = json.loads((tmp_path / "out" / "noisy_summary.json").read_text())
        assert summary["noise_mode"] == "shot-gaussian"
        assert len(summary["families"]["duccsd"]["final_energies"]) == 2
        assert (tmp_path / "out" / "duccsd" / "average.csv").is_file()
        assert (tmp_path / "out" / "duccsd" / "replica_001.csv").is_file()


class TestOracleCommand:
    def test_regenerates_golden(self, tmp_path):
        golden = tmp_path / "g.json"
        assert main(["oracle", "h2", "--golden", str(golden)]) == EXIT_OK
        data = json.loads(golden.read_text())
        assert data["h2_0.735"]["fci_energy"] == pytest.approx(system("h2_0.735").fci[0], abs=1e-10)


def test_console_module():
    proc = subprocess.run([sys.executable, "-m", "rbmducc.cli", "run", "--system", "nowhere"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_ASSETS
