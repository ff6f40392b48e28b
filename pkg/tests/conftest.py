from pathlib import Path

import numpy as np
import pytest

import rbmducc
from rbmducc import kernels
from rbmducc.integrals import SpinOrbitalIndexing, parse_fcidump
from rbmducc.qubit_map import jw_hamiltonian

ASSETS = Path(rbmducc.__file__).parent / "assets"
ASSET_IDS = sorted(p.name[: -len(".FCIDUMP")] for p in ASSETS.glob("*.FCIDUMP"))


def load(asset_id: str):
    return parse_fcidump(ASSETS / f"{asset_id}.FCIDUMP")


class System:
    """Integrals, HF indexing and qubit Hamiltonian of one bundled asset."""

    def __init__(self, asset_id: str):
        self.id = asset_id
        self.ints = load(asset_id)
        self.occ = SpinOrbitalIndexing.aufbau(self.ints)
        self.ham = jw_hamiltonian(self.ints, self.occ)
        self._fci = None

    @property
    def fci(self):
        if self._fci is None:
            from rbmducc.oracle import fci_ground

            self._fci = fci_ground(self.ints, self.occ)
        return self._fci


_SYSTEMS: dict[str, System] = {}


def system(asset_id: str) -> System:
    if asset_id not in _SYSTEMS:
        _SYSTEMS[asset_id] = System(asset_id)
    return _SYSTEMS[asset_id]


@pytest.fixture
def h2():
    return system("h2_0.735")


@pytest.fixture
def h4():
    return system("h4_1")


@pytest.fixture
def bh():
    return system("bh_2.25")


def _available_backends():
    names = ["python"]
    try:
        kernels.backend("cython")
        names.append("cython")
    except ImportError:
        pass
    return names


BACKENDS = _available_backends()


@pytest.fixture(params=BACKENDS)
def kernel_backend(request, monkeypatch):
    """Route the simulator through one kernel implementation."""
    mod = kernels.backend(request.param)
    for name in ("rotate_pairs", "generator_overlap", "pauli_rotation"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ------------------------------------------------------------ acceptance report

_VERDICTS: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _VERDICTS[number] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        verdict, title, detail = _VERDICTS[number]
        line = f"{verdict} criterion {number}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
