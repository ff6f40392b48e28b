"""Variational optimization of ansatz parameters.

Noiseless runs use nonlinear conjugate gradients (scipy) with analytic
adjoint-state gradients or central finite differences.  Noisy runs use SPSA.
Both record every objective evaluation in order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.optimize

from .ansatz import OrderedAnsatz
from .errors import ArityError, HermiticityError, ModeError
from .qubit_map import PauliSum
from .simulator import (
    NoiseConfig,
    Statevector,
    _apply_pairs,
    apply_ansatz,
    circuit_expectation,
    cnot_cost,
    exact_expectation,
    generator_expectation,
)

FD_STEP = 1e-6
SPSA_ALPHA = 0.602
SPSA_GAMMA = 0.101
SPSA_C = 0.1
SPSA_FIRST_STEP = 0.1
SPSA_CALIBRATION_PAIRS = 5


@dataclass
class ObjectiveSpec:
    """Energy functional ``<ref| U^+(theta) H U(theta) |ref>``."""

    hamiltonian: PauliSum
    ansatz: OrderedAnsatz
    reference: Statevector
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self) -> None:
        if not self.hamiltonian.is_hermitian():
            raise HermiticityError("the Hamiltonian must be hermitian")
        if self.hamiltonian.n_qubits != self.reference.n_qubits:
            raise ArityError(
                f"Hamiltonian acts on {self.hamiltonian.n_qubits} qubits, "
                f"reference has {self.reference.n_qubits}"
            )
        self._cost = None

    @property
    def n_parameters(self) -> int:
        return len(self.ansatz)

    @property
    def cost(self):
        if self._cost is None:
            self._cost = cnot_cost(self.ansatz, self.reference.n_qubits)
        return self._cost


@dataclass
class CallableObjective:
    """Plain function of the parameter vector; used to test the optimizers."""

    fun: Callable[[np.ndarray], float]
    n_parameters: int
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    noise: NoiseConfig = field(default_factory=NoiseConfig)


@dataclass
class OptimizerResult:
    best_params: np.ndarray
    best_energy: float
    trajectory: list[tuple[int, float]]
    evaluations: int
    converged: bool
    final_params: np.ndarray | None = None
    final_energy: float | None = None
    method: str = ""
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "best_energy": self.best_energy,
            "best_params": [float(x) for x in self.best_params],
            "final_energy": self.final_energy,
            "final_params": None if self.final_params is None else [float(x) for x in self.final_params],
            "evaluations": self.evaluations,
            "converged": self.converged,
            "message": self.message,
            "trajectory": [[i, e] for i, e in self.trajectory],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def trajectory_csv(self) -> str:
        lines = ["eval_index,energy_hartree"]
        lines.extend(f"{i},{e!r}" for i, e in self.trajectory)
        return "\n".join(lines) + "\n"

    def write(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "optimizer.json").write_text(self.to_json())
        (d / "trajectory.csv").write_text(self.trajectory_csv())


# ------------------------------------------------------------ evaluation


def evaluate(spec: ObjectiveSpec | CallableObjective, params: Sequence[float],
             rng: np.random.Generator | None = None) -> float:
    """Energy at ``params`` under the objective's noise mode."""
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_parameters,):
        raise ArityError(f"{params.size} parameters for {spec.n_parameters} factors")
    if isinstance(spec, CallableObjective):
        value = float(spec.fun(params))
        if rng is not None and not spec.noise.noiseless:
            value += float(rng.normal(0.0, 1.0 / np.sqrt(spec.noise.shots)))
        return value
    if spec.noise.noiseless:
        state = apply_ansatz(spec.reference, spec.ansatz, params)
        return exact_expectation(state, spec.hamiltonian)
    return circuit_expectation(
        spec.reference, spec.ansatz, params, spec.hamiltonian, spec.noise, rng, spec.cost
    )


def energy_and_gradient(spec: ObjectiveSpec, params: Sequence[float]) -> tuple[float, np.ndarray]:
    """Noiseless energy and its exact gradient by a backward adjoint sweep.

    With ``psi_k`` the state after ``k`` factors and ``lam`` the
    back-propagated ``H psi_N``, ``dE/dtheta_k = 2 Re <lam_k| kappa_k |psi_k>``.
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_parameters,):
        raise ArityError(f"{params.size} parameters for {spec.n_parameters} factors")
    psi = apply_ansatz(spec.reference, spec.ansatz, params)
    lam = Statevector(spec.hamiltonian.to_sparse() @ psi.amplitudes)
    energy = float(np.vdot(psi.amplitudes, lam.amplitudes).real)
    grad = np.empty_like(params)
    gens = spec.ansatz.generators
    for k in range(len(gens) - 1, -1, -1):
        grad[k] = 2.0 * generator_expectation(lam, gens[k], psi).real
        if params[k] != 0.0:
            _apply_pairs(psi.amplitudes, gens[k], -params[k])
            _apply_pairs(lam.amplitudes, gens[k], -params[k])
    return energy, grad


def finite_difference_gradient(
    fun: Callable[[np.ndarray], float], params: np.ndarray, step: float = FD_STEP
) -> np.ndarray:
    grad = np.empty_like(params)
    probe = params.copy()
    for k in range(params.shape[0]):
        probe[k] = params[k] + step
        fp = fun(probe)
        probe[k] = params[k] - step
        fm = fun(probe)
        probe[k] = params[k]
        grad[k] = (fp - fm) / (2.0 * step)
    return grad


class _Recorder:
    """Records each optimizer-requested evaluation and the best point seen."""

    def __init__(self) -> None:
        self.trajectory: list[tuple[int, float]] = []
        self.best_energy = np.inf
        self.best_params: np.ndarray | None = None

    def record(self, params: np.ndarray, energy: float) -> None:
        self.trajectory.append((len(self.trajectory), float(energy)))
        if energy < self.best_energy:
            self.best_energy = float(energy)
            self.best_params = np.array(params, dtype=float)


# -------------------------------------------------------------------- CG


def minimize_cg(
    spec: ObjectiveSpec | CallableObjective,
    init_params: Sequence[float] | None = None,
    tol: float = 1e-8,
    max_iter: int = 1000,
    gradient: str = "adjoint",
    fd_step: float = FD_STEP,
) -> OptimizerResult:
    """Nonlinear conjugate-gradient minimization (noiseless only).

    Parameters
    ----------
    gradient
        ``"adjoint"`` for the analytic backward sweep, ``"fd"`` for central
        differences with step ``fd_step``.  A :class:`CallableObjective`
        without ``grad`` always uses differences.
    """
    if not spec.noise.noiseless:
        raise ModeError("CG needs a noiseless objective; use SPSA under noise")
    if gradient not in ("adjoint", "fd"):
        raise ValueError(f"unknown gradient {gradient!r}")
    if max_iter < 0:
        raise ValueError("max_iter must be nonnegative")
    n = spec.n_parameters
    x0 = np.zeros(n) if init_params is None else np.array(init_params, dtype=float)
    if x0.shape != (n,):
        raise ArityError(f"{x0.size} initial parameters for {n} factors")
    rec = _Recorder()

    def plain(x: np.ndarray) -> float:
        return evaluate(spec, x)

    use_adjoint = isinstance(spec, ObjectiveSpec) and gradient == "adjoint"
    cache: dict[bytes, tuple[float, np.ndarray]] = {}

    def fun_and_grad(x: np.ndarray) -> tuple[float, np.ndarray]:
        key = x.tobytes()
        if key in cache:
            return cache[key]
        if use_adjoint:
            e, g = energy_and_gradient(spec, x)
        else:
            e = plain(x)
            if isinstance(spec, CallableObjective) and spec.grad is not None and gradient == "adjoint":
                g = np.asarray(spec.grad(x), dtype=float)
            else:
                g = finite_difference_gradient(plain, x, fd_step)
        rec.record(x, e)
        cache.clear()
        cache[key] = (e, g)
        return e, g

    if n == 0 or max_iter == 0:
        e0 = plain(x0)
        rec.record(x0, e0)
        return OptimizerResult(
            x0, e0, rec.trajectory, len(rec.trajectory), n == 0, x0.copy(), e0, "cg",
            "no parameters" if n == 0 else "max_iter = 0",
        )
    res = scipy.optimize.minimize(
        lambda x: fun_and_grad(x)[0],
        x0,
        jac=lambda x: fun_and_grad(x)[1],
        method="CG",
        options={"gtol": tol, "maxiter": max_iter},
    )
    return OptimizerResult(
        best_params=rec.best_params,
        best_energy=rec.best_energy,
        trajectory=rec.trajectory,
        evaluations=len(rec.trajectory),
        converged=bool(res.success),
        final_params=np.asarray(res.x, dtype=float),
        final_energy=float(res.fun),
        method="cg",
        message=str(res.message),
    )


# ------------------------------------------------------------------ SPSA


def spsa_gains(max_iter: int, a: float, c: float = SPSA_C) -> tuple[np.ndarray, np.ndarray]:
    """Gain sequences ``a_k = a/(k+1+A)^0.602`` and ``c_k = c/(k+1)^0.101``."""
    k = np.arange(max_iter, dtype=float)
    big_a = 0.1 * max_iter
    return a / (k + 1.0 + big_a) ** SPSA_ALPHA, c / (k + 1.0) ** SPSA_GAMMA


def minimize_spsa(
    spec: ObjectiveSpec | CallableObjective,
    init_params: Sequence[float] | None = None,
    max_iter: int = 500,
    seed: int = 0,
    a: float | None = None,
    c: float = SPSA_C,
) -> OptimizerResult:
    """Simultaneous-perturbation stochastic approximation.

    Perturbation signs come from ``default_rng(seed)``; measurement noise
    from ``default_rng(spec.noise.seed)``, so identical seeds reproduce the
    trajectory bit for bit.  When ``a`` is ``None`` it is calibrated from a
    few perturbation pairs at the initial point so the first step moves each
    parameter by about 0.1 rad.  The final parameters are evaluated once more
    and reported as ``final_energy``.
    """
    if max_iter < 0:
        raise ValueError("max_iter must be nonnegative")
    n = spec.n_parameters
    x = np.zeros(n) if init_params is None else np.array(init_params, dtype=float)
    if x.shape != (n,):
        raise ArityError(f"{x.size} initial parameters for {n} factors")
    pert_rng = np.random.default_rng(seed)
    noise_rng = np.random.default_rng(spec.noise.seed)
    rec = _Recorder()

    def f(p: np.ndarray) -> float:
        e = evaluate(spec, p, noise_rng)
        rec.record(p, e)
        return e

    if max_iter == 0 or n == 0:
        e0 = f(x)
        return OptimizerResult(x, e0, rec.trajectory, len(rec.trajectory), n == 0, x.copy(), e0, "spsa")

    big_a = 0.1 * max_iter
    if a is None:
        mags = []
        for _ in range(SPSA_CALIBRATION_PAIRS):
            delta = pert_rng.choice((-1.0, 1.0), size=n)
            mags.append(abs(f(x + c * delta) - f(x - c * delta)) / (2.0 * c))
        g0 = float(np.mean(mags))
        a = SPSA_FIRST_STEP * (1.0 + big_a) ** SPSA_ALPHA / g0 if g0 > 0 else SPSA_FIRST_STEP
    ak, ck = spsa_gains(max_iter, a, c)
    for k in range(max_iter):
        delta = pert_rng.choice((-1.0, 1.0), size=n)
        fp = f(x + ck[k] * delta)
        fm = f(x - ck[k] * delta)
        x = x - ak[k] * (fp - fm) / (2.0 * ck[k]) * delta
    final = f(x)
    return OptimizerResult(
        best_params=rec.best_params,
        best_energy=rec.best_energy,
        trajectory=rec.trajectory,
        evaluations=len(rec.trajectory),
        converged=True,
        final_params=x,
        final_energy=final,
        method="spsa",
        message=f"a={a!r} c={c!r} A={big_a!r}",
    )
