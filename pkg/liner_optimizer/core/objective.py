"""
Risk-averse and deterministic liner objectives with adjoint gradients.

A state model maps (samples, impedance) to states and energies and turns
per-sample adjoint coefficients into impedance sensitivities. The reduced
model works on dense N x N systems; the full-order model on the sparse
block system. Both feed the same objectives, so the optimizer never knows
which one it is driving.
"""

from typing import Callable, Optional, Protocol, Sequence, Tuple

import numpy as np
import scipy.linalg

from liner_optimizer.core.helmholtz import FomSolver, block_mass, dirichlet_indicator
from liner_optimizer.core.risk import plus, smoothed_plus, smoothed_plus_d
from liner_optimizer.core.rom import (
    assemble_rom_matrix,
    batch_energies,
    factor_rom,
    solve_rom_batch,
)
from liner_optimizer.core.sampling import nominal_params
from liner_optimizer.models import (
    CvarConfig,
    FomOperators,
    Impedance,
    RandomParams,
    RomOperators,
    SolverSettings,
)
from liner_optimizer.utils import (
    block_diag2,
    impedance_derivatives,
    map_samples,
    skew_block,
)


class StateModel(Protocol):
    pde_solves: int

    def solve_states(self, thetas: Sequence[RandomParams], xi: Impedance) -> np.ndarray: ...

    def energies(self, states: np.ndarray) -> np.ndarray: ...

    def adjoint_terms(
        self,
        thetas: Sequence[RandomParams],
        xi: Impedance,
        states: np.ndarray,
        coefficients: np.ndarray,
    ) -> np.ndarray: ...


class ReducedModel:
    """Dense reduced systems A_r(theta, xi) p_rb = b_r(theta)."""

    def __init__(self, rom_ops: RomOperators, workers: int = 1):
        self.rom_ops = rom_ops
        self.workers = workers
        self.pde_solves = 0

    def solve_states(self, thetas: Sequence[RandomParams], xi: Impedance) -> np.ndarray:
        states = solve_rom_batch(self.rom_ops, thetas, xi, self.workers)
        self.pde_solves += len(thetas)
        return states

    def energies(self, states: np.ndarray) -> np.ndarray:
        return batch_energies(self.rom_ops, states)

    def adjoint_terms(
        self,
        thetas: Sequence[RandomParams],
        xi: Impedance,
        states: np.ndarray,
        coefficients: np.ndarray,
    ) -> np.ndarray:
        """
        Row j holds q_j^T (dA_r/dxi_c) p_j for c in (xi_r, xi_i), where
        A_r^T q_j = coefficients[j] * Mr_energy p_j. Zero coefficients skip the solve.
        """
        ops = self.rom_ops
        derivatives = impedance_derivatives(xi)
        active = np.flatnonzero(coefficients)

        def term(position: int) -> np.ndarray:
            j = int(active[position])
            theta, p = thetas[j], states[j]
            factor = factor_rom(assemble_rom_matrix(ops, theta.k, xi), sample_index=j)
            q = scipy.linalg.lu_solve(factor, coefficients[j] * (ops.Mr_energy @ p), trans=1)
            K2p, K2sp = ops.K2r @ p, ops.K2r_skew @ p
            return theta.k * np.array(
                [
                    derivatives[0, 0] * (q @ K2p) + derivatives[0, 1] * (q @ K2sp),
                    derivatives[1, 0] * (q @ K2p) + derivatives[1, 1] * (q @ K2sp),
                ]
            )

        terms = np.zeros((len(thetas), 2))
        if active.size:
            terms[active] = np.array(map_samples(term, active.size, self.workers))
        self.pde_solves += int(active.size)
        return terms


class FullOrderModel:
    """Sparse block systems, with one cached factorization per (k, xi)."""

    def __init__(
        self,
        fom: FomOperators,
        settings: Optional[SolverSettings] = None,
        workers: int = 1,
    ):
        self.fom = fom
        self.solver = FomSolver(fom, settings)
        self.workers = workers
        self.pde_solves = 0
        self._mass = block_mass(fom)
        self._interior = 1.0 - dirichlet_indicator(fom)
        self._K2 = block_diag2(fom.K2_0)
        self._K2_skew = skew_block(fom.K2_0)
        self._cached_xi: Optional[Impedance] = None

    def _use(self, xi: Impedance) -> None:
        # factorizations are only reused at a fixed impedance
        if xi != self._cached_xi:
            self.solver.clear()
            self._cached_xi = xi

    def solve_states(self, thetas: Sequence[RandomParams], xi: Impedance) -> np.ndarray:
        self._use(xi)
        states = map_samples(lambda j: self.solver.solve(thetas[j], xi), len(thetas), self.workers)
        self.pde_solves += len(thetas)
        return np.array(states).reshape(len(thetas), 2 * self.fom.n)

    def energies(self, states: np.ndarray) -> np.ndarray:
        return np.einsum("qi,qi->q", states, (self._mass @ states.T).T)

    def adjoint_terms(
        self,
        thetas: Sequence[RandomParams],
        xi: Impedance,
        states: np.ndarray,
        coefficients: np.ndarray,
    ) -> np.ndarray:
        self._use(xi)
        derivatives = impedance_derivatives(xi)
        active = np.flatnonzero(coefficients)

        def term(position: int) -> np.ndarray:
            j = int(active[position])
            theta, p = thetas[j], states[j]
            rhs = coefficients[j] * (self._mass @ p)
            q = self.solver.solve_rhs(theta, xi, rhs, transpose=True)
            masked_q = self._interior * q
            K2p, K2sp = self._K2 @ p, self._K2_skew @ p
            return theta.k * np.array(
                [
                    derivatives[0, 0] * (masked_q @ K2p) + derivatives[0, 1] * (masked_q @ K2sp),
                    derivatives[1, 0] * (masked_q @ K2p) + derivatives[1, 1] * (masked_q @ K2sp),
                ]
            )

        terms = np.zeros((len(thetas), 2))
        if active.size:
            terms[active] = np.array(map_samples(term, active.size, self.workers))
        self.pde_solves += int(active.size)
        return terms


def hard_wall_energy(model: StateModel, theta: RandomParams) -> float:
    states = model.solve_states([theta], Impedance.hard())
    return float(model.energies(states)[0])


def compute_gamma_p(model: StateModel, cfg: CvarConfig) -> float:
    """Hard-wall energy at the upper corner of the sampling box."""
    energy = hard_wall_energy(model, nominal_params(cfg))
    if not energy > 0:
        raise ValueError(f"Hard-wall energy must be positive to normalize, got {energy}")
    return energy


def cvar_value(
    energies: np.ndarray,
    alpha: float,
    xi: Impedance,
    cfg: CvarConfig,
    plus_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> float:
    """
    1/2 [alpha + 1/(1-beta) sum_j w_j h(E_j/gamma_p - alpha)] + gamma/2 |xi|^2.

    plus_fn replaces the smoothed plus function, e.g. by the exact one.
    """
    weights = cfg.quadrature_weights()
    excess = np.asarray(energies) / cfg.gamma_p - alpha
    h = plus_fn(excess) if plus_fn is not None else smoothed_plus(excess, cfg.eps)
    risk = np.sum(weights * h)
    return float(
        0.5 * (alpha + risk / (1.0 - cfg.beta))
        + 0.5 * cfg.gamma * (xi.xi_r**2 + xi.xi_i**2)
    )


def unsmoothed_cvar_value(
    energies: np.ndarray, alpha: float, xi: Impedance, cfg: CvarConfig
) -> float:
    return cvar_value(energies, alpha, xi, cfg, plus_fn=plus)


class CvarObjective:
    """
    Smoothed CVaR of the normalized noise energy over fixed samples.

    Controls are x = (xi_r, xi_i, alpha). Points with xi_r <= 0 are not
    physical and evaluate to +inf so that line searches back off.
    """

    n_controls = 3

    def __init__(self, model: StateModel, samples: Sequence[RandomParams], cfg: CvarConfig):
        if len(samples) != cfg.Q:
            raise ValueError(f"Expected {cfg.Q} samples, got {len(samples)}")
        self.model = model
        self.samples = list(samples)
        self.cfg = cfg
        self.evaluations = 0
        self._cached: Optional[Tuple[bytes, np.ndarray, np.ndarray]] = None

    @property
    def pde_solves(self) -> int:
        return self.model.pde_solves

    def _states(self, xi: Impedance, key: bytes) -> Tuple[np.ndarray, np.ndarray]:
        if self._cached is not None and self._cached[0] == key:
            return self._cached[1], self._cached[2]
        states = self.model.solve_states(self.samples, xi)
        energies = self.model.energies(states)
        self.evaluations += 1
        self._cached = (key, states, energies)
        return states, energies

    @staticmethod
    def _split(x: np.ndarray) -> Tuple[Optional[Impedance], float, bytes]:
        x = np.asarray(x, dtype=float)
        if not x[0] > 0:
            return None, float(x[2]), b""
        return Impedance(xi_r=float(x[0]), xi_i=float(x[1])), float(x[2]), x[:2].tobytes()

    def value(self, x: np.ndarray) -> float:
        xi, alpha, key = self._split(x)
        if xi is None:
            return np.inf
        _, energies = self._states(xi, key)
        return cvar_value(energies, alpha, xi, self.cfg)

    def energies(self, x: np.ndarray) -> np.ndarray:
        xi, _, key = self._split(x)
        if xi is None:
            raise ValueError(f"Liner resistance must be positive, got xi_r={x[0]}")
        return self._states(xi, key)[1]

    def value_and_gradient(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        xi, alpha, key = self._split(x)
        if xi is None:
            raise ValueError(f"Liner resistance must be positive, got xi_r={x[0]}")
        cfg = self.cfg
        states, energies = self._states(xi, key)
        weights = cfg.quadrature_weights()

        h_prime = smoothed_plus_d(energies / cfg.gamma_p - alpha, cfg.eps)
        coefficients = h_prime / ((1.0 - cfg.beta) * cfg.gamma_p)
        terms = self.model.adjoint_terms(self.samples, xi, states, coefficients)

        gradient = np.empty(3)
        gradient[:2] = cfg.gamma * np.array([xi.xi_r, xi.xi_i]) - np.sum(
            weights[:, None] * terms, axis=0
        )
        gradient[2] = 0.5 - np.sum(weights * h_prime) / (2.0 * (1.0 - cfg.beta))
        return cvar_value(energies, alpha, xi, cfg), gradient


class DeterministicObjective:
    """1/2 E(theta, xi)/gamma_p + gamma/2 |xi|^2 at a single theta; controls (xi_r, xi_i)."""

    n_controls = 2

    def __init__(self, model: StateModel, theta: RandomParams, gamma: float, gamma_p: float):
        if not gamma_p > 0:
            raise ValueError(f"gamma_p must be positive, got {gamma_p}")
        self.model = model
        self.theta = theta
        self.gamma = gamma
        self.gamma_p = gamma_p
        self.evaluations = 0

    @property
    def pde_solves(self) -> int:
        return self.model.pde_solves

    def _evaluate(self, xi: Impedance) -> Tuple[np.ndarray, float]:
        states = self.model.solve_states([self.theta], xi)
        self.evaluations += 1
        energy = float(self.model.energies(states)[0])
        value = 0.5 * energy / self.gamma_p + 0.5 * self.gamma * (xi.xi_r**2 + xi.xi_i**2)
        return states, value

    def value(self, x: np.ndarray) -> float:
        if not x[0] > 0:
            return np.inf
        return self._evaluate(Impedance(xi_r=float(x[0]), xi_i=float(x[1])))[1]

    def value_and_gradient(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        xi = Impedance(xi_r=float(x[0]), xi_i=float(x[1]))
        states, value = self._evaluate(xi)
        terms = self.model.adjoint_terms(
            [self.theta], xi, states, np.array([1.0 / self.gamma_p])
        )
        gradient = self.gamma * np.array([xi.xi_r, xi.xi_i]) - terms[0]
        return value, gradient


def evaluate_objective(
    xi: Impedance,
    alpha: float,
    samples: Sequence[RandomParams],
    rom_ops: RomOperators,
    cfg: CvarConfig,
    workers: int = 1,
) -> Tuple[float, np.ndarray]:
    """J at (xi, alpha) and the per-sample reduced energies."""
    model = ReducedModel(rom_ops, workers)
    energies = model.energies(model.solve_states(samples, xi))
    return cvar_value(energies, alpha, xi, cfg), energies


def solve_adjoints_and_gradient(
    xi: Impedance,
    alpha: float,
    samples: Sequence[RandomParams],
    rom_ops: RomOperators,
    cfg: CvarConfig,
    workers: int = 1,
) -> np.ndarray:
    """Gradient (dJ/dxi_r, dJ/dxi_i, dJ/dalpha)."""
    objective = CvarObjective(ReducedModel(rom_ops, workers), samples, cfg)
    _, gradient = objective.value_and_gradient(np.array([xi.xi_r, xi.xi_i, alpha]))
    return gradient
