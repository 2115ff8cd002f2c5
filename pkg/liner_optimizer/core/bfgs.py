import time
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from liner_optimizer.core.objective import (
    CvarObjective,
    DeterministicObjective,
    ReducedModel,
    StateModel,
)
from liner_optimizer.core.sampling import sample_params
from liner_optimizer.models import (
    CvarConfig,
    Impedance,
    IterationRecord,
    OptimizerSettings,
    OptState,
    RandomParams,
    RomOperators,
)
from liner_optimizer.types import OptStatus


class Objective(Protocol):
    def value(self, x: np.ndarray) -> float: ...

    def value_and_gradient(self, x: np.ndarray) -> Tuple[float, np.ndarray]: ...


class FunctionObjective:
    """Wraps a plain value/gradient pair, e.g. an analytic test function."""

    def __init__(self, fun: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray]):
        self.fun = fun
        self.grad = grad
        self.evaluations = 0
        self.pde_solves = 0

    def value(self, x: np.ndarray) -> float:
        self.evaluations += 1
        return float(self.fun(x))

    def value_and_gradient(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        self.evaluations += 1
        return float(self.fun(x)), np.asarray(self.grad(x), dtype=float)


class BfgsStep(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    iter: int
    J: float
    grad_norm: float
    x: np.ndarray
    step_len: float


class BfgsResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    x: np.ndarray
    J: float
    H: np.ndarray
    iterations: int
    status: OptStatus
    history: Tuple[BfgsStep, ...]
    wall_time: float


def armijo_line_search(
    phi: Callable[[float], float],
    phi0: float,
    derphi0: float,
    c1: float,
    max_trials: int,
    alpha0: float = 1.0,
) -> Tuple[Optional[float], float]:
    """
    Backtracking on phi(t) = J(x + t v) until the sufficient-decrease test passes.

    The first backtrack minimizes a quadratic model, later ones a cubic fitted
    to the two most recent trials. Returns (None, last value) after max_trials.
    """

    def accepted(t: float, value: float) -> bool:
        return np.isfinite(value) and value <= phi0 + c1 * t * derphi0

    phi_a0 = phi(alpha0)
    if accepted(alpha0, phi_a0):
        return alpha0, phi_a0
    if max_trials == 1:
        return None, phi_a0

    if np.isfinite(phi_a0):
        alpha1 = -derphi0 * alpha0**2 / 2.0 / (phi_a0 - phi0 - derphi0 * alpha0)
    else:
        alpha1 = alpha0 / 2.0
    alpha1 = float(np.clip(alpha1, 0.1 * alpha0, 0.5 * alpha0))
    phi_a1 = phi(alpha1)
    if accepted(alpha1, phi_a1):
        return alpha1, phi_a1

    for _ in range(max_trials - 2):
        alpha2 = alpha1 / 2.0
        if np.isfinite(phi_a0) and np.isfinite(phi_a1):
            factor = alpha0**2 * alpha1**2 * (alpha1 - alpha0)
            r1 = phi_a1 - phi0 - derphi0 * alpha1
            r0 = phi_a0 - phi0 - derphi0 * alpha0
            a = (alpha0**2 * r1 - alpha1**2 * r0) / factor
            b = (-(alpha0**3) * r1 + alpha1**3 * r0) / factor
            if a != 0.0:
                cubic = (-b + np.sqrt(abs(b**2 - 3.0 * a * derphi0))) / (3.0 * a)
                if np.isfinite(cubic):
                    alpha2 = float(np.clip(cubic, 0.1 * alpha1, 0.5 * alpha1))
        phi_a2 = phi(alpha2)
        if accepted(alpha2, phi_a2):
            return alpha2, phi_a2
        alpha0, alpha1 = alpha1, alpha2
        phi_a0, phi_a1 = phi_a1, phi_a2

    return None, phi_a1


def minimize_bfgs(
    objective: Objective,
    x0: Sequence[float],
    settings: Optional[OptimizerSettings] = None,
) -> BfgsResult:
    """
    Quasi-Newton descent with the inverse-Hessian BFGS update.

    H starts at I/||g0||. Updates are skipped when y.s is not positive enough,
    and a non-descent direction resets H. A failed line search ends the run
    at the best iterate so far.
    """
    settings = settings or OptimizerSettings()
    start = time.perf_counter()

    x = np.array(x0, dtype=float)
    dim = x.size
    J, g = objective.value_and_gradient(x)
    J0, g0_norm = J, float(np.linalg.norm(g))
    H = np.eye(dim) / g0_norm if g0_norm > 0 else np.eye(dim)
    history: List[BfgsStep] = [
        BfgsStep(iter=0, J=J, grad_norm=g0_norm, x=x.copy(), step_len=0.0)
    ]
    iteration = 0
    status: OptStatus = "RUNNING"

    while status == "RUNNING":
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= settings.gtol * g0_norm:
            status = "CONVERGED_GRADIENT"
            break
        if iteration >= settings.max_iter:
            status = "MAX_ITERATIONS"
            break

        direction = -H @ g
        slope = float(g @ direction)
        if not slope < 0:
            H = np.eye(dim) / grad_norm
            direction = -H @ g
            slope = float(g @ direction)

        step, _ = armijo_line_search(
            lambda t: objective.value(x + t * direction),
            J,
            slope,
            settings.c1,
            settings.max_trials,
        )
        if step is None:
            status = "LINE_SEARCH_FAILED"
            break

        s = step * direction
        x_new = x + s
        J_new, g_new = objective.value_and_gradient(x_new)
        y = g_new - g
        ys = float(y @ s)
        if ys > settings.curvature_eps:
            rho = 1.0 / ys
            V = np.eye(dim) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
            H = 0.5 * (H + H.T)

        iteration += 1
        step_len = float(np.linalg.norm(s))
        history.append(
            BfgsStep(
                iter=iteration,
                J=J_new,
                grad_norm=float(np.linalg.norm(g_new)),
                x=x_new.copy(),
                step_len=step_len,
            )
        )
        x, J, g = x_new, J_new, g_new

        if abs(J) <= settings.ftol * abs(J0):
            status = "CONVERGED_OBJECTIVE"
        elif step_len <= settings.xtol * np.linalg.norm(x):
            status = "CONVERGED_STEP"

    return BfgsResult(
        x=x,
        J=J,
        H=H,
        iterations=iteration,
        status=status,
        history=tuple(history),
        wall_time=time.perf_counter() - start,
    )


def _records(result: BfgsResult, with_alpha: bool) -> Tuple[IterationRecord, ...]:
    return tuple(
        IterationRecord(
            iter=step.iter,
            J=step.J,
            grad_norm=step.grad_norm,
            xi_r=float(step.x[0]),
            xi_i=float(step.x[1]),
            alpha=float(step.x[2]) if with_alpha else None,
            step_len=step.step_len,
        )
        for step in result.history
    )


def _to_state(result: BfgsResult, objective: object, with_alpha: bool) -> OptState:
    return OptState(
        xi=Impedance(xi_r=float(result.x[0]), xi_i=float(result.x[1])),
        alpha=float(result.x[2]) if with_alpha else None,
        H=result.H,
        iter=result.iterations,
        history=_records(result, with_alpha),
        status=result.status,
        J=result.J,
        evaluations=getattr(objective, "evaluations", 0),
        pde_solves=getattr(objective, "pde_solves", 0),
    )


def optimize(
    cfg: CvarConfig,
    rom_ops: Optional[RomOperators],
    init_xi: Impedance,
    init_alpha: float,
    samples: Optional[Sequence[RandomParams]] = None,
    settings: Optional[OptimizerSettings] = None,
    workers: int = 1,
    objective: Optional[Objective] = None,
) -> OptState:
    """
    Minimize the smoothed CVaR objective over (xi_r, xi_i, alpha).

    `objective` replaces the reduced-model CVaR objective, e.g. with a
    full-order one or an analytic test function.
    """
    if init_xi.hard_wall or not init_xi.xi_r > 0:
        raise ValueError(f"Initial impedance must have positive resistance, got {init_xi}")
    if objective is None:
        if rom_ops is None:
            raise ValueError("optimize needs reduced operators or an explicit objective")
        samples = samples if samples is not None else sample_params(cfg)
        objective = CvarObjective(ReducedModel(rom_ops, workers), samples, cfg)
    result = minimize_bfgs(objective, [init_xi.xi_r, init_xi.xi_i, init_alpha], settings)
    return _to_state(result, objective, with_alpha=True)


def optimize_deterministic(
    model: StateModel,
    theta: RandomParams,
    gamma: float,
    gamma_p: float,
    init_xi: Impedance,
    settings: Optional[OptimizerSettings] = None,
) -> OptState:
    objective = DeterministicObjective(model, theta, gamma, gamma_p)
    result = minimize_bfgs(objective, [init_xi.xi_r, init_xi.xi_i], settings)
    return _to_state(result, objective, with_alpha=False)
