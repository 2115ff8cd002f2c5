import threading
from collections import OrderedDict
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from liner_optimizer.constants import GMRES_EPS_FACTOR
from liner_optimizer.errors import ConvergenceError, SingularSystemError
from liner_optimizer.models import (
    BlockSystem,
    FomOperators,
    Impedance,
    RandomParams,
    SolverSettings,
    SolverStats,
)
from liner_optimizer.utils import block_diag2, impedance_coefficients

HELMHOLTZ_SHIFT = (1.0, 0.0)


def assemble_block(
    fom: FomOperators,
    theta: RandomParams,
    xi: Impedance,
    shift: Tuple[float, float] = HELMHOLTZ_SHIFT,
) -> sparse.csr_matrix:
    """
    Real 2n x 2n form [[B, -C], [C, B]] of -Laplace - (beta1 - beta2 i) k^2
    with the liner and far-field Robin terms.

    shift=(1, 0) is the Helmholtz operator itself; any other shift gives the
    shifted Laplacian used as a preconditioner.
    """
    beta1, beta2 = shift
    k = theta.k
    liner_real, liner_imag = impedance_coefficients(k, xi)
    B = fom.S0 - (beta1 * k**2) * fom.M0
    C = (beta2 * k**2) * fom.M0 + k * fom.K4_0
    if liner_real or liner_imag:
        B = B + liner_real * fom.K2_0
        C = C + liner_imag * fom.K2_0
    return sparse.bmat([[B, -C], [C, B]], format="csr")


def dirichlet_indicator(fom: FomOperators) -> np.ndarray:
    d = np.zeros(2 * fom.n)
    d[fom.block_dirichlet_idx] = 1.0
    return d


def dirichlet_load(fom: FomOperators, theta: RandomParams) -> np.ndarray:
    """b = mu_r [g; 0] + mu_i [0; g]. Independent of k and xi."""
    return np.concatenate([theta.mu_r * fom.g_gamma1, theta.mu_i * fom.g_gamma1])


def apply_dirichlet(
    Atilde: sparse.spmatrix,
    fom: FomOperators,
    theta: RandomParams,
    xi: Optional[Impedance] = None,
) -> BlockSystem:
    """A = (I - D) Atilde + D, where D marks source nodes in both blocks."""
    d = dirichlet_indicator(fom)
    A = sparse.diags(1.0 - d) @ sparse.csr_matrix(Atilde) + sparse.diags(d)
    A = sparse.csc_matrix(A)
    A.eliminate_zeros()
    return BlockSystem(
        A=A,
        b=dirichlet_load(fom, theta),
        n=fom.n,
        theta=theta,
        xi=xi,
        fom=fom,
    )


def assemble_system(
    fom: FomOperators,
    theta: RandomParams,
    xi: Impedance,
    shift: Tuple[float, float] = HELMHOLTZ_SHIFT,
) -> BlockSystem:
    return apply_dirichlet(assemble_block(fom, theta, xi, shift), fom, theta, xi)


def block_mass(fom: FomOperators) -> sparse.csr_matrix:
    return block_diag2(fom.M0)


def noise_energy(p: np.ndarray, fom: FomOperators) -> float:
    n = fom.n
    p = np.asarray(p, dtype=float)
    if p.shape != (2 * n,):
        raise ValueError(f"Expected a block vector of length {2 * n}, got shape {p.shape}")
    p_r, p_i = p[:n], p[n:]
    return float(p_r @ (fom.M0 @ p_r) + p_i @ (fom.M0 @ p_i))


def _factorize(A: sparse.spmatrix) -> spla.SuperLU:
    try:
        return spla.splu(sparse.csc_matrix(A))
    except RuntimeError as exc:
        raise SingularSystemError(f"Sparse factorization failed: {exc}") from exc


def _gmres(
    A: sparse.spmatrix,
    b: np.ndarray,
    preconditioner: spla.SuperLU,
    settings: SolverSettings,
    transpose: bool = False,
) -> Tuple[np.ndarray, int]:
    """
    Restarted GMRES with the shifted-Laplacian factorization as preconditioner.

    Cycles of settings.restart iterations run until the true relative
    residual ||b - A p|| / ||b|| meets tol or max_iter iterations are spent.
    tol = 0 means machine precision: GMRES_EPS_FACTOR epsilons.
    """
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros_like(b), 0

    trans = "T" if transpose else "N"
    operator = A.T if transpose else A
    M = spla.LinearOperator(
        shape=A.shape, dtype=float, matvec=lambda v: preconditioner.solve(v, trans=trans)
    )
    target = settings.tol if settings.tol > 0 else GMRES_EPS_FACTOR * np.finfo(float).eps
    p = np.zeros_like(b)
    residual = 1.0
    iterations = 0
    while iterations < settings.max_iter:
        cycle = [0]

        def count(_):
            cycle[0] += 1

        p, info = spla.gmres(
            operator,
            b,
            x0=p,
            rtol=target,
            atol=0.0,
            restart=min(settings.restart, settings.max_iter - iterations),
            maxiter=1,
            M=M,
            callback=count,
            callback_type="pr_norm",
        )
        if info < 0:
            raise SingularSystemError(f"GMRES breakdown (info={info})")
        iterations += cycle[0]
        previous, residual = residual, float(np.linalg.norm(b - operator @ p) / b_norm)
        if residual <= target:
            return p, iterations
        if cycle[0] == 0 or residual >= previous:
            # stagnated; further restarts repeat the same cycle
            break
    raise ConvergenceError(residual=residual, iterations=iterations, max_iter=settings.max_iter)


def _shifted_factorization(system: BlockSystem, settings: SolverSettings) -> spla.SuperLU:
    if system.xi is None:
        raise ValueError("The shifted-Laplacian preconditioner needs the system impedance")
    shifted = assemble_system(
        system.fom, system.theta, system.xi, shift=(settings.beta1, settings.beta2)
    )
    return _factorize(shifted.A)


def solve_fom(
    system: BlockSystem,
    settings: Optional[SolverSettings] = None,
    stats: Optional[SolverStats] = None,
) -> np.ndarray:
    settings = settings or SolverSettings()
    if settings.method == "direct":
        lu = _factorize(system.A)
        p = lu.solve(np.array(system.b))
        if stats is not None:
            stats.record(factorizations=1, solves=1)
        return p

    preconditioner = _shifted_factorization(system, settings)
    p, iterations = _gmres(system.A, np.array(system.b), preconditioner, settings)
    if stats is not None:
        stats.record(factorizations=1, solves=1, gmres_iterations=iterations)
    return p


class FomSolver:
    """
    Full-order solves with one factorization per (k, xi).

    The system matrix does not depend on mu, so samples that share k and xi
    reuse the cached factorization (or preconditioner, for GMRES). At most
    settings.cache_size entries are kept, least recently used evicted first.
    Safe to call from several threads.
    """

    def __init__(
        self,
        fom: FomOperators,
        settings: Optional[SolverSettings] = None,
        stats: Optional[SolverStats] = None,
    ):
        self.fom = fom
        self.settings = settings or SolverSettings()
        self.stats = stats if stats is not None else SolverStats()
        self._cache: "OrderedDict[tuple, tuple]" = OrderedDict()
        self._lock = threading.Lock()

    @staticmethod
    def _key(k: float, xi: Impedance) -> tuple:
        if xi.hard_wall:
            return (float(k), True, 0.0, 0.0)
        return (float(k), False, float(xi.xi_r), float(xi.xi_i))

    def _entry(self, theta: RandomParams, xi: Impedance) -> tuple:
        key = self._key(theta.k, xi)
        with self._lock:
            entry = self._cache.get(key)
            if entry is not None:
                self._cache.move_to_end(key)
                return entry

        system = assemble_system(self.fom, theta, xi)
        if self.settings.method == "direct":
            entry = (system.A, _factorize(system.A))
        else:
            entry = (system.A, _shifted_factorization(system, self.settings))
        with self._lock:
            # another thread may have raced us; keep the first entry
            if key not in self._cache:
                self._cache[key] = entry
                self.stats.record(factorizations=1)
                while len(self._cache) > self.settings.cache_size:
                    self._cache.popitem(last=False)
            return self._cache.get(key, entry)

    def solve(self, theta: RandomParams, xi: Impedance) -> np.ndarray:
        return self.solve_rhs(theta, xi, dirichlet_load(self.fom, theta))

    def solve_rhs(
        self, theta: RandomParams, xi: Impedance, rhs: np.ndarray, transpose: bool = False
    ) -> np.ndarray:
        """Solve A x = rhs (or A^T x = rhs) for the system matrix at (k, xi)."""
        A, lu = self._entry(theta, xi)
        rhs = np.asarray(rhs, dtype=float)
        if self.settings.method == "direct":
            x = lu.solve(rhs, trans="T" if transpose else "N")
            self.stats.record(solves=1)
            return x
        x, iterations = _gmres(A, rhs, lu, self.settings, transpose=transpose)
        self.stats.record(solves=1, gmres_iterations=iterations)
        return x

    def clear(self) -> None:
        with self._lock:
            self._cache.clear()

    @property
    def cached_factorizations(self) -> int:
        return len(self._cache)
