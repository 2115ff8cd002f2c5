import warnings
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from liner_optimizer.constants import MAX_ROM_MODES
from liner_optimizer.core.helmholtz import FomSolver, dirichlet_indicator
from liner_optimizer.core.pod import truncate_basis
from liner_optimizer.errors import SingularSystemError
from liner_optimizer.models import (
    FomOperators,
    Impedance,
    PodBasis,
    RandomParams,
    RomOperators,
    RomSolution,
)
from liner_optimizer.utils import (
    block_diag2,
    impedance_coefficients,
    map_samples,
    skew_block,
)

RomFactor = Tuple[np.ndarray, np.ndarray]

# Stacked solves per chunk in batched energy evaluation
BATCH_CHUNK = 256


def project_operators(basis: PodBasis, fom: FomOperators) -> RomOperators:
    """
    Offline Galerkin projection of the Dirichlet-imposed block system.

    With D marking source rows, Z_m = (I - D) Z gives Mr = Z_m^T M Z and
    likewise for S, K2 and the skew blocks, Ir = Z^T D Z, and the energy
    matrix Z^T M Z.
    """
    Z = np.asarray(basis.Z, dtype=float)
    if Z.shape[0] != 2 * fom.n:
        raise ValueError(
            f"Basis has {Z.shape[0]} rows but the full-order system has {2 * fom.n} unknowns"
        )
    if basis.N > MAX_ROM_MODES:
        raise ValueError(f"Reduced models are limited to {MAX_ROM_MODES} modes, got {basis.N}")

    d = dirichlet_indicator(fom)
    Zm = (1.0 - d)[:, None] * Z
    Zd = d[:, None] * Z

    M_block = block_diag2(fom.M0)
    MZ = M_block @ Z
    g = fom.g_gamma1
    zeros = np.zeros_like(g)
    return RomOperators(
        Mr=Zm.T @ MZ,
        Sr=Zm.T @ (block_diag2(fom.S0) @ Z),
        K2r=Zm.T @ (block_diag2(fom.K2_0) @ Z),
        K2r_skew=Zm.T @ (skew_block(fom.K2_0) @ Z),
        K4r_skew=Zm.T @ (skew_block(fom.K4_0) @ Z),
        Ir=Zd.T @ Zd,
        Mr_energy=Z.T @ MZ,
        gr_red=Z.T @ np.concatenate([g, zeros]),
        gi_red=Z.T @ np.concatenate([zeros, g]),
        mode=basis.mode,
        basis_ref=basis.basis_ref,
    )


def assemble_rom_matrix(rom_ops: RomOperators, k: float, xi: Impedance) -> np.ndarray:
    """A_r at wavenumber k; k=0 is allowed and leaves Sr + Ir."""
    liner_real, liner_imag = impedance_coefficients(k, xi)
    A_r = rom_ops.Sr - k**2 * rom_ops.Mr + k * rom_ops.K4r_skew + rom_ops.Ir
    if liner_real or liner_imag:
        A_r = A_r + liner_real * rom_ops.K2r + liner_imag * rom_ops.K2r_skew
    return A_r


def assemble_rom_load(rom_ops: RomOperators, theta: RandomParams) -> np.ndarray:
    return theta.mu_r * rom_ops.gr_red + theta.mu_i * rom_ops.gi_red


def assemble_rom(
    rom_ops: RomOperators, theta: RandomParams, xi: Impedance
) -> Tuple[np.ndarray, np.ndarray]:
    return assemble_rom_matrix(rom_ops, theta.k, xi), assemble_rom_load(rom_ops, theta)


def factor_rom(A_r: np.ndarray, sample_index: Optional[int] = None) -> RomFactor:
    """Dense LU with partial pivoting; near-singular systems raise with a condition estimate."""
    A_r = np.asarray(A_r, dtype=float)
    if A_r.ndim != 2 or A_r.shape[0] != A_r.shape[1]:
        raise ValueError(f"Reduced system must be square, got shape {A_r.shape}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A_r)
    anorm = np.linalg.norm(A_r, 1)
    rcond, _ = lapack.dgecon(lu, anorm, norm="1")
    if not rcond > np.finfo(float).eps:
        condition = np.inf if rcond == 0 else 1.0 / rcond
        raise SingularSystemError(
            "Reduced system is singular to working precision",
            sample_index=sample_index,
            condition=condition,
        )
    return lu, piv


def solve_rom(
    A_r: np.ndarray,
    b_r: np.ndarray,
    theta: Optional[RandomParams] = None,
    xi: Optional[Impedance] = None,
    sample_index: Optional[int] = None,
) -> RomSolution:
    factor = factor_rom(A_r, sample_index)
    p_rb = scipy.linalg.lu_solve(factor, np.asarray(b_r, dtype=float))
    return RomSolution(p_rb=p_rb, theta=theta, xi=xi)


def rom_energy(sol: RomSolution, rom_ops: RomOperators) -> float:
    p = sol.p_rb
    return float(p @ (rom_ops.Mr_energy @ p))


def solve_rom_batch(
    rom_ops: RomOperators,
    thetas: Sequence[RandomParams],
    xi: Impedance,
    workers: int = 1,
) -> np.ndarray:
    """
    Reduced coordinates for many samples at one impedance, shape (Q, N).

    Samples are solved in stacked chunks. A chunk with a singular or
    ill-conditioned system (1-norm condition past 1/eps, as in factor_rom) is
    redone sample by sample to name the failing index.
    """
    count = len(thetas)
    chunks = [slice(i, min(i + BATCH_CHUNK, count)) for i in range(0, count, BATCH_CHUNK)]

    def solve_chunk(index: int) -> np.ndarray:
        chunk = chunks[index]
        indices = range(chunk.start, chunk.stop)
        A = np.stack([assemble_rom_matrix(rom_ops, thetas[j].k, xi) for j in indices])
        b = np.stack([assemble_rom_load(rom_ops, thetas[j]) for j in indices])
        with np.errstate(all="ignore"):
            condition = np.linalg.cond(A, 1)
        if np.all(condition * np.finfo(float).eps < 1.0):
            try:
                return np.linalg.solve(A, b[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                pass
        return np.stack(
            [solve_rom(A[row], b[row], sample_index=j).p_rb for row, j in enumerate(indices)]
        )

    solved = map_samples(solve_chunk, len(chunks), workers)
    if not solved:
        return np.zeros((0, rom_ops.N))
    return np.concatenate(solved, axis=0)


def batch_energies(rom_ops: RomOperators, coordinates: np.ndarray) -> np.ndarray:
    return np.einsum("qi,ij,qj->q", coordinates, rom_ops.Mr_energy, coordinates)


def reconstruct(basis: PodBasis, sol: RomSolution) -> np.ndarray:
    return basis.Z @ sol.p_rb


def relative_error(
    xi: Impedance,
    theta: RandomParams,
    basis: PodBasis,
    fom: FomOperators,
    solver: Optional[FomSolver] = None,
    rom_ops: Optional[RomOperators] = None,
    p_fom: Optional[np.ndarray] = None,
) -> float:
    """||Z p_rb - p|| / ||p|| with p the full-order solution."""
    if p_fom is None:
        solver = solver or FomSolver(fom)
        p_fom = solver.solve(theta, xi)
    norm = np.linalg.norm(p_fom)
    if norm == 0.0:
        raise ValueError("Relative error is undefined for a zero full-order solution")
    rom_ops = rom_ops or project_operators(basis, fom)
    sol = solve_rom(*assemble_rom(rom_ops, theta, xi), theta=theta, xi=xi)
    return float(np.linalg.norm(reconstruct(basis, sol) - p_fom) / norm)


def validate_rom(
    basis: PodBasis,
    fom: FomOperators,
    mode_counts: Sequence[int],
    draws: Sequence[Tuple[RandomParams, Impedance]],
    solver: Optional[FomSolver] = None,
    workers: int = 1,
) -> np.ndarray:
    """
    Relative errors for every (mode count, draw) pair, shape (len(mode_counts), len(draws)).

    Full-order solutions are computed once and shared across mode counts.
    """
    solver = solver or FomSolver(fom)
    references: List[np.ndarray] = map_samples(
        lambda j: solver.solve(*draws[j]), len(draws), workers
    )
    errors = np.zeros((len(mode_counts), len(draws)))
    for row, N in enumerate(mode_counts):
        truncated = truncate_basis(basis, N)
        rom_ops = project_operators(truncated, fom)

        def error_for(j: int) -> float:
            theta, xi = draws[j]
            return relative_error(
                xi, theta, truncated, fom, rom_ops=rom_ops, p_fom=references[j]
            )

        errors[row] = map_samples(error_for, len(draws), workers)
    return errors
