import itertools
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy import sparse

from liner_optimizer.core.helmholtz import FomSolver
from liner_optimizer.errors import RankError
from liner_optimizer.models import (
    FomOperators,
    PodBasis,
    SnapshotSample,
    SnapshotSet,
    SolverSettings,
    SolverStats,
)
from liner_optimizer.types import Range
from liner_optimizer.utils import block_diag2, fix_signs, map_samples


def default_sample_grid(
    k_count: int,
    k_range: Range,
    mu_set: Sequence[Tuple[float, float]],
    xir_set: Sequence[float],
    xii_set: Sequence[float],
) -> List[SnapshotSample]:
    """Cartesian product k x mu x xi_r x xi_i, k uniformly spaced on k_range."""
    if k_count < 2:
        raise ValueError(f"k_count must be at least 2, got {k_count}")
    for name, values in (("mu_set", mu_set), ("xir_set", xir_set), ("xii_set", xii_set)):
        if len(values) == 0:
            raise ValueError(f"{name} must not be empty")
    ks = np.linspace(k_range[0], k_range[1], k_count)
    return [
        SnapshotSample(k=float(k), mu_r=mu[0], mu_i=mu[1], xi_r=xr, xi_i=xi)
        for k, mu, xr, xi in itertools.product(ks, mu_set, xir_set, xii_set)
    ]


def solve_snapshot_columns(
    solver: FomSolver, samples: Sequence[SnapshotSample], workers: int = 1
) -> Tuple[np.ndarray, np.ndarray]:
    """Snapshot matrix with one column per sample, plus per-sample wall times."""

    def solve_one(index: int):
        sample = samples[index]
        start = time.perf_counter()
        p = solver.solve(sample.theta, sample.impedance)
        return p, time.perf_counter() - start

    results = map_samples(solve_one, len(samples), workers)
    P = np.column_stack([p for p, _ in results]) if results else np.zeros((2 * solver.fom.n, 0))
    seconds = np.array([t for _, t in results])
    return P, seconds


def build_snapshots(
    fom: FomOperators,
    samples: Sequence[SnapshotSample],
    settings: Optional[SolverSettings] = None,
    workers: int = 1,
    stats: Optional[SolverStats] = None,
) -> SnapshotSet:
    solver = FomSolver(fom, settings, stats)
    P, _ = solve_snapshot_columns(solver, samples, workers)
    return SnapshotSet(P=P, samples=list(samples))


def cumulative_energy(singular_values: np.ndarray) -> np.ndarray:
    """sqrt(sum_{i<=N} s_i^2) / sqrt(sum_i s_i^2) for every N."""
    s2 = np.asarray(singular_values, dtype=float) ** 2
    return np.sqrt(np.cumsum(s2) / np.sum(s2))


def select_by_energy(singular_values: np.ndarray, tau: float) -> int:
    """Smallest N whose leading modes retain the fraction tau of the energy."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"Energy fraction tau must lie in (0, 1], got {tau}")
    retained = cumulative_energy(singular_values)
    hits = np.flatnonzero(retained >= tau - 1e-15)
    return int(hits[0]) + 1 if hits.size else len(retained)


def _numerical_rank(values: np.ndarray, shape: Tuple[int, int]) -> int:
    if values.size == 0 or values[0] <= 0:
        return 0
    tol = values[0] * max(shape) * np.finfo(float).eps
    return int(np.count_nonzero(values > tol))


def _resolve_count(
    singular_values: np.ndarray, rank: int, N: Optional[int], tau: Optional[float]
) -> int:
    if (N is None) == (tau is None):
        raise ValueError("Select modes either by count N or by energy fraction tau")
    if tau is not None:
        N = select_by_energy(singular_values[:rank], tau)
    if N < 1:
        raise ValueError(f"Mode count must be positive, got {N}")
    if N > rank:
        raise RankError(requested=N, rank=rank)
    return N


def _check_snapshots(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[1] == 0:
        raise ValueError(f"Snapshot matrix must be 2D with at least one column, got {P.shape}")
    if not np.any(P):
        raise ValueError("Snapshot matrix is zero")
    return P


def pod_qr_svd(
    P: np.ndarray, N: Optional[int] = None, tau: Optional[float] = None
) -> PodBasis:
    """
    Euclidean POD through a thin QR of the snapshots followed by an SVD of R.

    Z = Q U_R[:, :N] has orthonormal columns; the spectrum keeps every
    singular value above the numerical-rank tolerance.
    """
    P = _check_snapshots(P)
    Q, R = scipy.linalg.qr(P, mode="economic")
    U_R, s, _ = scipy.linalg.svd(R, full_matrices=False)
    rank = _numerical_rank(s, P.shape)
    N = _resolve_count(s, rank, N, tau)
    Z = fix_signs(Q @ U_R[:, :N])
    return PodBasis(Z=Z, singular_values=s[:rank], mode="euclidean", tau=tau)


def pod_correlation(
    P: np.ndarray,
    M_block: sparse.spmatrix,
    N: Optional[int] = None,
    tau: Optional[float] = None,
) -> PodBasis:
    """
    Mass-weighted POD from the correlation matrix P^T M P.

    Modes are phi_i = P u_i / sqrt(lambda_i); only the requested ones are
    formed, then a Cholesky pass restores M-orthonormality lost to rounding.
    Eigenvalues below the rank tolerance count as zero.
    """
    P = _check_snapshots(P)
    C = P.T @ (M_block @ P)
    C = 0.5 * (C + C.T)
    lam, U = scipy.linalg.eigh(C)
    order = np.argsort(lam)[::-1]
    lam, U = lam[order], U[:, order]
    rank = _numerical_rank(lam, P.shape)
    s = np.sqrt(lam[:rank])
    N = _resolve_count(s, rank, N, tau)
    Z = _orthonormalize((P @ U[:, :N]) / s[:N], M_block)
    return PodBasis(Z=fix_signs(Z), singular_values=s, mode="mass_weighted", tau=tau)


def _orthonormalize(Z: np.ndarray, W: sparse.spmatrix) -> np.ndarray:
    """Cholesky correction Z L^-T so that Z^T W Z = I; column j only mixes columns 0..j."""
    G = Z.T @ (W @ Z)
    L = scipy.linalg.cholesky(0.5 * (G + G.T), lower=True)
    return scipy.linalg.solve_triangular(L, Z.T, lower=True).T


def build_basis(
    P: np.ndarray,
    mode: str,
    fom: Optional[FomOperators] = None,
    N: Optional[int] = None,
    tau: Optional[float] = None,
) -> PodBasis:
    if mode == "euclidean":
        return pod_qr_svd(P, N=N, tau=tau)
    if fom is None:
        raise ValueError("Mass-weighted POD needs the full-order mass matrix")
    return pod_correlation(P, block_diag2(fom.M0), N=N, tau=tau)


def h1_gram(fom: FomOperators) -> sparse.csr_matrix:
    return block_diag2(fom.S0 + fom.M0)


def projection_errors(
    P: np.ndarray, Z: np.ndarray, W: Optional[sparse.spmatrix] = None
) -> np.ndarray:
    """
    Squared W-norm error of projecting each snapshot onto span(Z).

    Z must be W-orthonormal (plain orthonormal when W is None).
    """
    P = np.asarray(P, dtype=float)
    WP = P if W is None else W @ P
    residual = P - Z @ (Z.T @ WP)
    W_residual = residual if W is None else W @ residual
    return np.einsum("ij,ij->j", residual, W_residual)


def truncate_basis(basis: PodBasis, N: int) -> PodBasis:
    """Leading N modes; POD bases are nested, so this is the rank-N POD basis."""
    if not 1 <= N <= basis.N:
        raise RankError(requested=N, rank=basis.N)
    return PodBasis(
        Z=basis.Z[:, :N], singular_values=basis.singular_values, mode=basis.mode
    )


def tail_energy(basis: PodBasis, N: Optional[int] = None) -> float:
    """Sum of the eigenvalues beyond the first N modes."""
    N = basis.N if N is None else N
    return float(np.sum(basis.eigenvalues[N:]))
