import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple, TypeVar

import numpy as np
from scipy import sparse

from liner_optimizer.errors import SampleSolveError
from liner_optimizer.models import Impedance

T = TypeVar("T")


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """
    Labeled split of the run seed. The label is hashed with crc32 so the
    stream is stable across processes and platforms.
    """
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def fix_signs(Z: np.ndarray) -> np.ndarray:
    """Flip each column so that its entry of largest magnitude is positive."""
    if Z.size == 0:
        return Z
    pivots = np.argmax(np.abs(Z), axis=0)
    signs = np.sign(Z[pivots, np.arange(Z.shape[1])])
    signs[signs == 0] = 1.0
    return Z * signs


def block_diag2(W0: sparse.spmatrix) -> sparse.csr_matrix:
    return sparse.block_diag((W0, W0), format="csr")


def skew_block(W0: sparse.spmatrix) -> sparse.csr_matrix:
    """[[0, -W0], [W0, 0]]"""
    return sparse.bmat([[None, -W0], [W0, None]], format="csr")


def impedance_coefficients(k: float, xi: Impedance) -> Tuple[float, float]:
    """
    Coefficients of K2 and of its skew expansion in the liner term:
    (k xi_i / |xi|^2, k xi_r / |xi|^2). A hard wall removes the liner term.
    """
    if xi.hard_wall:
        return 0.0, 0.0
    modulus = xi.modulus_squared
    if modulus == 0.0:
        raise ValueError("Impedance with |xi| = 0 is only allowed as a hard wall")
    return k * xi.xi_i / modulus, k * xi.xi_r / modulus


def impedance_derivatives(xi: Impedance) -> np.ndarray:
    """
    Per unit wavenumber, d/dxi_c of the two liner coefficients.
    Row c in (xi_r, xi_i), columns (K2 coefficient, skew coefficient).
    """
    xr, xi_ = xi.xi_r, xi.xi_i
    modulus2 = xi.modulus_squared**2
    if modulus2 == 0.0:
        raise ValueError("Impedance derivatives are undefined at |xi| = 0")
    return np.array(
        [
            [-2.0 * xr * xi_ / modulus2, (xi_**2 - xr**2) / modulus2],
            [(xr**2 - xi_**2) / modulus2, -2.0 * xr * xi_ / modulus2],
        ]
    )


def contiguous_blocks(count: int, workers: int) -> List[slice]:
    """Split range(count) into at most `workers` contiguous, index-ordered slices."""
    workers = max(1, min(int(workers), max(count, 1)))
    bounds = np.linspace(0, count, workers + 1).round().astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def map_samples(fn: Callable[[int], T], count: int, workers: int = 1) -> List[T]:
    """
    Evaluate fn(0..count-1) over contiguous blocks, one block per worker.

    Results come back in index order whatever the worker count. Every failing
    index is collected; the lowest one is raised as SampleSolveError.
    """
    results: List[Optional[T]] = [None] * count
    failures: Dict[int, Exception] = {}

    def run_block(block: slice) -> None:
        for index in range(block.start, block.stop):
            try:
                results[index] = fn(index)
            except Exception as exc:
                failures[index] = exc

    blocks = contiguous_blocks(count, workers)
    if len(blocks) <= 1:
        for block in blocks:
            run_block(block)
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            list(pool.map(run_block, blocks))

    if failures:
        first = min(failures)
        raise SampleSolveError(first, failures[first], failed=sorted(failures)) from failures[first]
    return results
