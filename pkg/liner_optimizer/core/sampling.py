from typing import List, Tuple

import numpy as np

from liner_optimizer.constants import (
    K_RANGE,
    MU_RANGE,
    VALIDATION_XII_RANGE,
    VALIDATION_XIR_RANGE,
)
from liner_optimizer.models import CvarConfig, Impedance, RandomParams
from liner_optimizer.types import Range
from liner_optimizer.utils import derive_rng


def _uniform(rng: np.random.Generator, bounds: Range, size: int, name: str) -> np.ndarray:
    low, high = bounds
    if low > high:
        raise ValueError(f"Empty sampling range for {name}: [{low}, {high}]")
    return rng.uniform(low, high, size)


def sample_params(cfg: CvarConfig, label: str = "monte_carlo") -> List[RandomParams]:
    """Q i.i.d. uniform draws of (k, mu_r, mu_i); fixed for a fixed seed."""
    rng = derive_rng(cfg.seed, label)
    k = _uniform(rng, cfg.k_range, cfg.Q, "k")
    mu_r = _uniform(rng, cfg.mu_r_range, cfg.Q, "mu_r")
    mu_i = _uniform(rng, cfg.mu_i_range, cfg.Q, "mu_i")
    return [
        RandomParams(k=float(a), mu_r=float(b), mu_i=float(c))
        for a, b, c in zip(k, mu_r, mu_i)
    ]


def nominal_params(cfg: CvarConfig) -> RandomParams:
    """Upper corner of the sampling box, (k_max, mu_r_max, mu_i_max)."""
    return RandomParams(k=cfg.k_range[1], mu_r=cfg.mu_r_range[1], mu_i=cfg.mu_i_range[1])


def validation_draws(
    seed: int,
    count: int,
    k_range: Range = K_RANGE,
    mu_r_range: Range = MU_RANGE,
    mu_i_range: Range = MU_RANGE,
    xir_range: Range = VALIDATION_XIR_RANGE,
    xii_range: Range = VALIDATION_XII_RANGE,
) -> List[Tuple[RandomParams, Impedance]]:
    """Uniform draws of (k, mu_r, mu_i, xi_r, xi_i) for the ROM accuracy study."""
    rng = derive_rng(seed, "validation")
    k = _uniform(rng, k_range, count, "k")
    mu_r = _uniform(rng, mu_r_range, count, "mu_r")
    mu_i = _uniform(rng, mu_i_range, count, "mu_i")
    xi_r = _uniform(rng, xir_range, count, "xi_r")
    xi_i = _uniform(rng, xii_range, count, "xi_i")
    # resistance must stay positive; a draw of exactly zero is nudged up
    xi_r = np.maximum(xi_r, np.finfo(float).tiny)
    return [
        (
            RandomParams(k=float(k[j]), mu_r=float(mu_r[j]), mu_i=float(mu_i[j])),
            Impedance(xi_r=float(xi_r[j]), xi_i=float(xi_i[j])),
        )
        for j in range(count)
    ]
