from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from liner_optimizer.constants import OUTLIER_IQR_FACTOR

ArrayLike = Union[float, np.ndarray]


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise ValueError(f"Smoothing parameter must be positive, got eps={eps}")


def _as_output(values: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(values) if np.ndim(like) == 0 else values


def smoothed_plus(x: ArrayLike, eps: float) -> ArrayLike:
    """
    C2 smoothing of max(x, 0): zero below -eps/2, identity above eps/2 and
    (x + eps/2)^3 / eps^2 - (x + eps/2)^4 / (2 eps^3) in between.
    """
    _check_eps(eps)
    x_arr = np.asarray(x, dtype=float)
    shifted = x_arr + 0.5 * eps
    middle = shifted**3 / eps**2 - shifted**4 / (2.0 * eps**3)
    values = np.where(x_arr <= -0.5 * eps, 0.0, np.where(x_arr >= 0.5 * eps, x_arr, middle))
    return _as_output(values, x)


def smoothed_plus_d(x: ArrayLike, eps: float) -> ArrayLike:
    _check_eps(eps)
    x_arr = np.asarray(x, dtype=float)
    shifted = x_arr + 0.5 * eps
    middle = 3.0 * shifted**2 / eps**2 - 2.0 * shifted**3 / eps**3
    values = np.where(x_arr <= -0.5 * eps, 0.0, np.where(x_arr >= 0.5 * eps, 1.0, middle))
    return _as_output(values, x)


def plus(x: ArrayLike) -> ArrayLike:
    return _as_output(np.maximum(np.asarray(x, dtype=float), 0.0), x)


def _normalized_weights(count: int, weights: Optional[np.ndarray]) -> np.ndarray:
    if weights is None:
        return np.full(count, 1.0 / count)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (count,):
        raise ValueError(f"Expected {count} weights, got shape {weights.shape}")
    if np.any(weights < 0):
        raise ValueError("Weights must be non-negative")
    return weights / np.sum(weights)


def empirical_var_cvar(
    energies: np.ndarray, beta: float, weights: Optional[np.ndarray] = None
) -> Tuple[float, float]:
    """
    VaR is min{a : P(E <= a) >= beta} on the weighted empirical distribution;
    CVaR is the weighted mean of the values at or above VaR.
    """
    values = np.asarray(energies, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("Cannot compute VaR/CVaR of an empty sample")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"Probability level must lie in (0, 1), got beta={beta}")
    w = _normalized_weights(values.size, weights)

    order = np.argsort(values, kind="stable")
    sorted_values, sorted_weights = values[order], w[order]
    cumulative = np.cumsum(sorted_weights)
    position = int(np.searchsorted(cumulative, beta - 1e-12, side="left"))
    var = float(sorted_values[min(position, values.size - 1)])

    tail = values >= var
    cvar = float(np.sum(w[tail] * values[tail]) / np.sum(w[tail]))
    return var, cvar


class BoxplotSummary(BaseModel):
    model_config = ConfigDict(frozen=True)
    median: float
    q1: float
    q3: float
    iqr: float
    outliers: int
    count: int


def boxplot_summary(values: np.ndarray, factor: float = OUTLIER_IQR_FACTOR) -> BoxplotSummary:
    """Quartiles with outliers counted beyond factor * IQR on either side."""
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("Cannot summarize an empty sample")
    q1, median, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    outliers = np.count_nonzero((values > q3 + factor * iqr) | (values < q1 - factor * iqr))
    return BoxplotSummary(
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        iqr=float(iqr),
        outliers=int(outliers),
        count=int(values.size),
    )
