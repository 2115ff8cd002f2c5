import hashlib
import threading
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import sparse

from liner_optimizer.constants import (
    ARMIJO_C1,
    BFGS_MAX_ITER,
    BFGS_REL_TOL,
    CURVATURE_EPS,
    FOM_CACHE_SIZE,
    GMRES_MAX_ITER,
    GMRES_RESTART,
    GMRES_TOL,
    K_RANGE,
    MAX_LINE_SEARCH_TRIALS,
    MU_RANGE,
    ORTHONORMALITY_TOL,
    REGULARIZATION_GAMMA,
    SHIFT_BETA1,
    SHIFT_BETA2,
    SMOOTHING_EPS,
)
from liner_optimizer.types import OptStatus, PodMode, Range, SolverMethod


def _frozen_array(value: np.ndarray, dtype=float) -> np.ndarray:
    array = np.array(value, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def _check_range(name: str, value: Range) -> Range:
    low, high = float(value[0]), float(value[1])
    if not (np.isfinite(low) and np.isfinite(high)):
        raise ValueError(f"{name} must be finite, got {value}")
    if low > high:
        raise ValueError(f"{name} is empty: {low} > {high}")
    return (low, high)


class SolverStats:
    """
    Running counts of factorizations, solves and GMRES iterations.
    Shared by worker threads, so increments take a lock.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.factorizations = 0
        self.solves = 0
        self.gmres_iterations = 0

    def record(self, factorizations: int = 0, solves: int = 0, gmres_iterations: int = 0):
        with self._lock:
            self.factorizations += factorizations
            self.solves += solves
            self.gmres_iterations += gmres_iterations

    def as_dict(self) -> dict:
        return {
            "factorizations": self.factorizations,
            "solves": self.solves,
            "gmres_iterations": self.gmres_iterations,
        }


class RandomParams(BaseModel):
    model_config = ConfigDict(frozen=True)
    k: float = Field(gt=0)
    mu_r: float
    mu_i: float


class Impedance(BaseModel):
    model_config = ConfigDict(frozen=True)
    xi_r: float = 0.0
    xi_i: float = 0.0
    hard_wall: bool = False

    @model_validator(mode="after")
    def validate_resistance(self):
        if not self.hard_wall and not self.xi_r > 0:
            raise ValueError(
                f"Liner resistance must be positive, got xi_r={self.xi_r}"
            )
        return self

    @classmethod
    def hard(cls) -> "Impedance":
        return cls(hard_wall=True)

    @property
    def modulus_squared(self) -> float:
        return self.xi_r**2 + self.xi_i**2


class SolverSettings(BaseModel):
    model_config = ConfigDict(frozen=True)
    method: SolverMethod = "direct"
    tol: float = Field(default=GMRES_TOL, ge=0)
    beta1: float = SHIFT_BETA1
    beta2: float = SHIFT_BETA2
    max_iter: int = Field(default=GMRES_MAX_ITER, ge=1)
    restart: int = Field(default=GMRES_RESTART, ge=1)
    cache_size: int = Field(default=FOM_CACHE_SIZE, ge=1)


class Mesh(BaseModel):
    """
    Triangulated 2D duct.

    nodes are (n, 2) coordinates in meters, elements (e, 3) zero-based node
    indices, boundary_edges (b, 2) node pairs with boundary_tags (b,) in 1..5.
    Structural checks live in core.mesh.check_mesh.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    nodes: np.ndarray
    elements: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray

    @field_validator("nodes")
    def validate_nodes(cls, v):
        v = _frozen_array(v, float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError(f"nodes must have shape (n, 2), got {v.shape}")
        return v

    @field_validator("elements")
    def validate_elements(cls, v):
        v = _frozen_array(v, np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"elements must have shape (e, 3), got {v.shape}")
        return v

    @field_validator("boundary_edges")
    def validate_edges(cls, v):
        v = _frozen_array(v, np.int64).reshape(-1, 2)
        return v

    @field_validator("boundary_tags")
    def validate_tags(cls, v):
        return _frozen_array(v, np.int64).reshape(-1)

    @model_validator(mode="after")
    def validate_shapes(self):
        if len(self.boundary_edges) != len(self.boundary_tags):
            raise ValueError("Every boundary edge needs exactly one tag")
        return self

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def edges_with_tag(self, tag: int) -> np.ndarray:
        return self.boundary_edges[self.boundary_tags == tag]

    def nodes_with_tag(self, tag: int) -> np.ndarray:
        return np.unique(self.edges_with_tag(tag))


class FomOperators(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    M0: sparse.csr_matrix
    S0: sparse.csr_matrix
    K2_0: sparse.csr_matrix
    K4_0: sparse.csr_matrix
    dirichlet_idx: np.ndarray
    g_gamma1: np.ndarray

    @field_validator("dirichlet_idx")
    def validate_dirichlet(cls, v):
        v = _frozen_array(np.unique(v), np.int64)
        return v

    @field_validator("g_gamma1")
    def validate_source(cls, v):
        return _frozen_array(v, float)

    @property
    def n(self) -> int:
        return self.M0.shape[0]

    @property
    def block_dirichlet_idx(self) -> np.ndarray:
        return np.concatenate([self.dirichlet_idx, self.dirichlet_idx + self.n])


class BlockSystem(BaseModel):
    """Real 2n x 2n system A p = b after Dirichlet imposition."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    A: sparse.csc_matrix
    b: np.ndarray
    n: int = Field(ge=1)
    theta: RandomParams
    xi: Optional[Impedance] = None
    fom: FomOperators

    @field_validator("b")
    def validate_rhs(cls, v):
        return _frozen_array(v, float)


class SnapshotSample(BaseModel):
    model_config = ConfigDict(frozen=True)
    k: float = Field(gt=0)
    mu_r: float
    mu_i: float
    xi_r: float
    xi_i: float

    @property
    def theta(self) -> RandomParams:
        return RandomParams(k=self.k, mu_r=self.mu_r, mu_i=self.mu_i)

    @property
    def impedance(self) -> Impedance:
        return Impedance(xi_r=self.xi_r, xi_i=self.xi_i)


class SnapshotSet(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    P: np.ndarray
    samples: List[SnapshotSample]

    @field_validator("P")
    def validate_matrix(cls, v):
        v = _frozen_array(v, float)
        if v.ndim != 2:
            raise ValueError(f"Snapshot matrix must be 2D, got shape {v.shape}")
        return v

    @model_validator(mode="after")
    def validate_columns(self):
        if self.P.shape[1] != len(self.samples):
            raise ValueError(
                f"Snapshot matrix has {self.P.shape[1]} columns for {len(self.samples)} samples"
            )
        zero_columns = np.flatnonzero(~np.any(self.P != 0.0, axis=0))
        if zero_columns.size:
            raise ValueError(f"Snapshot columns {zero_columns.tolist()} are all zero")
        return self


class PodBasis(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    Z: np.ndarray
    singular_values: np.ndarray
    mode: PodMode
    tau: Optional[float] = None

    @field_validator("Z")
    def validate_modes(cls, v):
        v = _frozen_array(v, float)
        if v.ndim != 2:
            raise ValueError(f"Basis must be 2D, got shape {v.shape}")
        return v

    @field_validator("singular_values")
    def validate_spectrum(cls, v):
        v = _frozen_array(v, float).reshape(-1)
        if np.any(v <= 0):
            raise ValueError("Singular values must be strictly positive")
        if np.any(np.diff(v) > 0):
            raise ValueError("Singular values must be non-increasing")
        return v

    @model_validator(mode="after")
    def validate_counts(self):
        if self.singular_values.size < self.Z.shape[1]:
            raise ValueError(
                f"Spectrum holds {self.singular_values.size} values for {self.Z.shape[1]} modes"
            )
        return self

    @property
    def N(self) -> int:
        return self.Z.shape[1]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.singular_values**2

    @property
    def basis_ref(self) -> str:
        digest = hashlib.sha256(np.ascontiguousarray(self.Z).tobytes()).hexdigest()
        return f"{self.mode}-{self.N}-{digest[:12]}"


class RomOperators(BaseModel):
    """Dense reduced matrices; holds nothing of full-order size."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    Mr: np.ndarray
    Sr: np.ndarray
    K2r: np.ndarray
    K2r_skew: np.ndarray
    K4r_skew: np.ndarray
    Ir: np.ndarray
    Mr_energy: np.ndarray
    gr_red: np.ndarray
    gi_red: np.ndarray
    mode: PodMode
    basis_ref: str

    @field_validator("Mr", "Sr", "K2r", "K2r_skew", "K4r_skew", "Ir", "Mr_energy")
    def validate_square(cls, v):
        v = _frozen_array(v, float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"Reduced matrices must be square, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("Reduced matrices must be finite")
        return v

    @field_validator("gr_red", "gi_red")
    def validate_loads(cls, v):
        return _frozen_array(v, float).reshape(-1)

    @model_validator(mode="after")
    def validate_sizes(self):
        n_modes = self.Mr.shape[0]
        for name in ("Sr", "K2r", "K2r_skew", "K4r_skew", "Ir", "Mr_energy"):
            if getattr(self, name).shape != (n_modes, n_modes):
                raise ValueError(f"{name} is not {n_modes}x{n_modes}")
        for name in ("gr_red", "gi_red"):
            if getattr(self, name).shape != (n_modes,):
                raise ValueError(f"{name} must have length {n_modes}")
        return self

    @model_validator(mode="after")
    def validate_mass_orthonormal(self):
        if self.mode == "mass_weighted":
            deviation = float(np.abs(self.Mr_energy - np.eye(self.N)).max(initial=0.0))
            if deviation > ORTHONORMALITY_TOL:
                raise ValueError(
                    "Mass-weighted basis is not M-orthonormal: "
                    f"max |Mr_energy - I| = {deviation:.3e}"
                )
        return self

    @property
    def N(self) -> int:
        return self.Mr.shape[0]


class RomSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    p_rb: np.ndarray
    theta: Optional[RandomParams] = None
    xi: Optional[Impedance] = None

    @field_validator("p_rb")
    def validate_coordinates(cls, v):
        v = _frozen_array(v, float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("Reduced solution has non-finite entries")
        return v


class CvarConfig(BaseModel):
    model_config = ConfigDict(frozen=True)
    beta: float = Field(gt=0, lt=1)
    eps: float = Field(default=SMOOTHING_EPS, gt=0)
    gamma: float = Field(default=REGULARIZATION_GAMMA, ge=0)
    gamma_p: float = Field(default=1.0, gt=0)
    Q: int = Field(ge=1)
    seed: int = Field(default=0, ge=0)
    k_range: Range = K_RANGE
    mu_r_range: Range = MU_RANGE
    mu_i_range: Range = MU_RANGE
    weights: Optional[Tuple[float, ...]] = None

    @field_validator("k_range")
    def validate_k_range(cls, v):
        low, high = _check_range("k_range", v)
        if low <= 0:
            raise ValueError(f"Wavenumbers must be positive, got k_range={v}")
        return (low, high)

    @field_validator("mu_r_range", "mu_i_range")
    def validate_mu_ranges(cls, v, info):
        return _check_range(info.field_name, v)

    @model_validator(mode="after")
    def validate_weights(self):
        if self.weights is not None:
            if len(self.weights) != self.Q:
                raise ValueError(f"Expected {self.Q} quadrature weights, got {len(self.weights)}")
            if abs(sum(self.weights) - 1.0) > 1e-12:
                raise ValueError(f"Quadrature weights must sum to 1, got {sum(self.weights)}")
        return self

    def quadrature_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.Q, 1.0 / self.Q)
        return np.asarray(self.weights, dtype=float)


class OptimizerSettings(BaseModel):
    model_config = ConfigDict(frozen=True)
    max_iter: int = Field(default=BFGS_MAX_ITER, ge=1)
    gtol: float = Field(default=BFGS_REL_TOL, ge=0)
    ftol: float = Field(default=BFGS_REL_TOL, ge=0)
    xtol: float = Field(default=BFGS_REL_TOL, ge=0)
    c1: float = Field(default=ARMIJO_C1, gt=0, lt=1)
    max_trials: int = Field(default=MAX_LINE_SEARCH_TRIALS, ge=1)
    curvature_eps: float = Field(default=CURVATURE_EPS, ge=0)


class IterationRecord(BaseModel):
    model_config = ConfigDict(frozen=True)
    iter: int
    J: float
    grad_norm: float
    xi_r: float
    xi_i: float
    alpha: Optional[float] = None
    step_len: float = 0.0


class OptState(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    xi: Impedance
    alpha: Optional[float] = None
    H: np.ndarray
    iter: int = Field(ge=0)
    history: Tuple[IterationRecord, ...] = ()
    status: OptStatus = "RUNNING"
    J: float
    evaluations: int = 0
    pde_solves: int = 0

    @field_validator("H")
    def validate_hessian(cls, v):
        v = _frozen_array(v, float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"Inverse Hessian must be square, got {v.shape}")
        if np.max(np.abs(v - v.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(v))):
            raise ValueError("Inverse Hessian must be symmetric")
        return v
