from typing import Literal, Tuple

# Boundary segments of the duct: source, liner, near field, far field, symmetry
BoundaryTag = Literal[1, 2, 3, 4, 5]

PodMode = Literal["euclidean", "mass_weighted"]
SelectionRule = Literal["rank", "energy"]
SolverMethod = Literal["direct", "gmres"]
GammaPolicy = Literal["hard_wall", "fixed"]

OptStatus = Literal[
    "RUNNING",
    "CONVERGED_GRADIENT",
    "CONVERGED_OBJECTIVE",
    "CONVERGED_STEP",
    "MAX_ITERATIONS",
    "LINE_SEARCH_FAILED",
]

Range = Tuple[float, float]
