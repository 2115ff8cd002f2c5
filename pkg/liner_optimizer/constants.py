import math

SOURCE_TAG = 1
LINER_TAG = 2
NEAR_FIELD_TAG = 3
FAR_FIELD_TAG = 4
SYMMETRY_TAG = 5
BOUNDARY_TAGS = (SOURCE_TAG, LINER_TAG, NEAR_FIELD_TAG, FAR_FIELD_TAG, SYMMETRY_TAG)

# Desk analog of the intake: fan radius 1.2m, liner 1.08m long starting 0.21m
# from the fan plane, far field 5m away
DUCT_LENGTH = 5.0
DUCT_HEIGHT = 1.2
LINER_START = 0.21
LINER_LENGTH = 1.08
MESH_SIZE = 0.05
POINTS_PER_WAVELENGTH = 10

MESH_HEADER = "ducfem 1"

# Shifted Laplacian (beta1, beta2) and GMRES settings
SHIFT_BETA1 = 1.0
SHIFT_BETA2 = 0.5
GMRES_TOL = 1e-6
GMRES_MAX_ITER = 2000
# one Krylov cycle spans the whole budget unless configured shorter
GMRES_RESTART = GMRES_MAX_ITER
# tol = 0 stops at this many machine epsilons of relative residual
GMRES_EPS_FACTOR = 1e3
# Factorizations (or preconditioners) kept by a full-order solver
FOM_CACHE_SIZE = 64

# Sampling ranges of the random vector (k, mu_r, mu_i)
K_RANGE = (5.0, 10.0)
MU_RANGE = (10.0, 30.0)

# Snapshot grid: 40 wavenumbers x {1, i} x 3 resistances x 3 reactances = 720
GRID_K_COUNT = 40
GRID_MU_SET = ((1.0, 0.0), (0.0, 1.0))
GRID_XIR_SET = (0.05, 0.5, 2.0)
GRID_XII_SET = (-0.05, -0.5, -2.0)

DEFAULT_TAU = 0.995
# max-norm distance of a mass-weighted basis Gram matrix from the identity
ORTHONORMALITY_TOL = 1e-10
PRESET_MODE_COUNT = 90
MAX_ROM_MODES = 512

# ROM accuracy protocol: 50 draws from k x mu_r x mu_i x xi_r x xi_i
VALIDATION_DRAWS = 50
VALIDATION_XIR_RANGE = (0.0, 100.0)
VALIDATION_XII_RANGE = (-100.0, 100.0)
OUTLIER_IQR_FACTOR = 1.5

# Risk measure
SMOOTHING_EPS = 1e-4
REGULARIZATION_GAMMA = 1e-7
CVAR_BETAS = (0.5, 0.75, 0.95)
MONTE_CARLO_Q = 16000
INITIAL_XI = (10.0, 10.0)
INITIAL_ALPHA = 0.0
# (k, mu_r, mu_i) of the Re(p) field dumps
PRESSURE_SLICE_PARAMS = (10.0, 10.0, 10.0)

# BFGS / line search
BFGS_MAX_ITER = 100
BFGS_REL_TOL = 1e-6
CURVATURE_EPS = 1e-12
ARMIJO_C1 = 1e-4
MAX_LINE_SEARCH_TRIALS = 10

# Binary containers
PMAT_MAGIC = b"PMAT"
PVEC_MAGIC = b"PVEC"
SCHEMA_VERSION = 1

TWO_PI = 2.0 * math.pi
