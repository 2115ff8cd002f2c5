import numpy as np
import pytest

from liner_optimizer.constants import GRID_K_COUNT, GRID_MU_SET, GRID_XII_SET, GRID_XIR_SET, K_RANGE
from liner_optimizer.core.assembly import assemble_operators
from liner_optimizer.core.mesh import generate_duct_mesh
from liner_optimizer.core.pod import build_basis, build_snapshots, default_sample_grid
from liner_optimizer.core.rom import project_operators
from liner_optimizer.models import PodBasis


def pytest_addoption(parser):
    parser.addoption(
        "--verbose-output",
        action="store_true",
        default=False,
        help="Enable verbose output for tests (e.g., print spectra and iteration tables)",
    )


@pytest.fixture
def verbose(request):
    """Fixture to determine if verbose output is enabled."""
    return request.config.getoption("--verbose-output")


# Small duct shared by the numerical tests: 1.0 x 0.5 with a 0.4 liner
# starting at 0.2, h=0.05 -> 21 x 11 = 231 nodes, 462 block unknowns.
SMALL_DUCT = (1.0, 0.5, 0.2, 0.4, 0.05)

# Same duct at h=1/30 -> 31 x 16 = 496 nodes, 992 block unknowns
DESK_DUCT = (1.0, 0.5, 0.2, 0.4, 1.0 / 30.0)
DESK_MODES = 40


@pytest.fixture(scope="session")
def small_mesh():
    return generate_duct_mesh(*SMALL_DUCT)


@pytest.fixture(scope="session")
def small_fom(small_mesh):
    return assemble_operators(small_mesh)


@pytest.fixture(scope="session")
def small_samples():
    # 3 wavenumbers x {1, i} x 2 resistances x 2 reactances = 24 snapshots
    return default_sample_grid(
        3, (5.0, 10.0), ((1.0, 0.0), (0.0, 1.0)), (0.5, 2.0), (-0.5, -2.0)
    )


@pytest.fixture(scope="session")
def small_snapshots(small_fom, small_samples):
    return build_snapshots(small_fom, small_samples)


@pytest.fixture(scope="session")
def small_basis(small_snapshots, small_fom):
    return build_basis(small_snapshots.P, "mass_weighted", small_fom, N=8)


@pytest.fixture(scope="session")
def small_rom(small_basis, small_fom):
    return project_operators(small_basis, small_fom)


@pytest.fixture(scope="session")
def identity_basis(small_fom):
    size = 2 * small_fom.n
    return PodBasis(Z=np.eye(size), singular_values=np.ones(size), mode="euclidean")


@pytest.fixture(scope="session")
def identity_rom(identity_basis, small_fom):
    return project_operators(identity_basis, small_fom)


@pytest.fixture(scope="session")
def desk_fom():
    return assemble_operators(generate_duct_mesh(*DESK_DUCT))


@pytest.fixture(scope="session")
def desk_snapshots(desk_fom):
    # the full 720-sample grid: 40 wavenumbers x {1, i} x 3 resistances x 3 reactances
    samples = default_sample_grid(GRID_K_COUNT, K_RANGE, GRID_MU_SET, GRID_XIR_SET, GRID_XII_SET)
    return build_snapshots(desk_fom, samples, workers=2)


@pytest.fixture(scope="session")
def desk_basis(desk_snapshots, desk_fom):
    return build_basis(desk_snapshots.P, "mass_weighted", desk_fom, N=DESK_MODES)


@pytest.fixture(scope="session")
def desk_rom(desk_basis, desk_fom):
    return project_operators(desk_basis, desk_fom)
