import numpy as np
import pytest

from liner_optimizer.artifacts import (
    load_basis,
    load_rom_operators,
    save_basis,
    save_rom_operators,
)
from liner_optimizer.core.helmholtz import FomSolver, assemble_system, noise_energy
from liner_optimizer.constants import DEFAULT_TAU, VALIDATION_DRAWS
from liner_optimizer.core.pod import build_basis, pod_qr_svd, truncate_basis
from liner_optimizer.core.rom import (
    assemble_rom,
    assemble_rom_matrix,
    batch_energies,
    factor_rom,
    project_operators,
    reconstruct,
    relative_error,
    rom_energy,
    solve_rom,
    solve_rom_batch,
    validate_rom,
)
from liner_optimizer.core.sampling import sample_params, validation_draws
from liner_optimizer.errors import SingularSystemError
from liner_optimizer.models import CvarConfig, Impedance, PodBasis, RandomParams, RomOperators

THETA = RandomParams(k=8.0, mu_r=12.0, mu_i=25.0)
XI = Impedance(xi_r=1.5, xi_i=-0.8)


def test_identity_basis_reproduces_full_order(identity_basis, identity_rom, small_fom):
    error = relative_error(XI, THETA, identity_basis, small_fom, rom_ops=identity_rom)
    assert error < 1e-9


def test_reduced_matrix_is_galerkin_projection(small_basis, small_rom, small_fom):
    system = assemble_system(small_fom, THETA, XI)
    Z = small_basis.Z
    projected = Z.T @ (system.A @ Z)
    A_r, b_r = assemble_rom(small_rom, THETA, XI)
    scale = np.abs(projected).max()
    assert np.allclose(A_r, projected, rtol=1e-10, atol=1e-12 * scale)
    assert np.allclose(b_r, Z.T @ system.b, rtol=1e-10, atol=1e-12 * np.abs(b_r).max())


def test_zero_wavenumber_leaves_stiffness_and_dirichlet(small_rom):
    A_r = assemble_rom_matrix(small_rom, 0.0, XI)
    assert np.array_equal(A_r, small_rom.Sr + small_rom.Ir)


def test_hard_wall_drops_liner_term(small_rom):
    A_r = assemble_rom_matrix(small_rom, THETA.k, Impedance.hard())
    expected = (
        small_rom.Sr - THETA.k**2 * small_rom.Mr + THETA.k * small_rom.K4r_skew + small_rom.Ir
    )
    assert np.allclose(A_r, expected, rtol=0, atol=0)


def test_single_mode_rom(small_basis, small_fom):
    rom_ops = project_operators(truncate_basis(small_basis, 1), small_fom)
    sol = solve_rom(*assemble_rom(rom_ops, THETA, XI))
    assert sol.p_rb.shape == (1,)
    assert np.isfinite(sol.p_rb).all()


def test_reduced_energy_matches_reconstruction(small_basis, small_rom, small_fom):
    sol = solve_rom(*assemble_rom(small_rom, THETA, XI), theta=THETA, xi=XI)
    assert rom_energy(sol, small_rom) == pytest.approx(
        noise_energy(reconstruct(small_basis, sol), small_fom), rel=1e-10
    )


def test_snapshot_in_span_is_recovered(small_snapshots, small_fom):
    P = small_snapshots.P
    rank = pod_qr_svd(P, N=1).singular_values.size
    basis = pod_qr_svd(P, N=rank)
    sample = small_snapshots.samples[5]
    error = relative_error(
        sample.impedance, sample.theta, basis, small_fom, p_fom=P[:, 5]
    )
    assert error < 1e-6


def test_batch_matches_single_solves(small_rom):
    cfg = CvarConfig(beta=0.5, Q=300, seed=4)
    samples = sample_params(cfg)
    coordinates = solve_rom_batch(small_rom, samples, XI)
    assert coordinates.shape == (300, small_rom.N)
    for j in (0, 137, 299):
        single = solve_rom(*assemble_rom(small_rom, samples[j], XI)).p_rb
        assert np.allclose(coordinates[j], single, rtol=1e-10, atol=1e-12)

    energies = batch_energies(small_rom, coordinates)
    assert np.all(energies > 0)


def test_batch_is_independent_of_workers(small_rom):
    samples = sample_params(CvarConfig(beta=0.5, Q=600, seed=9))
    serial = solve_rom_batch(small_rom, samples, XI, workers=1)
    threaded = solve_rom_batch(small_rom, samples, XI, workers=3)
    assert np.array_equal(serial, threaded)


def test_empty_batch(small_rom):
    assert solve_rom_batch(small_rom, [], XI).shape == (0, small_rom.N)


def test_singular_system_raises_with_condition():
    with pytest.raises(SingularSystemError) as exc_info:
        factor_rom(np.zeros((3, 3)), sample_index=7)
    assert exc_info.value.sample_index == 7
    assert exc_info.value.condition == np.inf


def diagonal_rom(stiffness):
    N = len(stiffness)
    zeros = np.zeros((N, N))
    return RomOperators(
        Mr=np.eye(N),
        Sr=np.diag(stiffness),
        K2r=zeros,
        K2r_skew=zeros,
        K4r_skew=zeros,
        Ir=zeros,
        Mr_energy=np.eye(N),
        gr_red=np.ones(N),
        gi_red=np.zeros(N),
        mode="euclidean",
        basis_ref="diagonal",
    )


def test_batch_rejects_ill_conditioned_sample():
    # at k=5 the first pivot cancels to one ulp of 25: nonzero, but past 1/eps
    rom_ops = diagonal_rom([np.nextafter(25.0, 26.0), -1000.0])
    thetas = [RandomParams(k=k, mu_r=1.0, mu_i=0.0) for k in (6.0, 7.0, 5.0, 8.0)]
    with pytest.raises(SingularSystemError) as exc_info:
        solve_rom_batch(rom_ops, thetas, XI)
    assert exc_info.value.sample_index == 2
    assert exc_info.value.condition > 1.0 / np.finfo(float).eps

    coordinates = solve_rom_batch(rom_ops, [thetas[0], thetas[1], thetas[3]], XI)
    assert np.allclose(coordinates[:, 0], [1.0 / (25.0 - k**2) for k in (6.0, 7.0, 8.0)])


def test_mass_weighted_operators_need_m_orthonormal_basis(small_basis, small_fom, small_rom):
    assert small_rom.mode == "mass_weighted"
    assert np.abs(small_rom.Mr_energy - np.eye(small_rom.N)).max() <= 1e-10

    Z = np.array(small_basis.Z)
    Z[:, 0] *= 1.0 + 1e-6
    perturbed = PodBasis(Z=Z, singular_values=small_basis.singular_values, mode="mass_weighted")
    with pytest.raises(ValueError, match="M-orthonormal"):
        project_operators(perturbed, small_fom)


def test_zero_full_order_solution_rejected(small_basis, small_fom, small_rom):
    with pytest.raises(ValueError, match="zero"):
        relative_error(
            XI, RandomParams(k=6.0, mu_r=0.0, mu_i=0.0), small_basis, small_fom, rom_ops=small_rom
        )


def test_basis_row_mismatch_rejected(small_fom):
    basis = PodBasis(Z=np.eye(10)[:, :2], singular_values=np.ones(2), mode="euclidean")
    with pytest.raises(ValueError, match="rows"):
        project_operators(basis, small_fom)


def test_validation_errors_shape_and_determinism(small_snapshots, small_fom):
    basis = pod_qr_svd(small_snapshots.P, N=8)
    draws = validation_draws(2, 4, xir_range=(0.1, 5.0), xii_range=(-5.0, 5.0))
    solver = FomSolver(small_fom)
    errors = validate_rom(basis, small_fom, [2, 4, 8], draws, solver, workers=1)
    assert errors.shape == (3, 4)
    assert np.all(np.isfinite(errors)) and np.all(errors >= 0)

    threaded = validate_rom(basis, small_fom, [2, 4, 8], draws, FomSolver(small_fom), workers=2)
    assert np.array_equal(errors, threaded)


@pytest.mark.slow
def test_accuracy_protocol_on_desk_duct(desk_snapshots, desk_fom):
    """50 draws over the full parameter box: medians fall with N and end below 5%."""
    basis = build_basis(desk_snapshots.P, "mass_weighted", desk_fom, tau=DEFAULT_TAU)
    ladder = sorted({max(1, basis.N // 4), max(1, basis.N // 2), basis.N})
    draws = validation_draws(0, VALIDATION_DRAWS)
    errors = validate_rom(basis, desk_fom, ladder, draws, FomSolver(desk_fom), workers=2)
    medians = np.median(errors, axis=1)
    assert all(b <= a for a, b in zip(medians, medians[1:])), medians
    assert medians[-1] < 0.05


def test_rom_operators_roundtrip(small_rom, tmp_path):
    path = tmp_path / "rom_operators.pmat"
    manifest = save_rom_operators(small_rom, path)
    assert manifest.name == "rom_operators.json"
    loaded = load_rom_operators(path)
    for name in ("Mr", "Sr", "K2r", "K2r_skew", "K4r_skew", "Ir", "Mr_energy", "gr_red", "gi_red"):
        assert np.array_equal(getattr(loaded, name), getattr(small_rom, name)), name
    assert loaded.basis_ref == small_rom.basis_ref
    assert loaded.mode == small_rom.mode


def test_basis_roundtrip(small_basis, tmp_path):
    save_basis(small_basis, tmp_path)
    loaded = load_basis(tmp_path)
    assert np.array_equal(loaded.Z, small_basis.Z)
    assert np.array_equal(loaded.singular_values, small_basis.singular_values)
    assert loaded.basis_ref == small_basis.basis_ref
