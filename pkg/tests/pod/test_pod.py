import numpy as np
import pytest
from scipy import sparse

from liner_optimizer.constants import GRID_K_COUNT, GRID_MU_SET, GRID_XII_SET, GRID_XIR_SET
from liner_optimizer.core.helmholtz import block_mass
from liner_optimizer.core.pod import (
    build_basis,
    cumulative_energy,
    default_sample_grid,
    h1_gram,
    pod_correlation,
    pod_qr_svd,
    projection_errors,
    select_by_energy,
    tail_energy,
    truncate_basis,
)
from liner_optimizer.errors import RankError


def total_energy(basis):
    return float(np.sum(basis.eigenvalues))


def test_default_grid_has_720_samples():
    samples = default_sample_grid(GRID_K_COUNT, (5.0, 10.0), GRID_MU_SET, GRID_XIR_SET, GRID_XII_SET)
    assert len(samples) == 720
    ks = sorted({s.k for s in samples})
    assert ks[0] == 5.0 and ks[-1] == 10.0
    assert len(ks) == GRID_K_COUNT


def test_grid_rejects_single_wavenumber():
    with pytest.raises(ValueError, match="k_count"):
        default_sample_grid(1, (5.0, 10.0), GRID_MU_SET, GRID_XIR_SET, GRID_XII_SET)


def test_grid_rejects_empty_sets():
    with pytest.raises(ValueError, match="xii_set"):
        default_sample_grid(2, (5.0, 10.0), GRID_MU_SET, GRID_XIR_SET, ())


def test_snapshot_columns_follow_samples(small_snapshots, small_samples):
    assert small_snapshots.P.shape == (462, len(small_samples))
    assert small_snapshots.samples == small_samples


def test_qr_svd_matches_direct_svd(small_snapshots):
    P = small_snapshots.P
    basis = pod_qr_svd(P, N=10)
    reference = np.linalg.svd(P, compute_uv=False)
    s0 = reference[0]
    assert np.allclose(basis.singular_values[:10], reference[:10], rtol=1e-8, atol=1e-12 * s0)


def test_qr_svd_basis_is_orthonormal(small_snapshots):
    Z = pod_qr_svd(small_snapshots.P, N=10).Z
    assert np.allclose(Z.T @ Z, np.eye(10), atol=1e-10)


def test_qr_svd_tail_identity(small_snapshots):
    """Summed squared projection errors equal the discarded eigenvalues."""
    basis = pod_qr_svd(small_snapshots.P, N=5)
    errors = projection_errors(small_snapshots.P, basis.Z)
    tail = tail_energy(basis)
    assert errors.sum() == pytest.approx(tail, rel=1e-8, abs=1e-12 * total_energy(basis))


def test_mass_weighted_basis_is_m_orthonormal(small_snapshots, small_fom):
    M = block_mass(small_fom)
    rank = build_basis(small_snapshots.P, "mass_weighted", small_fom, N=1).singular_values.size
    for N in sorted({1, 5, min(16, rank), rank}):
        basis = build_basis(small_snapshots.P, "mass_weighted", small_fom, N=N)
        assert np.abs(basis.Z.T @ (M @ basis.Z) - np.eye(N)).max() <= 1e-10, N


def weight_matrix(name, fom):
    if name == "mass":
        return block_mass(fom)
    if name == "h1":
        return h1_gram(fom)
    return None


@pytest.mark.parametrize("weight", ["euclidean", "mass", "h1"])
def test_tail_identity_for_every_mode_count(small_snapshots, small_fom, weight):
    P = small_snapshots.P
    W = weight_matrix(weight, small_fom)

    def basis_of(N):
        return pod_qr_svd(P, N=N) if W is None else pod_correlation(P, W, N=N)

    rank = basis_of(1).singular_values.size
    for N in range(1, rank + 1):
        basis = basis_of(N)
        errors = projection_errors(P, basis.Z, W)
        assert errors.sum() == pytest.approx(
            tail_energy(basis), rel=1e-6, abs=1e-10 * total_energy(basis)
        ), N


def test_correlation_path_with_identity_matches_qr_svd(small_snapshots):
    P = small_snapshots.P
    qr = pod_qr_svd(P, N=3)
    correlation = pod_correlation(P, sparse.identity(P.shape[0], format="csr"), N=3)
    assert np.allclose(correlation.singular_values[:3], qr.singular_values[:3], rtol=1e-6)
    # same subspace: projectors agree
    assert np.allclose(correlation.Z @ correlation.Z.T, qr.Z @ qr.Z.T, atol=1e-6)


def test_pod_beats_random_subspace(small_snapshots):
    P = small_snapshots.P
    N = 6
    pod_error = projection_errors(P, pod_qr_svd(P, N=N).Z).sum()
    rng = np.random.default_rng(11)
    for _ in range(5):
        Q, _ = np.linalg.qr(rng.standard_normal((P.shape[0], N)))
        assert projection_errors(P, Q).sum() >= pod_error * (1 - 1e-10)


def test_bases_are_nested(small_snapshots):
    basis = pod_qr_svd(small_snapshots.P, N=8)
    smaller = pod_qr_svd(small_snapshots.P, N=3)
    assert np.allclose(truncate_basis(basis, 3).Z, smaller.Z, atol=1e-10)


def test_truncate_beyond_basis_size(small_basis):
    with pytest.raises(RankError):
        truncate_basis(small_basis, small_basis.N + 1)


def test_rank_error_beyond_column_count(small_snapshots):
    P = small_snapshots.P
    with pytest.raises(RankError) as exc_info:
        pod_qr_svd(P, N=P.shape[1] + 1)
    assert exc_info.value.requested == P.shape[1] + 1
    assert exc_info.value.rank <= P.shape[1]


def test_rank_deficient_snapshots():
    rng = np.random.default_rng(5)
    column = rng.standard_normal(400)
    P = np.column_stack([column, 2.0 * column, -column])
    basis = pod_qr_svd(P, N=1)
    assert basis.singular_values.size == 1
    with pytest.raises(RankError):
        pod_qr_svd(P, N=2)


def test_count_and_fraction_are_exclusive(small_snapshots):
    with pytest.raises(ValueError):
        pod_qr_svd(small_snapshots.P, N=3, tau=0.9)
    with pytest.raises(ValueError):
        pod_qr_svd(small_snapshots.P)


def test_zero_snapshots_rejected():
    with pytest.raises(ValueError):
        pod_qr_svd(np.zeros((10, 3)), N=1)


def test_select_by_energy():
    s = np.array([4.0, 3.0])
    assert cumulative_energy(s)[0] == pytest.approx(0.8)
    assert select_by_energy(s, 0.8) == 1
    assert select_by_energy(s, 0.81) == 2
    assert select_by_energy(s, 1.0) == 2
    with pytest.raises(ValueError):
        select_by_energy(s, 0.0)


def test_energy_selection_retains_fraction(small_snapshots):
    basis = pod_qr_svd(small_snapshots.P, tau=0.999)
    retained = cumulative_energy(basis.singular_values)
    assert retained[basis.N - 1] >= 0.999 - 1e-15
    if basis.N > 1:
        assert retained[basis.N - 2] < 0.999
    assert basis.tau == 0.999
