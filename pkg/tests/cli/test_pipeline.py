"""
End-to-end runs of the pipeline commands on a coarse duct.
"""

import json

import numpy as np
import pytest

from liner_optimizer.artifacts import HISTORY_HEADERS, load_matrix, load_samples, read_csv
from liner_optimizer.commands import (
    COMPARE_FILE,
    COMPARE_PRESSURE_FILE,
    ROM_FILE,
    SAMPLES_FILE,
    SNAPSHOT_FILE,
    SPECTRUM_FILE,
    VALIDATION_DRAWS_FILE,
    VALIDATION_SUMMARY_FILE,
    _field_statistics,
    build_operators,
    cmd_build_pod,
    cmd_compare_fom_rom,
    cmd_generate_snapshots,
    cmd_optimize,
    cmd_validate,
    slice_params,
)
from liner_optimizer.config import parse_config
from liner_optimizer.core.helmholtz import FomSolver
from liner_optimizer.core.rom import assemble_rom, solve_rom
from liner_optimizer.errors import SampleSolveError
from liner_optimizer.models import Impedance, RandomParams
from scripts.liner import main

# 11 x 6 nodes; 2 wavenumbers x {1, i} x 2 resistances x 1 reactance = 8 snapshots
TINY_CONFIG = """
[mesh]
length = 1.0
height = 0.5
liner_start = 0.2
liner_length = 0.4
h = 0.1

[sampling]
seed = 7
k_count = 2
k_range = 5, 8
xir_set = 0.5, 2.0
xii_set = -0.5
Q = 12
validation_draws = 4
xir_range = 0.1, 5
xii_range = -5, 5

[pod]
mode = mass_weighted
selection = rank
N = 4
validate_modes = 2, 4

[cvar]
betas = 0.5, 0.9
eps = 0.01
gamma = 0.001
max_iter = 3
field_samples = 4
"""


def tiny_config(directory):
    return parse_config(TINY_CONFIG).with_output(directory)


def run_pipeline(directory, workers=1):
    cfg = tiny_config(directory)
    cmd_generate_snapshots(cfg, workers=workers)
    cmd_build_pod(cfg, workers=workers)
    return cfg


@pytest.mark.slow
def test_snapshots_and_basis(tmp_path, verbose):
    cfg = tiny_config(tmp_path)
    manifest = cmd_generate_snapshots(cfg, verbose=verbose)
    assert manifest["rows"] == 2 * 66
    assert manifest["columns"] == 8
    assert manifest["solver_stats"]["factorizations"] == 4
    assert len(manifest["timing"]["per_sample_seconds"]) == 8

    P = load_matrix(tmp_path / SNAPSHOT_FILE)
    assert P.shape == (132, 8)
    samples = load_samples(tmp_path / SAMPLES_FILE)
    assert [s.k for s in samples[:4]] == [5.0] * 4

    pod = cmd_build_pod(cfg, verbose=verbose)
    assert pod["N"] == 4
    assert pod["mode"] == "mass_weighted"
    assert (tmp_path / ROM_FILE).is_file()
    headers, rows = read_csv(tmp_path / SPECTRUM_FILE)
    assert headers == ["index", "singular_value", "scaled", "eigenvalue", "retained_energy"]
    assert float(rows[0][2]) == 1.0
    assert float(rows[-1][4]) == pytest.approx(1.0)


@pytest.mark.slow
def test_validation_report(tmp_path, verbose):
    cfg = run_pipeline(tmp_path)
    report = cmd_validate(cfg, verbose=verbose)
    assert report["draws"] == 4
    assert sorted(report["summary"], key=int) == ["2", "4"]
    assert all(report["summary"][N]["count"] == 4 for N in ("2", "4"))

    headers, rows = read_csv(tmp_path / VALIDATION_DRAWS_FILE)
    assert headers[-2:] == ["e_rel_N2", "e_rel_N4"]
    assert len(rows) == 4
    on_disk = json.loads((tmp_path / VALIDATION_SUMMARY_FILE).read_text())
    assert on_disk["summary"] == report["summary"]


@pytest.mark.slow
def test_optimization_reports(tmp_path, verbose):
    cfg = run_pipeline(tmp_path)
    reports = cmd_optimize(cfg, verbose=verbose)
    assert sorted(reports) == ["0.5", "0.9"]
    for label, report in reports.items():
        assert report["xi_r"] > 0
        assert report["iterations"] <= 3
        assert report["empirical_cvar"] >= report["empirical_var"]
        assert report["Q"] == 12
        on_disk = json.loads((tmp_path / f"report_beta_{label}.json").read_text())
        assert on_disk["J"] == report["J"]

        headers, rows = read_csv(tmp_path / f"history_beta_{label}.csv")
        assert headers == HISTORY_HEADERS
        assert len(rows) == report["iterations"] + 1
        assert b"\r\n" in (tmp_path / f"history_beta_{label}.csv").read_bytes()

        field_headers, field_rows = read_csv(tmp_path / f"field_beta_{label}.csv")
        assert field_headers[:2] == ["x", "y"]
        assert len(field_rows) == 66

        pressure_headers, pressure_rows = read_csv(tmp_path / f"pressure_beta_{label}.csv")
        assert pressure_headers == ["x", "y", "re_initial", "re_optimal"]
        assert len(pressure_rows) == 66
    # both levels are normalized by the same hard-wall energy
    assert reports["0.5"]["gamma_p"] == reports["0.9"]["gamma_p"]


@pytest.mark.slow
def test_fom_rom_comparison(tmp_path, verbose):
    cfg = run_pipeline(tmp_path)
    report = cmd_compare_fom_rom(cfg, verbose=verbose)
    assert set(report["runs"]) == {"fom", "rom"}
    assert report["relative_difference"] >= 0
    assert report["theta"] == {"k": 8.0, "mu_r": 30.0, "mu_i": 30.0}
    assert (tmp_path / COMPARE_FILE).is_file()
    assert (tmp_path / "compare_history_fom.csv").is_file()

    headers, rows = read_csv(tmp_path / COMPARE_PRESSURE_FILE)
    assert headers == ["x", "y", "re_initial", "re_fom", "re_rom"]
    assert len(rows) == 66
    _, fom = build_operators(cfg)
    fom_xi = Impedance(xi_r=report["runs"]["fom"]["xi_r"], xi_i=report["runs"]["fom"]["xi_i"])
    p = FomSolver(fom).solve(slice_params(), fom_xi)
    assert np.allclose([float(row[3]) for row in rows], p[: fom.n], rtol=1e-9, atol=1e-12)


def test_field_statistics_scale_by_node_count(small_basis, small_rom, small_fom):
    samples = [
        RandomParams(k=6.0, mu_r=10.0, mu_i=20.0),
        RandomParams(k=9.0, mu_r=25.0, mu_i=5.0),
    ]
    xi = Impedance(xi_r=1.0, xi_i=-1.0)
    mean, std = _field_statistics(small_basis, small_rom, small_fom, samples, xi, 2.0, 1)

    n = small_fom.n
    intensity = []
    for theta in samples:
        p = small_basis.Z @ solve_rom(*assemble_rom(small_rom, theta, xi)).p_rb
        intensity.append(n * (p[:n] ** 2 + p[n:] ** 2) / 2.0)
    assert np.allclose(mean, np.mean(intensity, axis=0), rtol=1e-10)
    assert np.allclose(std, np.std(intensity, axis=0), rtol=1e-8, atol=1e-12 * mean.max())


@pytest.mark.slow
def test_results_do_not_depend_on_worker_count(tmp_path):
    serial = run_pipeline(tmp_path / "serial", workers=1)
    threaded = run_pipeline(tmp_path / "threaded", workers=3)
    assert (tmp_path / "serial" / SNAPSHOT_FILE).read_bytes() == (
        tmp_path / "threaded" / SNAPSHOT_FILE
    ).read_bytes()
    assert (tmp_path / "serial" / ROM_FILE).read_bytes() == (
        tmp_path / "threaded" / ROM_FILE
    ).read_bytes()

    first = cmd_optimize(serial, workers=1)
    second = cmd_optimize(threaded, workers=3)
    for label in first:
        for key in ("xi_r", "xi_i", "alpha", "J", "iterations", "status", "empirical_cvar"):
            assert first[label][key] == second[label][key], key
        assert (tmp_path / "serial" / f"history_beta_{label}.csv").read_bytes() == (
            tmp_path / "threaded" / f"history_beta_{label}.csv"
        ).read_bytes()


def test_failed_snapshot_run_leaves_no_partial_output(tmp_path, monkeypatch):
    cfg = tiny_config(tmp_path)
    (tmp_path / SNAPSHOT_FILE).write_bytes(b"stale")

    def broken_solve(self, theta, xi):
        if theta.k > 6.0:
            raise np.linalg.LinAlgError("singular")
        return np.ones(2 * self.fom.n)

    monkeypatch.setattr("liner_optimizer.core.helmholtz.FomSolver.solve", broken_solve)
    with pytest.raises(SampleSolveError) as exc_info:
        cmd_generate_snapshots(cfg, workers=2)
    assert exc_info.value.sample_index == 4
    assert exc_info.value.failed == (4, 5, 6, 7)
    assert not (tmp_path / SNAPSHOT_FILE).exists()


def test_main_exit_codes(tmp_path):
    config_path = tmp_path / "run.ini"
    config_path.write_text(TINY_CONFIG)
    out = tmp_path / "out"

    assert main(["--config", str(tmp_path / "missing.ini"), "validate"]) == 2
    assert main(["--workers", "0", "--config", str(config_path), "validate"]) == 2
    # nothing to build a basis from yet
    assert main(["--config", str(config_path), "--out", str(out), "build-pod"]) == 1
    assert main(["--config", str(config_path), "--out", str(out), "generate-snapshots"]) == 0
    assert main(["--config", str(config_path), "--out", str(out), "build-pod"]) == 0
    assert (out / ROM_FILE).is_file()


def test_unknown_command_is_rejected():
    with pytest.raises(SystemExit):
        main(["plot"])
