"""
Pipeline commands: snapshots -> POD basis -> validation / optimization.

Each command reads what the previous one wrote into the output directory,
so they can be run one by one from the CLI or chained in-process.
"""

import time
from pathlib import Path
from typing import Any, Dict, Sequence

import numpy as np

from liner_optimizer.artifacts import (
    load_basis,
    load_matrix,
    load_rom_operators,
    read_json,
    save_basis,
    save_matrix,
    save_rom_operators,
    save_samples,
    write_csv,
    write_history_csv,
    write_json,
    write_spectrum_csv,
)
from liner_optimizer.config import RunConfig
from liner_optimizer.constants import POINTS_PER_WAVELENGTH, PRESSURE_SLICE_PARAMS
from liner_optimizer.core.assembly import assemble_operators
from liner_optimizer.core.bfgs import optimize, optimize_deterministic
from liner_optimizer.core.helmholtz import FomSolver
from liner_optimizer.core.mesh import generate_duct_mesh, load_mesh, points_per_wavelength
from liner_optimizer.core.objective import (
    FullOrderModel,
    ReducedModel,
    compute_gamma_p,
    hard_wall_energy,
)
from liner_optimizer.core.pod import (
    build_basis,
    cumulative_energy,
    default_sample_grid,
    solve_snapshot_columns,
)
from liner_optimizer.core.risk import boxplot_summary, empirical_var_cvar
from liner_optimizer.core.rom import project_operators, solve_rom_batch, validate_rom
from liner_optimizer.core.sampling import nominal_params, sample_params, validation_draws
from liner_optimizer.display import (
    display_history,
    display_optimization_report,
    display_solver_stats,
    display_spectrum,
    display_validation_summary,
)
from liner_optimizer.display.utils import Colors
from liner_optimizer.errors import SampleSolveError
from liner_optimizer.models import (
    FomOperators,
    Impedance,
    Mesh,
    OptimizerSettings,
    PodBasis,
    RandomParams,
    RomOperators,
    SnapshotSet,
    SolverStats,
)

SNAPSHOT_FILE = "snapshots.pmat"
SAMPLES_FILE = "snapshots_samples.txt"
SNAPSHOT_MANIFEST = "snapshots_manifest.json"
SPECTRUM_FILE = "spectrum.csv"
ROM_FILE = "rom_operators.pmat"
VALIDATION_DRAWS_FILE = "validation_draws.csv"
VALIDATION_SUMMARY_FILE = "validation_summary.json"
COMPARE_FILE = "compare_fom_rom.json"
COMPARE_PRESSURE_FILE = "compare_pressure.csv"


def _output_dir(cfg: RunConfig) -> Path:
    directory = Path(cfg.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def build_mesh(cfg: RunConfig) -> Mesh:
    if cfg.mesh.path is not None:
        return load_mesh(cfg.mesh.path)
    m = cfg.mesh
    return generate_duct_mesh(m.length, m.height, m.liner_start, m.liner_length, m.h)


def build_operators(cfg: RunConfig) -> tuple:
    mesh = build_mesh(cfg)
    return mesh, assemble_operators(mesh)


def beta_label(beta: float) -> str:
    return f"{beta:g}"


def _load_snapshots(directory: Path) -> np.ndarray:
    path = directory / SNAPSHOT_FILE
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found; run generate-snapshots first")
    return load_matrix(path)


def _load_rom(directory: Path):
    path = directory / ROM_FILE
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found; run build-pod first")
    return load_rom_operators(path)


def cmd_generate_snapshots(
    cfg: RunConfig, workers: int = 1, verbose: bool = False
) -> Dict[str, Any]:
    out = _output_dir(cfg)
    mesh, fom = build_operators(cfg)
    s = cfg.sampling
    samples = default_sample_grid(s.k_count, s.k_range, s.mu_set, s.xir_set, s.xii_set)
    resolution = points_per_wavelength(mesh, s.k_range[1])
    print(
        f"Solving {len(samples)} snapshots on {mesh.n_nodes} nodes "
        f"({resolution:.1f} points per wavelength at k={s.k_range[1]:g})"
    )
    if resolution < POINTS_PER_WAVELENGTH:
        print(
            f"{Colors.YELLOW}Mesh is coarser than {POINTS_PER_WAVELENGTH} points per wavelength "
            f"at the largest wavenumber{Colors.ENDC}"
        )

    stats = SolverStats()
    solver = FomSolver(fom, cfg.solver.settings(), stats)
    start = time.perf_counter()
    try:
        P, seconds = solve_snapshot_columns(solver, samples, workers)
        snapshots = SnapshotSet(P=P, samples=samples)
    except SampleSolveError as exc:
        for name in (SNAPSHOT_FILE, SAMPLES_FILE, SNAPSHOT_MANIFEST):
            (out / name).unlink(missing_ok=True)
        print(f"{Colors.RED}Snapshot generation failed for samples {list(exc.failed)}{Colors.ENDC}")
        raise

    save_matrix(snapshots.P, out / SNAPSHOT_FILE)
    save_samples(snapshots.samples, out / SAMPLES_FILE)
    manifest = {
        "rows": int(P.shape[0]),
        "columns": int(P.shape[1]),
        "n_nodes": mesh.n_nodes,
        "solver": cfg.solver.method,
        "workers": workers,
        "solver_stats": stats.as_dict(),
        "timing": {
            "total_seconds": time.perf_counter() - start,
            "per_sample_seconds": seconds.tolist(),
        },
    }
    write_json(manifest, out / SNAPSHOT_MANIFEST)

    if verbose:
        for index, (sample, elapsed) in enumerate(zip(samples, seconds)):
            print(
                f"  sample {index:4d}: k={sample.k:.4f} mu={sample.mu_r:g}{sample.mu_i:+g}i "
                f"xi={sample.xi_r:g}{sample.xi_i:+g}i  {elapsed * 1e3:.1f} ms"
            )
        display_solver_stats(stats)
    print(f"Wrote {P.shape[1]} snapshots to {out / SNAPSHOT_FILE}")
    return manifest


def _select(cfg: RunConfig) -> Dict[str, Any]:
    if cfg.pod.selection == "energy":
        return {"tau": cfg.pod.tau}
    return {"N": cfg.pod.N}


def cmd_build_pod(cfg: RunConfig, workers: int = 1, verbose: bool = False) -> Dict[str, Any]:
    out = _output_dir(cfg)
    _, fom = build_operators(cfg)
    P = _load_snapshots(out)
    basis = build_basis(P, cfg.pod.mode, fom, **_select(cfg))
    retained = float(cumulative_energy(basis.singular_values)[basis.N - 1])

    save_basis(
        basis,
        out,
        extra={
            "selection": cfg.pod.selection,
            "snapshots": int(P.shape[1]),
            "retained_energy": retained,
            "workers": workers,
        },
    )
    write_spectrum_csv(basis.singular_values, out / SPECTRUM_FILE)
    rom_ops = project_operators(basis, fom)
    save_rom_operators(rom_ops, out / ROM_FILE)

    if verbose:
        display_spectrum(basis.singular_values, selected=basis.N)
    print(f"POD basis ({basis.mode}): N={basis.N}, retained energy {retained:.6f}")
    return read_json(out / "pod_manifest.json")


def cmd_validate(cfg: RunConfig, workers: int = 1, verbose: bool = False) -> Dict[str, Any]:
    out = _output_dir(cfg)
    _, fom = build_operators(cfg)
    P = _load_snapshots(out)

    ladder = set(cfg.pod.validate_modes)
    manifest_path = out / "pod_manifest.json"
    if manifest_path.is_file():
        ladder.add(int(read_json(manifest_path)["N"]))
    ladder = sorted(ladder)
    basis = build_basis(P, cfg.pod.mode, fom, N=ladder[-1])

    s = cfg.sampling
    draws = validation_draws(
        s.seed, s.validation_draws, s.k_range, s.mu_r_range, s.mu_i_range, s.xir_range, s.xii_range
    )
    errors = validate_rom(
        basis, fom, ladder, draws, FomSolver(fom, cfg.solver.settings()), workers
    )

    write_csv(
        out / VALIDATION_DRAWS_FILE,
        ["draw", "k", "mu_r", "mu_i", "xi_r", "xi_i"] + [f"e_rel_N{N}" for N in ladder],
        (
            [j, theta.k, theta.mu_r, theta.mu_i, xi.xi_r, xi.xi_i]
            + [float(errors[row, j]) for row in range(len(ladder))]
            for j, (theta, xi) in enumerate(draws)
        ),
    )
    summaries = {N: boxplot_summary(errors[row]) for row, N in enumerate(ladder)}
    medians = [summaries[N].median for N in ladder]
    report = {
        "mode": cfg.pod.mode,
        "draws": len(draws),
        "workers": workers,
        "summary": {str(N): summaries[N].model_dump() for N in ladder},
        "medians_non_increasing": bool(np.all(np.diff(medians) <= 0)),
    }
    write_json(report, out / VALIDATION_SUMMARY_FILE)
    if verbose:
        display_validation_summary(summaries)
    return report


def _gamma_p(cfg: RunConfig, model) -> float:
    if cfg.cvar.gamma_p_policy == "fixed":
        return float(cfg.cvar.gamma_p)
    return compute_gamma_p(model, cfg.cvar_config(cfg.cvar.betas[0], 1.0))


def _field_statistics(
    basis: PodBasis,
    rom_ops: RomOperators,
    fom: FomOperators,
    samples: Sequence[RandomParams],
    xi: Impedance,
    gamma_p: float,
    workers: int,
) -> tuple:
    """Nodal mean and standard deviation of n |p|^2 / gamma_p over samples, n the node count."""
    coordinates = solve_rom_batch(rom_ops, samples, xi, workers)
    fields = coordinates @ basis.Z.T
    n = fom.n
    intensity = n * (fields[:, :n] ** 2 + fields[:, n:] ** 2) / gamma_p
    return intensity.mean(axis=0), intensity.std(axis=0)


def slice_params() -> RandomParams:
    k, mu_r, mu_i = PRESSURE_SLICE_PARAMS
    return RandomParams(k=k, mu_r=mu_r, mu_i=mu_i)


def _write_pressure(path: Path, mesh: Mesh, fields: Dict[str, np.ndarray]) -> None:
    """One Re(p) column per block field [Re p; Im p], nodes in mesh order."""
    write_csv(
        path,
        ["x", "y", *fields],
        (
            [float(x), float(y), *(float(p[i]) for p in fields.values())]
            for i, (x, y) in enumerate(mesh.nodes)
        ),
    )


def cmd_optimize(cfg: RunConfig, workers: int = 1, verbose: bool = False) -> Dict[str, Any]:
    out = _output_dir(cfg)
    rom_ops = _load_rom(out)
    gamma_p = _gamma_p(cfg, ReducedModel(rom_ops, workers))
    base_cfg = cfg.cvar_config(cfg.cvar.betas[0], gamma_p)
    samples = sample_params(base_cfg)
    init_xi = Impedance(xi_r=cfg.cvar.init_xi_r, xi_i=cfg.cvar.init_xi_i)
    settings = OptimizerSettings(max_iter=cfg.cvar.max_iter)

    mesh, fom, basis = None, None, None
    if cfg.cvar.field_samples:
        mesh, fom = build_operators(cfg)
        basis = load_basis(out)

    states, timings, reports = {}, {}, {}
    for beta in cfg.cvar.betas:
        label = beta_label(beta)
        cvar_cfg = cfg.cvar_config(beta, gamma_p)
        start = time.perf_counter()
        state = optimize(
            cvar_cfg, rom_ops, init_xi, cfg.cvar.init_alpha, samples, settings, workers
        )
        timings[label] = time.perf_counter() - start
        states[label] = state

        model = ReducedModel(rom_ops, workers)
        normalized = model.energies(model.solve_states(samples, state.xi)) / gamma_p
        var, cvar = empirical_var_cvar(normalized, beta)
        report = {
            "beta": beta,
            "xi_r": state.xi.xi_r,
            "xi_i": state.xi.xi_i,
            "alpha": state.alpha,
            "J": state.J,
            "iterations": state.iter,
            "status": state.status,
            "pde_solves": state.pde_solves,
            "evaluations": state.evaluations,
            "gamma_p": gamma_p,
            "Q": cvar_cfg.Q,
            "empirical_var": var,
            "empirical_cvar": cvar,
            "mean_normalized_energy": float(np.mean(normalized)),
            "workers": workers,
            "timing": {"wall_time_seconds": timings[label]},
        }
        write_json(report, out / f"report_beta_{label}.json")
        write_history_csv(state.history, out / f"history_beta_{label}.csv")
        reports[label] = report

        if cfg.cvar.field_samples:
            subset = samples[: cfg.cvar.field_samples]
            mean_0, std_0 = _field_statistics(basis, rom_ops, fom, subset, init_xi, gamma_p, workers)
            mean_1, std_1 = _field_statistics(basis, rom_ops, fom, subset, state.xi, gamma_p, workers)
            write_csv(
                out / f"field_beta_{label}.csv",
                ["x", "y", "mean_initial", "std_initial", "mean_optimal", "std_optimal"],
                (
                    [float(x), float(y), float(a), float(b), float(c), float(d)]
                    for (x, y), a, b, c, d in zip(mesh.nodes, mean_0, std_0, mean_1, std_1)
                ),
            )
            slice_theta = [slice_params()]
            _write_pressure(
                out / f"pressure_beta_{label}.csv",
                mesh,
                {
                    name: basis.Z @ solve_rom_batch(rom_ops, slice_theta, xi)[0]
                    for name, xi in (("re_initial", init_xi), ("re_optimal", state.xi))
                },
            )

        if verbose:
            display_history(state.history, title=f"BFGS iterations, beta={label}")

    if verbose:
        display_optimization_report(
            {f"beta={label}": state for label, state in states.items()},
            {f"beta={label}": seconds for label, seconds in timings.items()},
        )
    return reports


def cmd_compare_fom_rom(
    cfg: RunConfig, workers: int = 1, verbose: bool = False
) -> Dict[str, Any]:
    out = _output_dir(cfg)
    mesh, fom = build_operators(cfg)
    rom_ops = _load_rom(out)
    theta = nominal_params(cfg.cvar_config(cfg.cvar.betas[0], 1.0))
    init_xi = Impedance(xi_r=cfg.cvar.init_xi_r, xi_i=cfg.cvar.init_xi_i)
    settings = OptimizerSettings(max_iter=cfg.cvar.max_iter)

    fom_model = FullOrderModel(fom, cfg.solver.settings(), workers)
    gamma_p = (
        float(cfg.cvar.gamma_p)
        if cfg.cvar.gamma_p_policy == "fixed"
        else hard_wall_energy(fom_model, theta)
    )

    runs, timings = {}, {}
    for label, model in (("fom", fom_model), ("rom", ReducedModel(rom_ops, workers))):
        start = time.perf_counter()
        runs[label] = optimize_deterministic(model, theta, cfg.cvar.gamma, gamma_p, init_xi, settings)
        timings[label] = time.perf_counter() - start
        write_history_csv(runs[label].history, out / f"compare_history_{label}.csv")

    xi_fom = complex(runs["fom"].xi.xi_r, runs["fom"].xi.xi_i)
    xi_rom = complex(runs["rom"].xi.xi_r, runs["rom"].xi.xi_i)
    solver = FomSolver(fom, cfg.solver.settings())
    slice_theta = slice_params()
    _write_pressure(
        out / COMPARE_PRESSURE_FILE,
        mesh,
        {
            "re_initial": solver.solve(slice_theta, init_xi),
            "re_fom": solver.solve(slice_theta, runs["fom"].xi),
            "re_rom": solver.solve(slice_theta, runs["rom"].xi),
        },
    )
    report = {
        "theta": theta.model_dump(),
        "gamma_p": gamma_p,
        "workers": workers,
        "runs": {
            label: {
                "xi_r": state.xi.xi_r,
                "xi_i": state.xi.xi_i,
                "J": state.J,
                "iterations": state.iter,
                "status": state.status,
                "pde_solves": state.pde_solves,
            }
            for label, state in runs.items()
        },
        "relative_difference": abs(xi_fom - xi_rom) / abs(xi_fom),
        "timing": {f"{label}_seconds": t for label, t in timings.items()},
    }
    write_json(report, out / COMPARE_FILE)
    if verbose:
        for label, state in runs.items():
            display_history(state.history, title=f"{label.upper()} deterministic run")
        display_optimization_report(
            {label.upper(): state for label, state in runs.items()},
            {label.upper(): seconds for label, seconds in timings.items()},
        )
    return report
