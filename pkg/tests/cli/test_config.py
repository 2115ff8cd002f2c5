from pathlib import Path

import pytest

from liner_optimizer.config import load_config, parse_config
from liner_optimizer.errors import ConfigError


def test_empty_config_uses_defaults():
    cfg = parse_config("")
    assert cfg.sampling.k_count == 40
    assert cfg.sampling.mu_set == ((1.0, 0.0), (0.0, 1.0))
    assert cfg.pod.mode == "mass_weighted"
    assert cfg.solver.method == "direct"
    assert cfg.cvar.betas == (0.5, 0.75, 0.95)
    assert cfg.output.directory == Path("liner_output")


def test_lists_and_pairs_are_parsed():
    cfg = parse_config(
        """
[sampling]
k_range = 2, 4
mu_set = 1 0, 0 1, 1 1
xii_set = -0.5, -1
[pod]
validate_modes = 40, 10, 10
[cvar]
betas = 0.5, 0.9
"""
    )
    assert cfg.sampling.k_range == (2.0, 4.0)
    assert cfg.sampling.mu_set == ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0))
    assert cfg.sampling.xii_set == (-0.5, -1.0)
    assert cfg.pod.validate_modes == (10, 40)
    assert cfg.cvar.betas == (0.5, 0.9)


def test_solver_settings():
    settings = parse_config(
        "[solver]\nmethod = gmres\ntol = 0\nrestart = 50\ncache_size = 8\n"
    ).solver.settings()
    assert settings.method == "gmres"
    assert settings.tol == 0.0
    assert settings.restart == 50
    assert settings.cache_size == 8
    assert settings.max_iter == 2000


def test_unknown_section():
    with pytest.raises(ConfigError) as exc_info:
        parse_config("[plots]\ncolor = red\n")
    assert exc_info.value.section == "plots"


def test_unknown_key():
    with pytest.raises(ConfigError) as exc_info:
        parse_config("[sampling]\nbogus = 1\n")
    assert exc_info.value.section == "sampling"
    assert exc_info.value.key == "bogus"


@pytest.mark.parametrize(
    "text,section,key",
    [
        ("[sampling]\nk_count = 1\n", "sampling", "k_count"),
        ("[sampling]\nk_range = 0, 4\n", "sampling", "k_range"),
        ("[sampling]\nxir_set = 0.5, -1\n", "sampling", "xir_set"),
        ("[pod]\nmode = cosine\n", "pod", "mode"),
        ("[pod]\ntau = 1.5\n", "pod", "tau"),
        ("[solver]\nmethod = cg\n", "solver", "method"),
        ("[solver]\ncache_size = 0\n", "solver", "cache_size"),
        ("[cvar]\nbetas = 0.5, 1.0\n", "cvar", "betas"),
        ("[cvar]\neps = 0\n", "cvar", "eps"),
        ("[mesh]\npath = /nonexistent/duct.msh\n", "mesh", "path"),
    ],
)
def test_invalid_values_name_section_and_key(text, section, key):
    with pytest.raises(ConfigError) as exc_info:
        parse_config(text)
    assert exc_info.value.section == section
    assert exc_info.value.key == key


def test_fixed_normalization_needs_value():
    with pytest.raises(ConfigError) as exc_info:
        parse_config("[cvar]\ngamma_p_policy = fixed\n")
    assert exc_info.value.section == "cvar"
    cfg = parse_config("[cvar]\ngamma_p_policy = fixed\ngamma_p = 2.5\n")
    assert cfg.cvar.gamma_p == 2.5


def test_malformed_and_duplicate_entries():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("[sampling\nseed = 1\n")
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("[sampling]\nseed = 1\nseed = 2\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")


def test_mesh_file_path(tmp_path):
    mesh_path = tmp_path / "duct.msh"
    mesh_path.write_text("ducfem 1\n")
    cfg = parse_config(f"[mesh]\npath = {mesh_path}\n")
    assert cfg.mesh.path == mesh_path


def test_cvar_config_and_output_override(tmp_path):
    cfg = parse_config("[sampling]\nseed = 3\nQ = 12\n[cvar]\neps = 0.01\n").with_output(tmp_path)
    cvar = cfg.cvar_config(0.9, 2.0)
    assert (cvar.beta, cvar.gamma_p, cvar.Q, cvar.seed, cvar.eps) == (0.9, 2.0, 12, 3, 0.01)
    assert cfg.output.directory == tmp_path
