import pytest

from stochtransport.config import (
    EXPERIMENTS,
    ExperimentConfig,
    apply_overrides,
    load_config,
    parse_config,
    resolve,
    validate_config,
)
from stochtransport.errors import ConfigError


@pytest.mark.parametrize("experiment", EXPERIMENTS)
def test_packaged_default_resolves_for_every_experiment(experiment):
    cfg = resolve(None, experiment)
    assert cfg.experiment == experiment and validate_config(cfg) == []


def test_experiment_sections_override_defaults():
    assert load_config(None, "existence").field.drift == "sqrtsign"
    assert load_config(None, "selection").expectation.paths == 10_000
    assert load_config(None, "meanreg").grid.n_x == 256
    assert load_config(None, "contrast").u0_id() == "step"


def test_hash_is_stable_and_sensitive():
    a, b = load_config(None, "meanreg"), load_config(None, "meanreg")
    assert a.config_hash() == b.config_hash() and len(a.config_hash()) == 64
    assert a.with_overrides(seed=1).config_hash() != a.config_hash()
    assert a.with_overrides(grid__K=1024).config_hash() != a.config_hash()


def test_parse_errors_list_every_problem():
    text = "[grid]\nn_x = many\nbogus = 1\n[nowhere]\nx = 1\n[run]\nseed = 1.5\n[experiment:warp]\ngrid.K = 2\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text, "meanreg")
    msg = "\n".join(info.value.problems)
    for fragment in ("n_x", "'bogus'", "[nowhere]", "seed", "'warp'"):
        assert fragment in msg
    with pytest.raises(ConfigError):
        parse_config("not an ini file", "meanreg")
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.ini")


def test_lists_and_ints_parse():
    cfg = parse_config("[field]\neps_ladder = 0.4, 0.2\n[noise]\nsde_K = 8, 32\npaths = 10_000\n", "meanreg")
    assert cfg.field.eps_ladder == (0.4, 0.2) and cfg.noise.sde_K == (8, 32) and cfg.noise.paths == 10000


def test_apply_overrides():
    cfg = apply_overrides(ExperimentConfig(), [("grid.n_x", "101"), ("run.seed", "5"), ("field.drift", "ou")])
    assert (cfg.grid.n_x, cfg.seed, cfg.field.drift) == (101, 5, "ou")
    with pytest.raises(ConfigError):
        apply_overrides(cfg, [("gridn_x", "3")])
    with pytest.raises(ConfigError):
        apply_overrides(cfg, [("grid.nx", "3")])


@pytest.mark.parametrize("changes, fragment", [
    (dict(field__drift="vortex"), "unknown drift"),
    (dict(field__u0="square"), "unknown initial"),
    (dict(field__mollifier="box"), "mollifier"),
    (dict(field__eps=0.001), "below 4 dx"),
    (dict(field__eps=2.0), "exceeds L/4"),
    (dict(field__eps_ladder=(0.1, 0.2)), "strictly decreasing"),
    (dict(grid__K=8), "stability"),
    (dict(expectation__paths=10), "paths"),
    (dict(noise__sde_K=(64, 100)), "divide"),
    (dict(noise__h_probes=("a:b:c",)), "cannot parse"),
    (dict(commutator__ladder=(0.2, 0.01)), "below 4 x spacing"),
    (dict(tolerances__halving=0.0), "halving"),
    (dict(experiment="teleport"), "not one of"),
])
def test_validation_reports_problems(changes, fragment):
    cfg = load_config(None, "meanreg").with_overrides(**changes)
    assert any(fragment in p for p in validate_config(cfg)), validate_config(cfg)
