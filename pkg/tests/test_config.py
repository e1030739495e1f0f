import numpy as np
import pytest

from envadapt import config
from envadapt.errors import ConfigurationError


def write(tmp_path, text):
    p = tmp_path / "exp.toml"
    p.write_text(text)
    return p


def test_defaults_valid():
    cfg = config.load()
    assert cfg.data.n_envs == 4 and cfg.data.d_i == 128 and cfg.data.d_n == 16
    assert cfg.ofdm.k_sub == 24 and cfg.ofdm.study_pilots == [3, 24]


def test_mmwave_task_defaults():
    cfg = config.load(overrides={"experiment": {"task": "mmwave"}})
    assert cfg.data.d_n == 64


def test_paper_preset():
    cfg = config.load(preset_name="paper")
    assert cfg.data.n_envs == 60 and cfg.data.d_i == 500 and cfg.ofdm.k_sub == 72


def test_file_values_and_seed(tmp_path):
    p = write(tmp_path, '[experiment]\ntask = "ofdm"\nscheme = "tl"\nseed = 3\n[ea2]\nlam = 2.5\n')
    cfg = config.load(p, seed=9)
    assert cfg.experiment.scheme == "tl" and cfg.ea2.lam == 2.5 and cfg.experiment.seed == 9


@pytest.mark.parametrize("text, where", [
    ("[bogus]\nx = 1\n", "[bogus]"),
    ("[data]\nd_z = 3\n", "d_z"),
    ("[data]\nd_i = 'many'\n", "data.d_i"),
    ("[data]\nd_i = 0\n", "data.d_i"),
    ("[data]\nsnr_grid = []\n", "data.snr_grid"),
    ("[experiment]\nscheme = 'magic'\n", "experiment.scheme"),
    ("[ea1]\nsigma = -1.0\n", "ea1.sigma"),
    ("[iadm]\nc3 = 0.0\n", "iadm.c3"),
    ("[ea2]\nlam = 0\n", "ea2.lam"),
    ("[experiment\n", "exp.toml"),
])
def test_invalid_config_names_path_and_field(tmp_path, text, where):
    p = write(tmp_path, text)
    with pytest.raises(ConfigurationError) as info:
        config.load(p)
    assert str(p) in str(info.value) and where in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        config.load(tmp_path / "nope.toml")


def test_dumps_round_trip(tmp_path):
    cfg = config.load(seed=4, overrides={"ea2": {"eta": 7.0}})
    back = config.load(write(tmp_path, config.dumps(cfg)))
    assert back.to_dict() == cfg.to_dict() and back.hash() == cfg.hash()


def test_hash_tracks_values():
    a, b = config.load(seed=1), config.load(seed=2)
    assert a.hash() != b.hash() and a.hash() == config.load(seed=1).hash()


def test_all_solver_constants_exposed():
    d = config.ExperimentConfig().to_dict()
    for sec, keys in {"ea1": ("sigma", "rho", "decay", "eps", "iterations", "tol"),
                      "ea2": ("eta", "gamma", "mu", "lam"),
                      "iadm": ("c1", "c2", "c3", "c4", "iterations", "tol")}.items():
        assert set(keys) <= set(d[sec])
    assert np.all(np.asarray(d["data"]["snr_grid"]) >= 0)
