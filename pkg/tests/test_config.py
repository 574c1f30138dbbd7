import pytest

from tsgscada import config as cfgmod
from tsgscada.config import RunConfig
from tsgscada.errors import ConfigError


def test_defaults_round_trip():
    cfg = RunConfig()
    assert cfgmod.loads(cfg.to_toml()) == cfg
    assert cfgmod.canonical(cfg.to_toml()) == cfg.to_toml()


def test_partial_file_is_canonicalised():
    text = "[train]\nepochs = 3\n\n[model]\nd = 16\n"
    canon = cfgmod.canonical(text)
    back = cfgmod.loads(canon)
    assert back.train.epochs == 3 and back.model.d == 16
    assert cfgmod.canonical(canon) == canon


def test_unknown_keys_and_sections_rejected():
    with pytest.raises(ConfigError):
        cfgmod.loads("[train]\nepochz = 3\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("[trainer]\nepochs = 3\n")


def test_type_errors():
    with pytest.raises(ConfigError):
        cfgmod.loads("[train]\nepochs = 'three'\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("[model]\nfrozen = 1\n")
    assert cfgmod.loads("[train]\nlr = 1\n").train.lr == 1.0


def test_validation():
    with pytest.raises(ConfigError):
        cfgmod.loads("[data]\nevents_per_video = 5\nmax_event_len = 20\nframes = 64\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("[model]\nwidths = [8]\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("not toml [")


def test_replace_touches_only_named_keys():
    base = RunConfig()
    new = base.replace(model={"frozen": False})
    assert new.model.frozen is False
    assert new.to_dict()["scada"] == base.to_dict()["scada"]
    with pytest.raises(ConfigError):
        base.replace(bogus={})


def test_save_and_load(tmp_path):
    cfg = RunConfig().replace(train={"seed": 5})
    cfg.save(tmp_path / "c.toml")
    assert cfgmod.load(tmp_path / "c.toml") == cfg
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "missing.toml")
