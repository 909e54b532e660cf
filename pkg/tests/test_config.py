import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impulse_games.config import ConfigError, load_config, parse_config

BASE = {"h": 2.0, "p": 2.0, "K": 3.0, "k": 1.0, "r": 0.5, "sigma": 0.7, "c": 1.0}


def test_shorthand_expands():
    cfg = parse_config(dict(BASE))
    cs = cfg.params.costs
    assert cs.K_plus == cs.K_minus == 3.0 and cs.k_plus == cs.k_minus == 1.0
    assert cfg.sim.n_players == 1


@pytest.mark.parametrize("key", ["h", "p", "r", "sigma"])
def test_missing_key_is_named(key):
    raw = dict(BASE)
    del raw[key]
    with pytest.raises(ConfigError, match=repr(key)):
        parse_config(raw)


def test_shorthand_conflict():
    with pytest.raises(ConfigError, match="conflicts"):
        parse_config({**BASE, "K_plus": 2.0})


def test_unknown_keys():
    with pytest.raises(ConfigError, match="unknown key 'gamma'"):
        parse_config({**BASE, "gamma": 1.0})
    with pytest.raises(ConfigError, match=r"\[sim\]"):
        parse_config({**BASE, "sim": {"nsteps": 3}})


def test_bad_values():
    with pytest.raises(ConfigError):
        parse_config({**BASE, "sigma": "wide"})
    with pytest.raises(ConfigError):
        parse_config({**BASE, "sigma": -1.0})
    with pytest.raises(ConfigError):
        parse_config({**BASE, "sim": {"dt": 0.0}})
    with pytest.raises(ConfigError):
        parse_config({**BASE, "sweep": {"param": "zeta"}})
    with pytest.raises(ConfigError):
        parse_config({**BASE, "sweep": {"range": [1.0, 2.0]}})
    with pytest.raises(ConfigError):
        parse_config({**BASE, "sim": 3})


def test_load_shipped_configs():
    import pathlib
    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.toml"))
    assert files
    for f in files:
        cfg = load_config(f)
        assert cfg.params.r > 0


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("h = = 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)


@settings(max_examples=50)
@given(key=st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=8))
def test_any_unknown_top_level_key_is_rejected(key):
    known = set(BASE) | {"K_plus", "K_minus", "k_plus", "k_minus", "alpha_slope", "alpha_intercept",
                         "sim", "sweep", "mfg", "epsnash", "meta"}
    if key in known:
        return
    with pytest.raises(ConfigError):
        parse_config({**BASE, key: 1.0})
