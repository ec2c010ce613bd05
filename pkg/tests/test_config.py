import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dics.config import TrainConfig, apply_overrides, dump_config_text, load_config, parse_config_text
from dics.data import SyntheticSpec


def test_defaults():
    cfg = TrainConfig()
    assert cfg.temperature == 0.07 and cfg.lam == 0.999 and cfg.queue_multiple == 4
    cfg.validate()


def test_parse_basic():
    cfg = parse_config_text("""
        # comment
        alpha = 0.5
        lambda = 0.99   # trailing comment
        hidden_dims = 8, 4
        data.noise_std = 0.3
        csv_path = none
    """)
    assert cfg.alpha == 0.5 and cfg.lam == 0.99 and cfg.hidden_dims == (8, 4)
    assert cfg.data.noise_std == 0.3 and cfg.csv_path is None


@pytest.mark.parametrize("text", ["alpah = 1", "data.nosie = 1", "lam_bda = 0.9"])
def test_unknown_key(text):
    with pytest.raises(ValueError, match="unknown config key"):
        parse_config_text(text)


def test_bad_value_names_line():
    with pytest.raises(ValueError, match="line 2"):
        parse_config_text("alpha = 1\nepochs = many\n")


def test_missing_equals():
    with pytest.raises(ValueError, match="line 1"):
        parse_config_text("alpha 1")


def test_overrides_win(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("alpha = 0.5\nseed = 3\n")
    cfg = load_config(p, ["alpha=2", "tau=0.1"])
    assert cfg.alpha == 2.0 and cfg.seed == 3 and cfg.temperature == 0.1


def test_override_format():
    with pytest.raises(ValueError):
        apply_overrides(TrainConfig(), ["alpha"])
    with pytest.raises(KeyError):
        apply_overrides(TrainConfig(), ["nope=1"])


@pytest.mark.parametrize("kw", [dict(alpha=-0.1), dict(lam=1.5), dict(queue_multiple=0), dict(temperature=0.0),
                                dict(prototype_init="random"), dict(val_fraction=1.0)])
def test_invariants(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw).validate()


def test_dump_roundtrip():
    cfg = TrainConfig(alpha=0.25, hidden_dims=(5, 6), data=SyntheticSpec(noise_std=0.9, confounder_mode="decorrelate"))
    back = parse_config_text(dump_config_text(cfg))
    assert back == cfg


def test_dict_roundtrip():
    cfg = TrainConfig(hidden_dims=(3,), data_seed=9)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_data_spec_seed():
    assert TrainConfig(seed=4).data_spec().seed == 4
    assert TrainConfig(seed=4, data_seed=1).data_spec().seed == 1
    assert TrainConfig(target_domain=2).data_spec().target_domain == 2


@given(st.integers(0, 1000), st.integers(0, 1000))
def test_digest_ignores_seed_only(a, b):
    assert TrainConfig(seed=a).digest() == TrainConfig(seed=b).digest()
    assert TrainConfig(alpha=0.5).digest() != TrainConfig().digest()
    assert dataclasses.replace(TrainConfig(), epochs=3).digest() != TrainConfig().digest()
