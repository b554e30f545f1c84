import logging

import pytest

from dssl.config import (
    build_gae_config,
    build_train_config,
    config_hash,
    convert_value,
    flatten_config,
    parse_config,
    with_overrides,
)
from dssl.errors import ConfigError


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# settings for a short run\n"
        "K = 4\n"
        "tau = 0.5   # slow target\n"
        "\n"
        "use_entropy = no\n"
        "epochs = 3\n"
        "edge_batch_size = 64\n"
    )
    return str(path)


def test_parse_config(config_file):
    values = parse_config(config_file)
    assert values == {
        "K": "4",
        "tau": "0.5",
        "use_entropy": "no",
        "epochs": "3",
        "edge_batch_size": "64",
    }


def test_parse_config_rejects_malformed_line(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("K = 2\nbeta 0.5\n")
    with pytest.raises(ConfigError) as e:
        parse_config(str(path))
    assert e.value.key == f"{path}:2"


def test_parse_config_rejects_repeated_key(tmp_path):
    path = tmp_path / "twice.cfg"
    path.write_text("K = 2\nK = 3\n")
    with pytest.raises(ConfigError) as e:
        parse_config(str(path))
    assert e.value.key == "K"
    assert "line 2" in str(e.value)


def test_build_train_config(config_file, caplog):
    with caplog.at_level(logging.DEBUG):
        config = build_train_config(parse_config(config_file))
    assert config.hyper.K == 4
    assert config.hyper.use_entropy is False
    assert config.tau == 0.5
    assert config.epochs == 3
    assert "edge_batch_size" in caplog.text


def test_overrides_win_and_none_is_skipped(config_file):
    config = build_train_config(parse_config(config_file), {"epochs": 7, "seed": None})
    assert config.epochs == 7
    assert config.seed == 0


def test_unknown_key():
    with pytest.raises(ConfigError) as e:
        build_train_config({"learning_rat": "0.1"})
    assert e.value.key == "learning_rat"


def test_invalid_value_names_the_key():
    with pytest.raises(ConfigError) as e:
        build_train_config({"tau": "1.5"})
    assert e.value.key == "tau"
    with pytest.raises(ConfigError) as e:
        build_train_config({"K": "many"})
    assert e.value.key == "K"


@pytest.mark.parametrize(
    "raw,expected", [("true", True), ("YES", True), ("on", True), ("0", False), ("off", False)]
)
def test_boolean_values(raw, expected):
    assert convert_value("use_local", raw, bool) is expected


def test_bad_boolean():
    with pytest.raises(ConfigError):
        convert_value("use_local", "maybe", bool)


def test_gae_config_ignores_self_supervised_keys(config_file):
    config = build_gae_config(parse_config(config_file), {"learning_rate": "0.01"})
    assert config.epochs == 3
    assert config.edge_batch_size == 64
    assert config.learning_rate == 0.01


def test_config_hash_is_stable():
    a = build_train_config({"K": "3", "tau": "0.5"})
    b = build_train_config({"tau": "0.5", "K": "3"})
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 64
    assert config_hash(a) != config_hash(with_overrides(a, K=4))


def test_flatten_and_override():
    config = with_overrides(build_train_config(), beta=0.0, epochs=5)
    flat = flatten_config(config)
    assert flat["beta"] == 0.0
    assert flat["epochs"] == 5
    assert "hyper" not in flat
