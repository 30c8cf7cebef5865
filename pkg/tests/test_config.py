import json
import logging
import math

import pytest

from config import (
    DEFAULT_CONFIG,
    AssumptionConstants,
    Guards,
    UniversalConstants,
    _TagFormatter,
    config_from_dict,
    load_config,
    read_document,
    resolve_threads,
)
from errors import ConfigError


def test_defaults():
    assert DEFAULT_CONFIG.universal == UniversalConstants()
    assert DEFAULT_CONFIG.universal.C1 == 2.0
    assert DEFAULT_CONFIG.universal.epsilon == 0.5
    assert math.isinf(DEFAULT_CONFIG.assumptions.delta)
    assert DEFAULT_CONFIG.guards.walk_oracle_max_n == 60


def test_toml_overrides(tmp_path):
    path = tmp_path / "lab.toml"
    path.write_text('[universal]\nC = 4\nepsilon = 0.25\n\n[guards]\nwalk_oracle_max_k = 3\n')
    config = load_config(path)
    assert config.universal.C == 4.0
    assert isinstance(config.universal.C, float)
    assert config.universal.epsilon == 0.25
    assert config.guards.walk_oracle_max_k == 3
    assert config.assumptions == AssumptionConstants()


def test_json_accepted(tmp_path):
    path = tmp_path / "lab.json"
    path.write_text(json.dumps({"assumptions": {"c_B": 0.25}}))
    assert load_config(path).assumptions.c_B == 0.25


def test_no_path_gives_defaults():
    assert load_config(None) is DEFAULT_CONFIG


@pytest.mark.parametrize("data", [
    {"universal": {"epsilonn": 0.5}},
    {"guard": {}},
    {"guards": {"chunk_size": "big"}},
])
def test_typos_and_bad_values_rejected(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_missing_and_unparsable_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        read_document(tmp_path / "nope.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[universal\nC = 1")
    with pytest.raises(ConfigError, match="cannot parse"):
        read_document(bad)


def test_resolve_threads():
    assert resolve_threads(3) == 3
    with pytest.raises(ConfigError):
        resolve_threads(0)


def test_tag_formatter():
    fmt = _TagFormatter()
    info = logging.LogRecord("csbm", logging.INFO, __file__, 1, "n=%d", (5,), None)
    warn = logging.LogRecord("pkg.walks", logging.WARNING, __file__, 1, "guard", (), None)
    assert fmt.format(info) == "[csbm] n=5"
    assert fmt.format(warn) == "[walks] WARNING: guard"


def test_guards_are_frozen():
    with pytest.raises(Exception):
        Guards().chunk_size = 1
