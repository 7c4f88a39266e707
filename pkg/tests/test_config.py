import numpy as np
import pytest

from deltacert.config import (
    build_assembly, build_certificates, bundled_config_path, dump_config, load_config, parse_config,
)
from deltacert.errors import ConfigError

from conftest import LAG_CONFIG


def _error(text):
    with pytest.raises(ConfigError) as ei:
        parse_config(text)
    return ei.value


def test_bundled_config(smsl_cfg):
    assert smsl_cfg.name == "smsl" and len(smsl_cfg.devices) == 2
    asm = build_assembly(smsl_cfg)
    assert (asm.n, asm.m) == (3, 4)
    certs = build_certificates(smsl_cfg)
    assert certs[0].dynamic and not certs[1].dynamic


@pytest.mark.parametrize("text", [LAG_CONFIG, open(bundled_config_path()).read()])
def test_round_trip(text):
    cfg = parse_config(text)
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


def test_wrong_type_location():
    e = _error(LAG_CONFIG.replace("tau: 1.0", "tau: fast"))
    assert e.path == ("devices", 0, "params", "tau")
    assert (e.line, e.column) == (9, 19)
    assert "line 9, column 19" in str(e)


def test_missing_key_location():
    e = _error(LAG_CONFIG.replace("    X: [[0, 0.5], [0.5, 0]]\n", ""))
    assert e.path == ("certificates",) + (0,) and "'X'" in e.message
    assert e.line == 11


def test_unknown_and_duplicate_keys():
    e = _error(LAG_CONFIG.replace("name: lag", "name: lag\ncolour: red"))
    assert e.path == ("colour",) and e.line == 3 and e.column == 1
    e = _error(LAG_CONFIG.replace("name: lag", "name: lag\nname: other"))
    assert "duplicate key" in e.message


def test_bad_bus_and_duplicate_device():
    e = _error(LAG_CONFIG.replace("  - bus: 0\n    type: linear_lag", "  - bus: 3\n    type: linear_lag"))
    assert e.path == ("devices", 0, "bus") and "does not exist" in e.message
    dup = LAG_CONFIG.replace("certificates:", "  - bus: 0\n    type: linear_lag\n"
                             "    params: {tau: 2.0, gain: 1.0}\ncertificates:")
    e = _error(dup)
    assert e.path == ("devices", 1, "bus") and "already has a device" in e.message


def test_dimension_errors():
    e = _error(LAG_CONFIG.replace("P: [[0.5]]", "P: [[0.5, 0], [0, 1]]"))
    assert e.path == ("certificates", 0, "P")
    e = _error(LAG_CONFIG.replace("x0: [0.2], u0", "x0: [0.2, 0.1], u0"))
    assert e.path == ("engine", "x0")
    e = _error(LAG_CONFIG.replace("[[0, 0.5], [0.5, 0]]", "[[0, 0.5], [0.5]]"))
    assert e.path == ("certificates", 0, "X", 1)


def test_value_errors():
    assert "positive" in _error(LAG_CONFIG.replace("tau: 1.0", "tau: -1")).message
    assert "s = 1" in _error(LAG_CONFIG.replace("s_min: 0.9", "s_min: 1.05")).message
    assert "below" in _error(LAG_CONFIG.replace("upper: [1]", "upper: [-2]")).message
    assert _error("").message == "configuration is empty"


def test_yaml_syntax_error_location():
    e = _error("version: 1\nnetwork: [1, 2\n")
    assert e.line is not None and e.line >= 2


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_source_hash_changes_with_text():
    a = parse_config(LAG_CONFIG)
    b = parse_config(LAG_CONFIG + "\n# comment\n")
    assert a == b and a.source_hash != b.source_hash


def test_lag_assembly():
    cfg = parse_config(LAG_CONFIG)
    asm = build_assembly(cfg)
    assert np.array_equal(asm.C, [[1.0]]) and asm.n == 1
