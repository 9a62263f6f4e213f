import json

import pytest

from nftwash.config import ConfigError, PipelineConfig, load_config


def test_defaults():
    c = load_config()
    assert (c.initial_ati_seconds, c.walk_threshold, c.eth_window_min, c.erc20_window_min) == (84400, 100, 20, 80)
    assert (c.hidden_min_len, c.support, c.fee_rate, c.pf_threshold) == (3, 0.0005, 0.025, 1000)


def test_file_and_override_precedence(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"roundtrip.walk_threshold": 100, "events": "ev.csv", "support": 0.01}))
    c = load_config(p, {"walk_threshold": 4, "support": None})
    assert c.walk_threshold == 4 and c.support == 0.01
    assert c.events == str(tmp_path / "ev.csv")


@pytest.mark.parametrize("bad", [
    {"walk_threshold": 0}, {"support": 1.5}, {"eth_window_min": -1}, {"fee_rate": 1}, {"min_count": 0},
])
def test_invalid_values(bad):
    with pytest.raises(ConfigError):
        load_config(None, bad)


def test_unknown_and_malformed(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        load_config(None, {"walk_treshold": 3})
    p = tmp_path / "c.json"
    p.write_text("[1]")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("{")
    with pytest.raises(ConfigError):
        load_config(p)


def test_round_trip_dict():
    c = PipelineConfig(walk_threshold=7)
    assert PipelineConfig(**c.to_dict()) == c
