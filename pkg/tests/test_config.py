import pytest
from hypothesis import given
from hypothesis import strategies as st

from jkosplit.acceptance import PRESETS, load_preset
from jkosplit.config import FIELDS, RunConfig, config_from_dict, initial_density, parse_config, parse_value
from jkosplit.exceptions import ConfigError


class TestParsing:
    def test_minimal_fills_defaults(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("gamma: 2\nchi: 1\ntau: 0.01\nT: 0.1\n")
        cfg = parse_config(p)
        echo = cfg.echo()
        assert set(echo) == set(FIELDS)
        assert echo["n"] == 1024 and echo["mode"] == "splitting"

    def test_gamma_below_one(self):
        with pytest.raises(ConfigError, match="gamma: must exceed 1"):
            config_from_dict({"gamma": 0.5})

    def test_unknown_key_suggestion(self):
        with pytest.raises(ConfigError, match="did you mean 'gamma'"):
            config_from_dict({"gamma_": 2})

    def test_exponent_strings(self):
        # YAML 1.1 reads 1e-8 as a string
        cfg = config_from_dict({"grad_rtol": "1e-8", "n": 512.0})
        assert cfg.grad_rtol == 1e-8 and isinstance(cfg.n, int)

    @pytest.mark.parametrize(
        "data,key",
        [
            ({"n": 2.5}, "n"),
            ({"tau": 0.3, "T": 1.0}, "T"),
            ({"mode": "explicit"}, "mode"),
            ({"continue_on_stall": "yes"}, "continue_on_stall"),
            ({"L": "wide"}, "L"),
            ({"chi": -1.0}, "model"),
        ],
    )
    def test_rejects(self, data, key):
        with pytest.raises(ConfigError, match=f"^{key}"):
            config_from_dict(data)

    def test_not_a_mapping(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            parse_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "none.yaml")

    def test_parse_value(self):
        assert parse_value("tau", "0.01") == 0.01
        assert parse_value("n", "512") == 512
        with pytest.raises(ConfigError):
            parse_value("tua", "1")

    @given(st.floats(1.01, 5.0), st.floats(0.0, 5.0))
    def test_echo_round_trip(self, gamma, chi):
        cfg = config_from_dict({"gamma": gamma, "chi": chi})
        assert config_from_dict(cfg.echo()) == cfg


class TestPresets:
    @pytest.mark.parametrize("name", PRESETS)
    def test_loads(self, name):
        cfg = load_preset(name)
        assert cfg.tau == 1e-3 and cfg.T == 0.5

    def test_fault_preset_expects_constraint_failure(self):
        cfg = load_preset("fault_beta")
        assert cfg.freeze_beta_zero and "constraint" in cfg.expected_failures

    def test_initial_masses(self):
        for name in PRESETS:
            cfg = load_preset(name).replace(n=512)
            assert initial_density(cfg).mass == pytest.approx(cfg.mass, rel=1e-3)


def test_replace_validates():
    with pytest.raises(ConfigError):
        RunConfig().replace(gamma=1.0)
