import math

import pytest

from mcmlsd.config import Config, ConfigError, load_config, parse_config_text


def test_defaults_are_valid():
    cfg = Config().validate()
    assert cfg.method == "4"
    assert cfg.k_values() == list(range(10, 501, 10))
    hp = cfg.hough_params()
    assert (hp.delta_rho, hp.delta_theta, hp.max_lines, hp.support_radius, hp.refit) == (0.4, 0.46, 500, 3.0, True)


def test_file_then_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# detector run\nmax_lines = 40  # fewer\nmethod=2\n\nrefit = off\nmode = pixel\n")
    cfg = load_config(p)
    assert (cfg.max_lines, cfg.method, cfg.refit, cfg.mode) == (40, "2", False, "pixel")
    cfg = load_config(p, {"max_lines": "7", "method": None})
    assert cfg.max_lines == 7 and cfg.method == "2"


def test_unknown_key_names_line(tmp_path):
    with pytest.raises(ConfigError, match=r"x\.cfg:2: unknown config key 'bogus'"):
        parse_config_text("max_lines = 3\nbogus = 1\n", "x.cfg")
    with pytest.raises(ConfigError, match=":1: expected"):
        parse_config_text("max_lines 3\n")
    with pytest.raises(ConfigError, match="unknown"):
        Config().with_values({"nope": 1})


@pytest.mark.parametrize(
    "values",
    [
        {"max_lines": "abc"},
        {"max_lines": "0"},
        {"delta_rho": "-1"},
        {"method": "7"},
        {"mode": "fuzzy"},
        {"halfwidth": "0"},
        {"k_grid": "30,20"},
        {"k_grid": "a:b:c"},
        {"refit": "maybe"},
        {"threshold": "-2"},
    ],
)
def test_invalid_values(values):
    with pytest.raises(ConfigError):
        Config().with_values(values)


def test_k_grid_forms():
    assert Config(k_grid="1,5,9").k_values() == [1, 5, 9]
    assert Config(k_grid="5:20:5").k_values() == [5, 10, 15, 20]


def test_eval_threshold():
    assert Config().eval_threshold(640, 480) == pytest.approx(2 * math.sqrt(2))
    assert Config(mode="pixel").eval_threshold(640, 480) == pytest.approx(8.0)
    assert Config(threshold=1.5, mode="pixel").eval_threshold(640, 480) == 1.5
