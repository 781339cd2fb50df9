import pytest
from hypothesis import given, strategies as st

from cocavit.backbone import VARIANTS, ConfigError, get_variant
from cocavit.config import DEFAULT_SEED, RunConfig, load_model_config, parse_model_config, parse_text


def test_parse_text_values():
    vals = parse_text("# header\na = 3\nb = 2.5  # trailing\nc = [-, 4, 8]\nd = true\ne = nano\n\n")
    assert vals == {"a": 3, "b": 2.5, "c": [None, 4, 8], "d": True, "e": "nano"}


def test_table_style_heads_and_ratios():
    cfg = parse_model_config("variant = 11M\nheads = [-, 4, 8, 14]\nmlp_ratios = [-, 5, 4, 3]\n")
    assert cfg == get_variant("11M")


@pytest.mark.parametrize("text,match", [
    ("variant = nano\nhedas = [1, 2, 3]\n", "unknown"),
    ("variant = nano\nheads = 3\n", "list"),
    ("variant = nano\nheads\n", "key = value"),
    ("variant = nano\nseed = 1\nseed = 2\n", "duplicate"),
    ("conv_dim = 8\n", "missing"),
    ("variant = nano\nheads = [2, -, 2]\n", "leading"),
    ("variant = nano\nwindows = [4, 4\n", "unterminated"),
])
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_model_config(text)


@given(st.sampled_from(sorted(VARIANTS)))
def test_snapshot_round_trip(name):
    cfg = get_variant(name)
    assert parse_model_config(cfg.snapshot()) == cfg


def test_run_config(tmp_path):
    assert RunConfig("shapes").seed == DEFAULT_SEED == 42
    assert RunConfig("shapes").model_config().name == "nano"
    path = tmp_path / "c.cfg"
    path.write_text(get_variant("28M").snapshot())
    assert RunConfig("shapes", config_path=str(path)).model_config() == load_model_config(path)
    with pytest.raises(ConfigError):
        RunConfig("shapes", variant="nano", config_path=str(path)).model_config()
