from pathlib import Path

import pytest

from asvattack.config import OUTPUT_ROOT_ENV, load_config
from asvattack.errors import ConfigError
from conftest import tiny_config, write_config


def test_tiny_config_loads_with_defaults(tmp_path):
    cfg = load_config(write_config(tmp_path, tiny_config()))
    assert cfg.model_ids == ["xvec", "ecapa", "resnet"]
    assert cfg.attack.alpha == 0.004 and cfg.attack.epsilon == 0.08 and cfg.attack.steps == 2
    assert cfg.channel.room.distance_m == 0.3 and cfg.channel.room.angle_deg == 90
    assert cfg.output_dir == tmp_path / "out"
    assert cfg.audio_dir == tmp_path / "out" / "corpus"


@pytest.mark.parametrize("bad", [
    {"attacks": {}},
    {"attack": {"steps": 2, "gamma": 1}},
    {"attack": {"loss": "hinge"}},
    {"data": {"trial_list": "t.txt", "fraction": 1.5}},
    {"precision": "float16"},
])
def test_invalid_settings_rejected(tmp_path, bad):
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, tiny_config(**bad)))


def test_duplicate_ids_and_lonely_ensemble(tmp_path):
    cfg = tiny_config()
    cfg["models"].append(dict(cfg["models"][0]))
    with pytest.raises(ConfigError, match="unique"):
        load_config(write_config(tmp_path, cfg))
    with pytest.raises(ConfigError, match="two models"):
        load_config(write_config(tmp_path, tiny_config(models=("xvec",))))


def test_file_level_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    p = tmp_path / "c.yaml"
    p.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("models: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(p)
    cfg = tiny_config()
    cfg["base_dir"] = "/elsewhere"
    with pytest.raises(ConfigError, match="reserved"):
        load_config(write_config(tmp_path, cfg))


def test_output_root_override(tmp_path, monkeypatch):
    cfg = load_config(write_config(tmp_path, tiny_config()))
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "elsewhere"))
    assert cfg.output_dir == Path(tmp_path / "elsewhere")


def test_relative_paths_follow_the_config(tmp_path):
    cfg = tiny_config()
    cfg["models"][0]["path"] = "models/xvec.asvm"
    loaded = load_config(write_config(tmp_path / "sub", cfg))
    assert loaded.resolve(loaded.models[0].path) == tmp_path / "sub" / "models" / "xvec.asvm"
