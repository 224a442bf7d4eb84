from pathlib import Path

import numpy as np
import pytest

from pspin_anneal.config import (
    DEFAULT_ETA_VALUES,
    DEFAULT_TF_VALUES,
    ConfigError,
    build_config,
    ensure_writable,
    parse_config,
)


def _write(tmp_path, text, name="c.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_empty_config_gives_defaults(tmp_path):
    config = parse_config(_write(tmp_path, ""))
    m = config.model
    assert (m.N, m.p, m.E, m.Gamma) == (16, 3, 1.0, 1.0)
    assert (config.beta, config.omega_c) == (10.0, 50.0)
    assert config.eta_values == (0.0, 1e-4, 1e-3, 1e-2) == DEFAULT_ETA_VALUES
    assert config.schedule.tag == "linear"
    assert config.evolution.method == "rk4-ip" and config.evolution.lamb_shift
    assert config.jobs == 1 and config.out_dir == Path.cwd()


def test_default_tf_grid():
    assert len(DEFAULT_TF_VALUES) == 14
    assert DEFAULT_TF_VALUES[0] == 0.0
    np.testing.assert_allclose(DEFAULT_TF_VALUES[1:], np.logspace(0, 4, 13), rtol=1e-15)


def test_full_config(tmp_path):
    text = """
model: {N: 8, p: 5, E: 2.0, Gamma: 0.5}
bath: {beta: 4, omega_c: 20}
eta_values: [0, 0.01]
tf_values: [0, 10]
evolution: {step: 0.01, method: dp54, lamb_shift: false, record_stride: 10}
gap: {resolution: 51}
output: {dir: results}
jobs: 3
"""
    config = parse_config(_write(tmp_path, text))
    assert config.model.p == 5 and config.model.Gamma == 0.5
    assert config.eta_values == (0.0, 0.01) and config.tf_values == (0.0, 10.0)
    ev = config.evolution_for(10.0)
    assert (ev.t_f, ev.step, ev.method, ev.lamb_shift, ev.record_stride) == (10.0, 0.01, "dp54", False, 10)
    assert config.gap_resolution == 51 and config.jobs == 3
    assert config.out_dir == Path.cwd() / "results"
    assert config.source == str(tmp_path / "c.yaml")
    echo = config.echo()
    assert echo["model"]["N"] == 8 and "t_f" not in echo["evolution"]


@pytest.mark.parametrize(
    "text,path",
    [
        ("model: {p: 1}", "model.p"),
        ("model: {N: 0}", "model.N"),
        ("model: {N: 2.5}", "model.N"),
        ("model: {q: 3}", "model.q"),
        ("colour: red", "colour"),
        ("bath: {beta: -1}", "bath.beta"),
        ("bath: 3", "bath"),
        ("eta_values: []", "eta_values"),
        ("eta_values: [0, -1e-3]", "eta_values[1]"),
        ("tf_values: [1, -5]", "tf_values[1]"),
        ("tf_values: [1, .nan]", "tf_values[1]"),
        ("tf_values: 10", "tf_values"),
        ("schedule: cubic", "schedule"),
        ("evolution: {method: euler}", "evolution.method"),
        ("evolution: {lamb_shift: 1}", "evolution.lamb_shift"),
        ("evolution: {step: 0}", "evolution.step"),
        ("gap: {resolution: 2}", "gap.resolution"),
        ("jobs: 0", "jobs"),
        ("model: {N: true}", "model.N"),
        ("output: {dir: 5}", "output.dir"),
    ],
)
def test_errors_carry_key_path(tmp_path, text, path):
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, text))
    assert info.value.path == path
    assert str(info.value).startswith(path)


def test_malformed_and_missing(tmp_path):
    with pytest.raises(ConfigError, match="malformed YAML"):
        parse_config(_write(tmp_path, "model: {N: [1,"))
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "absent.yaml")
    with pytest.raises(ConfigError, match="top level"):
        parse_config(_write(tmp_path, "- 1\n- 2"))


def test_relative_dir_uses_base(tmp_path):
    config = build_config({"output": {"dir": "x"}}, base_dir=tmp_path)
    assert config.out_dir == tmp_path / "x"


def test_ensure_writable(tmp_path):
    target = tmp_path / "a" / "b"
    ensure_writable(target)
    assert target.is_dir()
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ConfigError) as info:
        ensure_writable(blocker / "sub")
    assert info.value.path == "output.dir"
