import numpy as np
import pytest

from lpvp.config import ConfigError, load_config
from lpvp.cr3bp import Cr3bpConfig, keplerian_state


def _write(tmp_path, text):
    p = tmp_path / "run.yaml"
    p.write_text(text)
    return p


def test_defaults():
    cfg = load_config()
    assert cfg.plant_source == "cr3bp" and cfg.cr3bp == Cr3bpConfig()
    assert (cfg.synthesis.norm, cfg.synthesis.gamma, cfg.synthesis.p) == ("h2", 0.1, 1.0)
    assert cfg.simulation.schedule == "estimate" and cfg.simulation.initial_error == 0.1


def test_file_and_flag_precedence(tmp_path):
    p = _write(tmp_path, """
synthesis:
  norm: hinf
  gamma: 0.2
  eps: 1e-9
  p: inf
simulation:
  noise_deg: 2.6
out: results
""")
    cfg = load_config(p)
    assert cfg.synthesis.norm == "hinf" and cfg.synthesis.gamma == 0.2
    assert cfg.synthesis.eps == 1e-9 and cfg.synthesis.p == np.inf
    assert cfg.simulation.noise_deg == 2.6 and cfg.out == "results"
    cfg = load_config(p, {"synthesis.gamma": 0.3, "synthesis.norm": None, "out": "x"})
    assert cfg.synthesis.gamma == 0.3 and cfg.synthesis.norm == "hinf" and cfg.out == "x"


def test_orbit_shorthand(tmp_path):
    cfg = load_config(_write(tmp_path, "cr3bp:\n  orbit: [0.4, 0.6]\n  dt: 0.002\n"))
    np.testing.assert_allclose(cfg.cr3bp.initial_state, keplerian_state(0.4, 0.6))
    assert cfg.cr3bp.dt == 0.002


@pytest.mark.parametrize("text,match", [
    ("synthesis:\n  gamma: -1\n", "gamma must be positive"),
    ("synthesis:\n  gamma: abc\n", "gamma must be a number"),
    ("synthesis:\n  norm: h3\n", "norm"),
    ("synthesis:\n  colour: red\n", "unknown keys"),
    ("solver: {}\n", "unknown sections"),
    ("simulation:\n  schedule: oracle\n", "schedule"),
    ("plant:\n  source: file\n", "plant.path"),
    ("cr3bp:\n  orbit: [1]\n", "orbit"),
    ("cr3bp:\n  dt: -1\n", "dt"),
    ("- a\n- b\n", "mapping"),
    ("synthesis: [\n", "invalid YAML"),
])
def test_invalid(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        load_config(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
