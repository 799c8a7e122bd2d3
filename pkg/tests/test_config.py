import numpy as np
import pytest

from trtblock.config import SCHEMA, ConfigError, bundled_configs, load_config, parse_config
from trtblock.grid import ConfigurationError
from trtblock.physics import A_RAD

MINIMAL = """\
[mesh]
nx = 3
ny = 2
lx = 1.5
ly = 1.0

[groups]
count = 4

[quadrature]
n_polar = 1
n_azimuthal = 2

[time]
dt = 0.02
t_end = 0.1
block_len = 0.1

[material]
opacity = constant
value = 2.0
cv = 0.01

[initial]
temperature = 0.01

[boundary]
left = blackbody 1.0
right = vacuum
bottom = reflective
top = vacuum

[output]
directory = out
"""


def _edit(text, old, new):
    assert old in text
    return text.replace(old, new)


def test_bundled_configurations():
    assert {"fc_paper.cfg", "fc_desk.cfg"} <= set(bundled_configs())
    full = load_config("fc_paper.cfg")
    assert (full.nx, full.ny, full.lx, full.ly) == (20, 20, 6.0, 6.0)
    assert full.group_bounds.size - 1 == 17
    assert 4 * full.n_polar * full.n_azimuthal == 144
    assert (full.dt, full.t_end, full.block_len) == (0.02, 6.0, 0.02)
    assert full.build_partition().nsteps == 300
    assert full.boundaries["left"] == ("blackbody", 1.0)
    assert full.initial_temperature == 1e-3
    desk = load_config("fc_desk.cfg")
    assert (desk.nx, desk.ny, desk.group_bounds.size - 1) == (8, 8, 8)
    assert 4 * desk.n_polar * desk.n_azimuthal == 36
    assert desk.build_partition().nsteps == 60
    problem = desk.build_problem()
    assert problem.material.cv == pytest.approx(0.5917 * A_RAD, rel=1e-14)


def test_minimal_config_builds(tmp_path):
    cfg = parse_config(MINIMAL, base_dir=tmp_path)
    assert cfg.output_dir == tmp_path / "out"
    assert cfg.boundaries["bottom"] == ("reflective", None)
    p = cfg.build_problem()
    assert p.mesh.shape == (3, 2) and p.groups.count == 4 and p.quad.count == 8
    assert cfg.build_criteria().epsilon == 1e-14


def test_explicit_group_bounds():
    text = _edit(MINIMAL, "count = 4", "bounds = 0.1, 1, 10")
    cfg = parse_config(text)
    np.testing.assert_allclose(cfg.group_bounds, [0.1, 1, 10])
    with pytest.raises(ConfigError, match="not both"):
        parse_config(_edit(MINIMAL, "count = 4", "count = 4\nbounds = 0.1, 1"))


def test_empty_file_lists_every_missing_key():
    with pytest.raises(ConfigError) as exc:
        parse_config("")
    msg = str(exc.value)
    for section, keys in SCHEMA.items():
        for key, default in keys.items():
            if default == "required":
                assert f"[{section}] {key}" in msg


@pytest.mark.parametrize("old, new, line, fragment", [
    ("ny = 2", "ny = 2\nnz = 4", 4, "unknown key 'nz'"),
    ("block_len = 0.1", "block_len = 0.03", 17, "block_len"),
    ("right = vacuum", "right = mirror", 29, "right"),
    ("left = blackbody 1.0", "left = blackbody -1", 28, "positive"),
    ("nx = 3", "nx = three", 2, "integer"),
    ("[output]", "[extras]\nfoo = 1\n\n[output]", 33, "unknown section"),
])
def test_errors_carry_line_numbers(old, new, line, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(_edit(MINIMAL, old, new))
    msg = str(exc.value)
    assert f"line {line}" in msg
    assert fragment in msg


def test_nonpositive_values_rejected():
    with pytest.raises(ConfigError, match="positive"):
        parse_config(_edit(MINIMAL, "lx = 1.5", "lx = 0"))
    with pytest.raises(ConfigError):
        parse_config(_edit(MINIMAL, "temperature = 0.01", "temperature = -1"))


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("no_such_file.cfg")


def test_partition_errors_are_configuration_errors():
    assert issubclass(ConfigError, ValueError) and issubclass(ConfigurationError, ValueError)
