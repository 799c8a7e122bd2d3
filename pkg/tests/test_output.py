import os

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from trtblock.driver import ConvergenceCriteria, run_problem
from trtblock.grid import partition_by_steps
from trtblock.output import (
    OutputError, field_path, read_conv, read_fields, read_itercount, read_iterates, read_rates,
    write_fields, write_outputs, write_rates,
)

from conftest import equilibrium_problem, make_problem

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.data())
def test_field_files_round_trip(tmp_path, nx, ny, G, data):
    n = nx * ny
    T = data.draw(arrays(float, n, elements=finite))
    E = data.draw(arrays(float, n, elements=finite))
    Eg = data.draw(arrays(float, (G, n), elements=finite))
    path = tmp_path / "f.csv"
    write_fields(path, (nx, ny), T, E, Eg)
    back = read_fields(path)
    assert back["shape"] == (nx, ny) and back["groups"] == G
    np.testing.assert_array_equal(back["T"], T)
    np.testing.assert_array_equal(back["E"], E)
    np.testing.assert_array_equal(back["Eg"], Eg)


def test_rates_round_trip(tmp_path):
    rows = [(1, 0.1234567890123456789, 1e-300), (5, 0.2, float("nan"))]
    write_rates(tmp_path / "r.csv", rows)
    back = read_rates(tmp_path / "r.csv")
    assert back[0] == rows[0]
    assert back[1][0] == 5 and np.isnan(back[1][2])


def _record(nb, nsteps=4):
    return run_problem(make_problem(n=3, groups=2), partition_by_steps(0.02, nsteps, nb),
                       ConvergenceCriteria(epsilon=1e-10))


@pytest.mark.parametrize("nb, rows", [(1, 4), (4, 1)])
def test_itercount_has_one_row_per_block(tmp_path, nb, rows):
    rec = _record(nb)
    write_outputs(rec, tmp_path, iterates=True)
    ic = read_itercount(tmp_path / "itercount.csv")
    assert ic.shape == (rows, 3)
    assert list(ic[:, 1]) == [nb] * rows
    its = read_iterates(tmp_path)
    assert sorted(its) == list(range(1, rows + 1))
    steps, E_it, _ = its[1]
    np.testing.assert_array_equal(E_it, rec.blocks[0].E_iterates)
    final = read_fields(field_path(tmp_path, 4))
    np.testing.assert_array_equal(final["E"], rec.states[-1].E)


def test_equilibrium_conv_file(tmp_path):
    rec = run_problem(equilibrium_problem(), partition_by_steps(0.02, 3, 1),
                      ConvergenceCriteria(epsilon=1e-12))
    write_outputs(rec, tmp_path, save_every=2)
    conv = read_conv(tmp_path / "conv.csv")
    assert set(conv["j"]) == {0, 1}
    first = conv["j"] == 1
    assert np.all(conv["xi_E"][first] <= 1e-14 * np.abs(rec.states[0].E).max() * 3)
    assert np.all(np.isnan(conv["xi_E"][~first]))
    assert np.all(np.isnan(conv["err_E"]))
    assert sorted(p.name for p in tmp_path.glob("fields_*.csv")) == \
        ["fields_0.csv", "fields_2.csv", "fields_3.csv"]


def test_missing_iterates_reported(tmp_path):
    with pytest.raises(OutputError, match="iterates"):
        read_iterates(tmp_path)


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_directory(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    with pytest.raises(OutputError):
        write_outputs(_record(4), locked / "run")


def test_output_path_below_a_file(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError):
        write_outputs(_record(4), blocker / "run")
