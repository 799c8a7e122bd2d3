import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trtblock.grid import (
    ConfigurationError, FrequencyGroups, SpatialMesh, build_quadrature, build_time_blocks,
    partition_by_steps,
)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 16))
def test_quadrature_moment_identities(n_polar, n_az):
    q = build_quadrature(n_polar, n_az)
    w = q.weights
    assert q.count == 4 * n_polar * n_az
    assert np.isclose(w.sum(), 4 * np.pi, rtol=1e-12, atol=0)
    for comp in (q.mu, q.eta):
        assert abs(np.sum(w * comp)) <= 1e-12
    omega = np.stack([q.mu, q.eta, q.xi])
    second = np.einsum("m,am,bm->ab", w, omega, omega)
    np.testing.assert_allclose(second, 4 * np.pi / 3 * np.eye(3), rtol=0, atol=1e-10 * 4 * np.pi)
    np.testing.assert_allclose(q.mu**2 + q.eta**2 + q.xi**2, 1.0, rtol=1e-14)


def test_smallest_quadrature_has_equal_weights():
    q = build_quadrature(1, 1)
    assert q.count == 4
    np.testing.assert_allclose(q.weights, np.pi, rtol=1e-15)


def test_production_quadrature_size():
    assert build_quadrature(3, 12).count == 144
    assert build_quadrature(3, 3).count == 36


def test_quadrants_share_magnitudes():
    q = build_quadrature(2, 3)
    mu = q.quadrant_view(q.mu)
    eta = q.quadrant_view(q.eta)
    for k in range(4):
        np.testing.assert_array_equal(np.abs(mu[k]), np.abs(mu[0]))
        np.testing.assert_array_equal(np.abs(eta[k]), np.abs(eta[0]))


def test_bad_quadrature_order():
    with pytest.raises(ConfigurationError):
        build_quadrature(0, 3)


def test_mesh_spacing_and_validation():
    m = SpatialMesh(4, 2, 6.0, 3.0)
    assert (m.dx, m.dy, m.ncells, m.cell_volume) == (1.5, 1.5, 8, 2.25)
    with pytest.raises(ConfigurationError):
        SpatialMesh(0, 2, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        SpatialMesh(2, 2, -1.0, 1.0)


def test_groups_validation_and_edges():
    g = FrequencyGroups.logarithmic(17)
    assert g.count == 17
    assert g.edges[0] == 0 and np.isinf(g.edges[-1])
    np.testing.assert_allclose(g.bounds[[0, -1]], [1e-2, 1e2])
    assert np.isfinite(FrequencyGroups(g.bounds, fold_tails=False).edges).all()
    with pytest.raises(ConfigurationError):
        FrequencyGroups([1.0, 0.5])
    with pytest.raises(ConfigurationError):
        FrequencyGroups([0.0, 1.0])


@pytest.mark.parametrize("block_len, nblocks, size", [(0.02, 300, 1), (6.0, 1, 300), (0.1, 60, 5)])
def test_time_blocks_of_the_benchmark(block_len, nblocks, size):
    p = build_time_blocks(0.02, 6.0, block_len)
    assert p.nsteps == 300
    assert p.nblocks == nblocks
    assert set(p.block_sizes) == {size}
    assert p.step_edges[0] == 0.0 and p.step_edges[-1] == 6.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 200), st.integers(1, 200))
def test_blocks_tile_the_step_grid(nsteps, per_block):
    p = partition_by_steps(0.02, nsteps, per_block)
    steps = [n for b in range(p.nblocks) for n in p.steps_in_block(b)]
    assert steps == list(range(1, nsteps + 1))
    assert p.block_edges[0] == 0 and p.block_edges[-1] == nsteps
    assert np.all(p.block_sizes >= 1)
    assert np.all(np.diff(p.step_edges) > 0)


def test_incommensurate_blocks_rejected():
    with pytest.raises(ConfigurationError):
        build_time_blocks(0.02, 6.0, 0.03)
    with pytest.raises(ConfigurationError):
        build_time_blocks(0.02, 6.01, 0.02)
