import numpy as np
import pytest
import jax

from phdyn.basins import (basin_map, basin_openness_probe, birkhoff_vector, cluster_basins, label_invariance,
                          observables_for, slice_grid, uniqueness_scan)
from phdyn.systems import equal_blocks, make_f_epsilon, make_glued


def test_slice_grid_has_one_point_per_cell():
    points = slice_grid(4, jax.random.PRNGKey(0))
    assert points.shape == (16, 3)
    np.testing.assert_array_equal(np.floor(points[:, 0] * 4), np.tile(np.arange(4), 4))
    np.testing.assert_array_equal(np.floor(points[:, 1] * 4), np.repeat(np.arange(4), 4))
    assert np.all(points[:, 2] == 0.5)


def test_observables_include_block_indicators(glued2, anosov_t3):
    assert len(observables_for(anosov_t3).names) == 6
    obs = observables_for(glued2)
    assert len(obs.names) == 8
    values = obs(np.array([[0.25, 0.0, 0.0], [0.75, 0.0, 0.0]]))
    np.testing.assert_allclose(values[:, 6:], [[1.0, 0.0], [0.0, 1.0]], atol=1e-12)


def test_cluster_basins():
    points = np.array([[0.1, 0.1], [0.2, 0.1], [0.7, 0.1], [0.8, 0.1], [0.5, 0.5]])
    vectors = np.array([[0.0, 0.0], [0.01, 0.0], [1.0, 1.0], [1.02, 1.0], [0.5, 0.5]])
    converged = np.array([True, True, True, True, False])
    basins = cluster_basins(points, vectors, converged, tol=0.1)
    assert basins.count == 2
    np.testing.assert_array_equal(basins.labels, [1, 1, 2, 2, 0])
    with pytest.raises(ValueError):
        cluster_basins(points, vectors, converged, tol=0.01, eps_conv=0.01)


def test_two_blocks_give_two_basins(glued2):
    basins = basin_map(glued2, grid=8, n=100_000)
    assert basins.count == 2
    assert basins.converged.mean() > 0.9
    assert label_invariance(glued2, basins, 100_000) > 0.9
    openness = basin_openness_probe(glued2, basins, samples=4, n=100_000, min_interface_distance=0.125)
    assert openness['clusters'] == 2
    assert openness['radii'][1e-3]['stable_fraction'] > 0.7


def test_uniqueness_scan(block, glued2):
    table = uniqueness_scan([('block', block), ('glued2', glued2)], grid=6, n=100_000)
    assert [row['l'] for row in table] == [1, 2]
    assert [row['name'] for row in table] == ['block', 'glued2']


def test_birkhoff_vector_at_a_fixed_point(anosov_t3):
    vector, converged = birkhoff_vector(anosov_t3, [0.0, 0.0, 0.0], 100, observables_for(anosov_t3))
    np.testing.assert_allclose(vector, [1.0, 0.0, 1.0, 0.0, 1.0, 0.0], atol=1e-12)
    assert converged
    with pytest.raises(ValueError):
        birkhoff_vector(anosov_t3, [0.0, 0.0, 0.0], 1, observables_for(anosov_t3))


def test_vectors_exactly_tol_apart_stay_separate():
    points = np.array([[0.1, 0.1], [0.6, 0.1], [0.9, 0.1]])
    converged = np.ones(3, dtype=bool)
    apart = cluster_basins(points, np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]), converged, tol=0.5)
    assert apart.count == 3
    close = cluster_basins(points, np.array([[0.0, 0.0], [0.25, 0.0], [0.5, 0.0]]), converged, tol=0.5)
    assert close.count == 1


@pytest.mark.parametrize('epsilon', [0.2, 0.1, 0.05])
def test_two_block_f_epsilon_has_two_basins(block, epsilon):
    f = make_f_epsilon(epsilon, block, 'two_blocks')
    basins = basin_map(f, grid=32, n=100_000)
    assert basins.count == 2
    assert basins.converged.all()


def test_three_blocks_give_three_basins_split_at_thirds(block):
    f = make_glued(equal_blocks(block, 3))
    basins = basin_map(f, grid=12, n=100_000)
    assert basins.count == 3
    x = basins.points[:, 0]
    away = basins.converged & (np.min(np.abs(x[:, None] - np.array([0.0, 1 / 3, 2 / 3, 1.0])), axis=1) > 0.05)
    np.testing.assert_array_equal(basins.labels[away], 1 + np.floor(3 * x[away]).astype(int))
