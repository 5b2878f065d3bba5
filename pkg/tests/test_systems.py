import numpy as np
import pytest

from phdyn.errors import ConstructionError
from phdyn.systems import (BlockSpec, bisect_spectrum, da_center_fixed_points, da_leaf_point, da_params, equal_blocks,
                           l_squeeze, l_squeeze_inverse, linear_anosov_spec, make_da, make_f_epsilon, make_glued,
                           make_mixed_sign, make_product_anosov, make_surrogate_block, periodic_points)
from phdyn.torus import distance


@pytest.mark.parametrize('matrix', [[[1.5, 0], [0, 1]], [[2, 0], [0, 1]], [[0, -1], [1, 0]], [[1, 1], [0, 1]]])
def test_linear_anosov_spec_rejects(matrix):
    with pytest.raises(ConstructionError):
        linear_anosov_spec(matrix)


def test_t3_spectrum(t3_spec):
    np.testing.assert_allclose(t3_spec.eigenvalues, [0.1981, 1.5550, 3.2470], atol=1e-4)
    np.testing.assert_allclose(bisect_spectrum(t3_spec.matrix), np.sort(np.linalg.eigvals(t3_spec.matrix).real),
                               atol=1e-12)


def test_da_defaults(shipped_params):
    assert shipped_params.eta_c == pytest.approx(shipped_params.lambda_c)
    assert shipped_params.L == pytest.approx(0.9)
    assert shipped_params.t0 == pytest.approx(0.5550, abs=1e-4)
    assert shipped_params.nominal_rate > 1.0


@pytest.mark.parametrize('kwargs', [{'t': 1.0}, {'delta': 0.6}, {'beta': 1.0}, {'eta_c': 2.0}, {'p0': (0.5, 0.0, 0.0)}])
def test_da_params_rejects(kwargs):
    with pytest.raises(ConstructionError):
        da_params(**kwargs)


def test_da_is_linear_outside_V(da, anosov_t3, shipped_params):
    x = np.array([12.0, 7.0, 1.0]) / 13.0
    assert not shipped_params.V.contains(x)
    assert distance(da.apply(x), anosov_t3.apply(x)) < 1e-14
    np.testing.assert_allclose(da.jacobian(x), anosov_t3.linear_part, atol=1e-12)


def test_da_pitchfork(shipped_params):
    offsets, derivatives = da_center_fixed_points(shipped_params)
    assert len(offsets) == 3
    assert np.all(np.abs(offsets) < shipped_params.delta)
    assert derivatives[1] < 1.0 < min(derivatives[0], derivatives[2])
    before, slopes = da_center_fixed_points(da_params(t=0.0))
    np.testing.assert_allclose(before, [0.0])
    assert slopes[0] == pytest.approx(shipped_params.lambda_c)


def test_da_leaf_fixed_points_are_fixed(da, shipped_params):
    offsets, _ = da_center_fixed_points(shipped_params)
    for s in offsets:
        p = da_leaf_point(shipped_params, s)
        assert distance(da.apply(p), p) < 1e-8


def test_l_squeeze():
    p = np.array([[0.5, 0.2, 0.3]])
    np.testing.assert_allclose(l_squeeze(0.25, 0.75, p), [[0.875, 0.2, 0.3]])
    np.testing.assert_allclose(l_squeeze_inverse(0.25, 0.75, l_squeeze(0.25, 0.75, p)), p)
    with pytest.raises(ValueError):
        l_squeeze(0.5, 0.6, p)


def test_block_fixes_boundaries(block):
    yz = np.array([[0.1, 0.2], [0.7, 0.4]])
    for side in (0.0, 1.0):
        image = block.apply(np.column_stack([np.full(2, side), yz]))
        np.testing.assert_allclose(image[:, 0], side, atol=1e-12)
    with pytest.raises(ConstructionError):
        make_surrogate_block(0.2, drift=0.5)


def test_glued_is_conjugated_block(block, glued2):
    p = np.array([0.2, 0.3, 0.6])
    expected = l_squeeze(0.5, 0.0, block.apply(l_squeeze_inverse(0.5, 0.0, p)))
    assert distance(glued2.apply(p), expected) < 1e-12
    q = np.array([0.7, 0.3, 0.6])
    expected = l_squeeze(0.5, 0.5, block.apply(l_squeeze_inverse(0.5, 0.5, q)))
    assert distance(glued2.apply(q), expected) < 1e-12
    assert len(glued2.params['blocks']) == 2


def test_glued_rejects_gaps(block):
    with pytest.raises(ConstructionError):
        make_glued([BlockSpec(block_map=block, lam=0.4, tau=0.0), BlockSpec(block_map=block, lam=0.5, tau=0.5)])
    with pytest.raises(ValueError):
        equal_blocks(block, 0)


def test_mixed_sign_layout(block):
    mixed = make_mixed_sign(block)
    assert [b['inverted'] for b in mixed.params['blocks']] == [False, True]
    p = np.array([0.6, 0.2, 0.9])
    assert distance(mixed.inverse(mixed.apply(p)), p) < 1e-10


def test_f_epsilon_literal_region(block):
    f = make_f_epsilon(0.1, block)
    p = np.array([0.95, 0.3, 0.25])
    image = f.apply(p)
    assert image[0] == pytest.approx(0.95, abs=1e-15)
    np.testing.assert_allclose(image[1:], [0.85, 0.55], atol=1e-14)
    assert f.params['epsilon'] == 0.1
    with pytest.raises(ValueError):
        make_f_epsilon(0.1, block, variant='three_blocks')


def test_product_anosov():
    f = make_product_anosov([[3, 2], [1, 1]], [[2, 1], [1, 1]])
    assert f.params['lambda_1'] == pytest.approx(2.0 + np.sqrt(3.0))
    assert f.params['lambda_2'] == pytest.approx((3.0 + np.sqrt(5.0)) / 2.0)
    with pytest.raises(ConstructionError):
        make_product_anosov([[2, 1], [1, 1]], [[3, 2], [1, 1]])


def test_periodic_points(t3_spec):
    period_two = periodic_points(t3_spec.matrix, 2)
    assert len(period_two) == 13
    assert np.min(distance(period_two, np.array([12.0, 7.0, 1.0]) / 13.0)) < 1e-15
    dyadic = periodic_points([[2, 1], [1, 1]], 3)
    assert len(dyadic) == 16
    for q in ([0.5, 0.0], [0.0, 0.5], [0.5, 0.5]):
        assert np.min(distance(dyadic, np.array(q))) == 0.0


def test_da_at_zero_is_the_linear_map(anosov_t3):
    f = make_da(da_params(t=0.0), sweep_grid=0)
    x = np.random.default_rng(6).random((100, 3))
    assert np.max(distance(f.apply(x), anosov_t3.apply(x))) < 1e-14
    np.testing.assert_allclose(f.jacobian(x), np.broadcast_to(anosov_t3.linear_part, (100, 3, 3)), atol=1e-14)
