import numpy as np
import pytest

from phdyn.errors import NewtonInverseError
from phdyn.systems import make_f_epsilon, make_mixed_sign, make_product_anosov
from phdyn.torus import BoxDomain, backward_orbit, distance, newton_inverse, orbit, scan_orbit, wrap, wrapped_difference


@pytest.fixture(scope='module')
def shipped(anosov_t3, da, block, glued2):
    return {'anosov_t3': anosov_t3, 'da': da, 'block': block, 'glued': glued2, 'mixed_sign': make_mixed_sign(block),
            'f_epsilon': make_f_epsilon(0.1, block), 'product': make_product_anosov([[3, 2], [1, 1]], [[2, 1], [1, 1]])}


def _points(f, count, seed):
    p = np.random.default_rng(seed).random((count, f.dimension))
    # keep clear of the ends of the interval factor
    p[:, 0] = np.where(f.periodic[0], p[:, 0], 0.01 + 0.98 * p[:, 0])
    return p


def test_wrap_reduces_periodic_coordinates_only():
    np.testing.assert_array_equal(wrap([1.25, -0.25]), [0.25, 0.75])
    np.testing.assert_array_equal(wrap([1.5, 1.5], (False, True)), [1.5, 0.5])
    assert wrap([-1e-20])[0] == 0.0


def test_wrap_rejects_non_finite():
    with pytest.raises(ValueError):
        wrap([np.nan, 0.0])


def test_distance_takes_the_short_way_round():
    assert distance([0.05, 0.0], [0.95, 0.0]) == pytest.approx(0.1)
    assert distance([0.05, 0.0], [0.95, 0.0], (False, True)) == pytest.approx(0.9)


def test_box_domain_wraps():
    V = BoxDomain.create([0.0, 0.0, 0.0], 0.1)
    assert V.contains([0.95, 0.02, 0.99])
    assert not V.contains([0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        BoxDomain.create([0.0, 0.0], 0.0)


def test_newton_inverse_of_da(da):
    rng = np.random.default_rng(0)
    y = rng.random((16, 3))
    x = newton_inverse(da, y)
    assert np.max(distance(da.apply(x), y)) < 1e-10


def test_newton_inverse_reports_failure(da):
    with pytest.raises(NewtonInverseError):
        newton_inverse(da, np.array([0.3, 0.6, 0.9]), max_iter=0)


def test_block_inverse_round_trip(block):
    rng = np.random.default_rng(1)
    p = rng.random((32, 3))
    np.testing.assert_allclose(block.inverse(block.apply(p)), p, atol=1e-12)


def test_orbit_shapes_and_scan_agree(anosov_t3):
    x = np.array([0.1, 0.2, 0.3])
    forward = orbit(anosov_t3, x, 8)
    assert forward.shape == (9, 3)
    assert orbit(anosov_t3, np.stack([x, x]), 8).shape == (9, 2, 3)
    np.testing.assert_allclose(scan_orbit(anosov_t3, x, 8), forward[1:], atol=1e-9)


def test_backward_orbit_is_time_ordered(da):
    x = np.array([0.3, 0.1, 0.7])
    past = backward_orbit(da, x, 4)
    np.testing.assert_array_equal(past[-1], x)
    assert distance(orbit(da, past[0], 4)[-1], x) < 1e-9


def test_apply_and_jacobian_return_writable_arrays(anosov_t3):
    points = np.random.default_rng(2).random((4, 3))
    image = anosov_t3.apply(points)
    image[:, 0] = 0.0
    anosov_t3.jacobian(points[0])[0, 0] = 1.0
    scan_orbit(anosov_t3, points, 2)[0] += 1.0


def test_jacobian_matches_central_differences(shipped):
    h = 1e-6
    for name, f in shipped.items():
        x = _points(f, 20, 3)
        step = h * np.eye(f.dimension)
        columns = [wrapped_difference(f.apply(x + e), f.apply(x - e), f.periodic) / (2 * h) for e in step]
        numeric = np.stack(columns, axis=-1)
        assert np.max(np.abs(numeric - f.jacobian(x))) < 1e-6, name


def test_inverse_round_trip_on_every_shipped_system(shipped):
    for name, f in shipped.items():
        x = _points(f, 1000, 4)
        assert np.max(distance(f.inverse(f.apply(x)), x, f.periodic)) < 1e-9, name


def test_chain_rule(shipped):
    h = 1e-6
    for name in ('anosov_t3', 'product', 'da'):
        f = shipped[name]
        x = _points(f, 10, 5)
        composite = f.jacobian(f.apply(x)) @ f.jacobian(x)
        if name != 'da':
            np.testing.assert_allclose(f.jacobian(x), np.broadcast_to(f.linear_part, composite.shape), atol=1e-12)
            np.testing.assert_allclose(composite, np.broadcast_to(f.linear_part @ f.linear_part, composite.shape),
                                       atol=1e-12)
        columns = [wrapped_difference(f.apply(f.apply(x + e)), f.apply(f.apply(x - e)), f.periodic) / (2 * h)
                   for e in h * np.eye(f.dimension)]
        np.testing.assert_allclose(np.stack(columns, axis=-1), composite, atol=1e-5)
