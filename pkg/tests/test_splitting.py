import numpy as np
import pytest

from phdyn.errors import CertificateError, UnreliableFrameError
from phdyn.splitting import (certify_ph, cumulative_log_singular, estimate_splitting, estimate_unstable,
                             generic_frame, lattice, restricted_rates)
from phdyn.ergodic import central_exponent
from phdyn.systems import make_identity, make_product_anosov, make_surrogate_block


def test_generic_frame_is_orthonormal():
    Q = generic_frame(4, 3)
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-12)


def test_lattice():
    np.testing.assert_allclose(lattice(2, 2), [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])


def test_cumulative_log_singular():
    B = np.broadcast_to(np.diag([2.0, 0.5]), (3, 1, 2, 2))
    log_min, log_max = cumulative_log_singular(B)
    np.testing.assert_allclose(log_min[:, 0], np.log(0.5) * np.arange(1, 4))
    np.testing.assert_allclose(log_max[:, 0], np.log(2.0) * np.arange(1, 4))


def test_linear_splitting_is_the_eigenbasis(anosov_t3, t3_spec):
    frame = estimate_splitting(anosov_t3, [0.3, 0.1, 0.8])
    assert frame.reliable
    for bundle, column in (('s', 0), ('c', 1), ('u', 2)):
        assert abs(frame.basis(bundle)[:, 0] @ t3_spec.eigenbasis[:, column]) > 1 - 1e-9
    u = estimate_unstable(anosov_t3, [0.3, 0.1, 0.8])
    np.testing.assert_allclose(u[:, 0], t3_spec.eigenbasis[:, 2], atol=1e-9)


def test_da_center_direction_is_constant(da, shipped_params):
    v_c = shipped_params.base.eigenbasis[:, 1]
    for x in ([0.02, 0.01, 0.03], [0.5, 0.2, 0.7]):
        frame = estimate_splitting(da, x)
        assert frame.reliable
        assert abs(frame.basis_c[:, 0] @ v_c) > 1 - 1e-9


def test_restricted_rates_of_linear_map(anosov_t3, t3_spec):
    frame = estimate_splitting(anosov_t3, [0.4, 0.6, 0.2])
    rates = restricted_rates(anosov_t3, frame, 5)
    for bundle, eigenvalue in zip('scu', t3_spec.eigenvalues):
        np.testing.assert_allclose(rates[bundle], (eigenvalue ** 5, eigenvalue ** 5), rtol=1e-9)


def test_restricted_rates_refuses_unreliable_frames(anosov_t3):
    frame = estimate_splitting(anosov_t3, [0.4, 0.6, 0.2]).replace(reliable=False, residual=0.5)
    with pytest.raises(UnreliableFrameError):
        restricted_rates(anosov_t3, frame, 5)


def test_certificate_of_linear_map(anosov_t3, t3_spec):
    certificate = certify_ph(anosov_t3, grid=3, n=5)
    lam_s, lam_c, lam_u = t3_spec.eigenvalues
    np.testing.assert_allclose([certificate.lambda1, certificate.mu1], [lam_s, lam_s], atol=1e-6)
    np.testing.assert_allclose([certificate.lambda2, certificate.mu2], [lam_c, lam_c], atol=1e-6)
    np.testing.assert_allclose([certificate.lambda3, certificate.mu3], [lam_u, lam_u], atol=1e-6)
    assert certificate.C == pytest.approx(1.0, abs=1e-6)
    assert certificate.n_checked == 27


def test_certificate_of_da(da, shipped_params):
    certificate = certify_ph(da, grid=4, n=5)
    assert certificate.mu1 < 1.0 / 3.0
    assert certificate.lambda3 > 3.0
    assert certificate.lambda2 >= 1.0 - shipped_params.beta


def test_identity_is_refused():
    with pytest.raises(CertificateError) as info:
        certify_ph(make_identity(3), grid=2, n=3)
    assert info.value.rates['mu1'] == pytest.approx(1.0)


def test_product_center_is_the_second_unstable_direction():
    f = make_product_anosov([[3, 2], [1, 1]], [[2, 1], [1, 1]])
    x = [0.1, 0.7, 0.3, 0.55]
    series = central_exponent(f, x, 50)
    np.testing.assert_allclose(series.values, np.log(f.params['lambda_2']), atol=1e-9)
    frame = estimate_splitting(f, x)
    assert frame.reliable
    e_c = np.array(f.params['E_c']) / np.linalg.norm(f.params['E_c'])
    assert abs(float(frame.basis_c[:, 0] @ e_c)) == pytest.approx(1.0, abs=1e-8)


def test_flat_block_has_a_neutral_center():
    f = make_surrogate_block(0.0)
    series = central_exponent(f, [0.3, 0.2, 0.7], 50)
    np.testing.assert_allclose(series.values, 0.0, atol=1e-9)
    certificate = certify_ph(f, grid=3, n=5)
    assert certificate.lambda2 == pytest.approx(1.0, abs=1e-9)
    assert certificate.mu2 == pytest.approx(1.0, abs=1e-9)
