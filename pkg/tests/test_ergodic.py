import numpy as np
import pytest
import jax

from phdyn.ergodic import (LnResult, central_exponent, central_exponents, center_log_series, da_center_bound,
                           ln_functional, lyapunov_spectrum, nue_statistic, occupation, occupation_batch, search_n0,
                           seq_limsup_bound, superadditivity_violations, tail_window)
from phdyn.measures import grow_usegment, sample_on_segment, uniform_measure

PERIOD_TWO = np.array([12.0, 7.0, 1.0]) / 13.0


def test_tail_window():
    assert tail_window(100) == 25
    assert tail_window(1) == 1


def test_linear_center_exponent(anosov_t3, t3_spec):
    series = central_exponent(anosov_t3, [0.2, 0.7, 0.1], 50)
    assert series.cut_reason is None
    np.testing.assert_allclose(series.values, np.log(t3_spec.eigenvalues[1]), atol=1e-9)
    assert series.liminf == pytest.approx(series.limsup)
    exponents = central_exponents(anosov_t3, np.random.default_rng(0).random((5, 3)), 30, chunk_size=2)
    np.testing.assert_allclose(exponents, np.log(t3_spec.eigenvalues[1]), atol=1e-9)


def test_linear_nue(anosov_t3, t3_spec):
    stat = nue_statistic(anosov_t3, [0.2, 0.7, 0.1], 40, c0=0.2)
    np.testing.assert_allclose(stat.sums, -np.log(t3_spec.eigenvalues[1]), atol=1e-9)
    assert stat.verdict == 'NUE-pass'
    assert nue_statistic(anosov_t3, [0.2, 0.7, 0.1], 40, c0=0.5).verdict == 'fail'
    with pytest.raises(ValueError):
        nue_statistic(anosov_t3, [0.2, 0.7, 0.1], 40, c0=0.0)


def test_occupation_of_fixed_and_periodic_points(da, shipped_params):
    V = shipped_params.V
    inside = occupation(da, shipped_params.p0, V, 20, alpha=0.3)
    assert np.all(inside.fractions == 1.0) and inside.members.all()
    outside = occupation(da, PERIOD_TWO, V, 20, alpha=0.3)
    assert np.all(outside.fractions == 0.0)
    batch = occupation_batch(da, np.stack([np.asarray(shipped_params.p0), PERIOD_TWO]), V, 20, 0.3, k_min=10)
    np.testing.assert_array_equal(batch['visits'], [20, 0])
    np.testing.assert_array_equal(batch['late_member'], [True, False])


def test_center_expansion_outside_V(da, shipped_params):
    logs, residual = center_log_series(da, PERIOD_TWO, 20)
    assert residual.max() < 1e-6
    assert logs[-1, 0] >= 20 * np.log(shipped_params.eta_c) - 1e-9


def test_da_center_bound(da, shipped_params):
    points = np.stack([np.asarray(shipped_params.p0), PERIOD_TWO, [0.05, 0.02, 0.01], [0.4, 0.3, 0.9]])
    result = da_center_bound(da, shipped_params, points, 20)
    assert result['holds'].all()
    assert result['exponent'][0] == pytest.approx(np.log(shipped_params.lambda_c - shipped_params.t), abs=1e-9)


def test_sequence_lemma():
    alternating = seq_limsup_bound((-1.0) ** np.arange(600), 2)
    assert alternating.holds
    assert alternating.lhs == pytest.approx(0.0)
    assert alternating.rhs == pytest.approx(1.0)
    assert seq_limsup_bound(np.arange(7.0), 2).truncated == 1
    rng = np.random.default_rng(3)
    for N in (2, 3, 5):
        assert seq_limsup_bound(rng.normal(size=400), N).holds
    with pytest.raises(ValueError):
        seq_limsup_bound(np.ones(3), 0)
    with pytest.raises(ValueError):
        seq_limsup_bound(np.ones(3), 5)


def test_lyapunov_spectrum(anosov_t3, t3_spec):
    exponents = lyapunov_spectrum(anosov_t3, [0.3, 0.5, 0.7], 2000)
    np.testing.assert_allclose(exponents, np.log(t3_spec.eigenvalues[::-1]), atol=1e-6)


def test_ln_is_additive_for_linear_map(anosov_t3, t3_spec):
    result = ln_functional(anosov_t3, uniform_measure(anosov_t3, 8), 20)
    np.testing.assert_allclose(result.values, np.arange(1, 21) * np.log(t3_spec.eigenvalues[1]), atol=1e-8)
    assert result.warnings == ()
    assert superadditivity_violations(result) == []
    assert result.center_rate == pytest.approx(np.log(t3_spec.eigenvalues[1]))


def test_superadditivity_violations_detected():
    flat = LnResult(values=np.ones(20), errors=np.zeros(20), invariance_defect=0.0)
    assert len(superadditivity_violations(flat)) == 100
    with pytest.raises(ValueError):
        superadditivity_violations(LnResult(values=np.ones(5), errors=np.zeros(5), invariance_defect=0.0))


def test_search_n0(anosov_t3):
    n0, table = search_n0(anosov_t3, [uniform_measure(anosov_t3, 8)], max_n=3)
    assert n0 == 1
    assert table.shape == (1, 3)


def test_da_passes_nue_on_a_u_segment(da, shipped_params):
    segment = grow_usegment(da, [0.37, 0.61, 0.12], shipped_params.L)
    points = sample_on_segment(segment, 20, jax.random.PRNGKey(3))
    c0 = 0.5 * np.log(shipped_params.nominal_rate)
    verdicts = [nue_statistic(da, p, 200, c0).verdict for p in points]
    assert verdicts.count('NUE-pass') >= 18
