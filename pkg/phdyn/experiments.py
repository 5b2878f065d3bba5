"""Task runners: each takes a resolved config and returns a summary dict plus the artifacts to write."""

from functools import partial
from typing import Callable
import logging
import time

import numpy as np
import jax

from phdyn.basins import basin_map, basin_openness_probe, label_invariance, observables_for, uniqueness_scan
from phdyn.config import build_system, da_config_params
from phdyn.ergodic import (central_exponent, central_exponents, cu_conorm_logs, da_center_bound, ln_functional,
                           lyapunov_spectrum, occupation, occupation_batch, search_n0,
                           seq_limsup_bound, superadditivity_violations, tail_window)
from phdyn.errors import ConfigError
from phdyn.io import Artifact
from phdyn.measures import (cesaro_defect, empirical_measure, fraction_in, grow_usegment, iterate_subdivide,
                            measure_distance, pesin_sinai_with_report, sample_on_segment, uniform_measure)
from phdyn.parallel import chunked, fan_out
from phdyn.splitting import certify_ph
from phdyn.systems import DHP_PERIODIC, bisect_spectrum, da_center_fixed_points, da_leaf_point, make_linear, periodic_points
from phdyn.torus import DynSystem, distance

logger = logging.getLogger(__name__)

LN_PAIRS = 10
SPECTRUM_TOL = 1e-6
FIXED_POINT_TOL = 1e-8
NUE_ZERO_TOL = 1e-9
DEFAULT_C0 = 0.2
LINEAR_KINDS = ('linear', 'anosov_t3', 'product')


def _single_system(c: dict) -> tuple[dict, DynSystem]:
    if 'system' not in c:
        raise ConfigError(f"Task {c['task']['name']} needs a [system] table, not a [[family]]")
    return c['system'], build_system(c['system'])


def _members(c: dict) -> list[tuple[str, dict, DynSystem]]:
    specs = c['family'] if 'family' in c else [c['system']]
    return [(spec['name'] or f"{spec['kind']}_{i}", spec, build_system(spec)) for i, spec in enumerate(specs)]


def _require_kind(spec: dict, kinds: tuple[str, ...], task: str) -> None:
    if spec['kind'] not in kinds:
        raise ConfigError(f"Task {task} needs a system of kind {' or '.join(kinds)}, got {spec['kind']}")


def _uniform_points(f: DynSystem, count: int, key: jax.Array) -> np.ndarray:
    return np.array(jax.random.uniform(key, (count, f.dimension), dtype=np.float64))


def _segment_length(spec: dict, task: dict) -> float:
    if task['segment_length'] is not None:
        return float(task['segment_length'])
    if spec['kind'] == 'da':
        return da_config_params(spec).L
    return 0.5


def _segment(f: DynSystem, spec: dict, task: dict, key: jax.Array):
    """u-segment through a random point."""
    return grow_usegment(f, _uniform_points(f, 1, key)[0], _segment_length(spec, task), n_conv=task['n_conv'])


def _segment_points(f: DynSystem, spec: dict, task: dict, key: jax.Array) -> np.ndarray:
    """Points drawn by arc length on a u-segment through a random point."""
    center_key, sample_key = jax.random.split(key)
    return sample_on_segment(_segment(f, spec, task, center_key), task['samples'], sample_key)


def _coordinates(d: int) -> list[str]:
    return [f"x{i}" for i in range(d)]


# --- center exponents and NUE ----------------------------------------------------------------------

def _block_exponents(blocks: list[dict], points: np.ndarray, exponents: np.ndarray) -> list[dict]:
    """Mean center exponent and its sign over the sample points of every block range."""
    starts = np.array([b['tau'] for b in blocks])
    index = np.clip(np.searchsorted(starts, points[:, 0], side='right') - 1, 0, len(blocks) - 1)
    table = []
    for i, b in enumerate(blocks):
        inside = exponents[index == i]
        mean = float(inside.mean()) if len(inside) else None
        table.append({'tau': b['tau'], 'lam': b['lam'], 'inverted': b['inverted'], 'points': int(len(inside)),
                      'mean_exponent': mean, 'sign': int(np.sign(mean)) if mean is not None else None})
    return table


def run_exponents(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, f = _single_system(c)
    t, r = c['task'], c['run']
    points = _uniform_points(f, t['samples'], key)
    exponents = central_exponents(f, points, t['horizon'], t['n_conv'], r['workers'], r['chunk_size'], r['show_progress'])
    series = central_exponent(f, points[0], t['horizon'], t['n_conv'])
    summary['metrics'] = {
        'mean': float(exponents.mean()), 'min': float(exponents.min()), 'max': float(exponents.max()),
        'first_point': {'last': series.last, 'liminf': series.liminf, 'limsup': series.limsup,
                        'cut_reason': series.cut_reason},
    }
    if 'blocks' in f.params:
        summary['metrics']['blocks'] = _block_exponents(f.params['blocks'], points, exponents)
    if series.cut_reason is not None:
        summary['flags'].append(f"exponent series cut: {series.cut_reason}")
    rows = [list(p) + [e] for p, e in zip(points, exponents)]
    return [Artifact('exponents.csv', 'csv', rows, tuple(_coordinates(f.dimension)) + ('exponent',))]


def _nue_chunk(f: DynSystem, chunk: np.ndarray, horizon: int, n_conv: int) -> np.ndarray:
    return -cu_conorm_logs(f, chunk, horizon, n_conv)


def _nue_sums(f: DynSystem, points: np.ndarray, c: dict) -> np.ndarray:
    """Birkhoff averages S_n for n = 1..horizon, shape (horizon, P)."""
    t, r = c['task'], c['run']
    results = fan_out(partial(_nue_chunk, horizon=t['horizon'], n_conv=t['n_conv']), f,
                      chunked(points, r['chunk_size']), r['workers'], tqdm_desc="nue" if r['show_progress'] else None)
    return np.cumsum(np.concatenate(results, axis=1), axis=0) / np.arange(1, t['horizon'] + 1)[:, None]


def _verdicts(sums: np.ndarray, c0: float) -> tuple[np.ndarray, np.ndarray, list[str]]:
    window = tail_window(len(sums))
    tail_max, tail_min = sums[-window:].max(axis=0), sums[-window:].min(axis=0)
    verdicts = ['NUE-pass' if hi <= -c0 else 'wNUE-pass-only' if lo <= -c0 else 'fail'
                for hi, lo in zip(tail_max, tail_min)]
    return tail_max, tail_min, verdicts


def run_nue(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, f = _single_system(c)
    t = c['task']
    if spec['kind'] == 'da':
        c0 = t['c0'] if t['c0'] is not None else 0.5 * float(np.log(da_config_params(spec).nominal_rate))
        points = _segment_points(f, spec, t, key)
    else:
        c0 = t['c0'] if t['c0'] is not None else DEFAULT_C0
        points = _uniform_points(f, t['samples'], key)
    sums = _nue_sums(f, points, c)
    tail_max, tail_min, verdicts = _verdicts(sums, c0)
    summary['metrics'] = {
        'c0': c0,
        'verdicts': {v: verdicts.count(v) for v in ('NUE-pass', 'wNUE-pass-only', 'fail')},
        'mean_final_sum': float(sums[-1].mean()),
    }
    rows = [list(p) + [s, hi, lo, v] for p, s, hi, lo, v in zip(points, sums[-1], tail_max, tail_min, verdicts)]
    header = tuple(_coordinates(f.dimension)) + ('S_n', 'tail_max', 'tail_min', 'verdict')
    return [Artifact('nue.csv', 'csv', rows, header)]


# --- DA occupation and the center mechanism -----------------------------------------------------------

def run_occupation(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, f = _single_system(c)
    _require_kind(spec, ('da',), 'occupation')
    t = c['task']
    params = da_config_params(spec)
    alpha = t['alpha'] if t['alpha'] is not None else params.alpha
    k_min = t['k_min'] if t['k_min'] is not None else t['horizon'] // 2
    points = _segment_points(f, spec, t, key)
    stats = occupation_batch(f, points, params.V, t['horizon'], alpha, k_min)
    fixed = occupation(f, params.p0, params.V, t['horizon'], alpha)
    late_fraction = float(stats['late_member'].mean())
    summary['metrics'] = {
        'alpha': alpha, 'k_min': k_min,
        'late_member_fraction': late_fraction,
        'below_one_percent': late_fraction < 0.01,
        'mean_visit_fraction': float(stats['visits'].mean() / t['horizon']),
        'p0_visit_fraction': float(fixed.fractions[-1]),
    }
    rows = [list(p) + [v, m, x] for p, v, m, x in
            zip(points, stats['visits'], stats['late_member'], stats['max_late_fraction'])]
    header = tuple(_coordinates(f.dimension)) + ('visits', 'late_member', 'max_late_fraction')
    return [Artifact('occupation.csv', 'csv', rows, header)]


def _mechanism_chunk(f: DynSystem, chunk: np.ndarray, params, horizon: int, n_conv: int) -> dict:
    return da_center_bound(f, params, chunk, horizon, n_conv)


def run_mechanism(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, f = _single_system(c)
    _require_kind(spec, ('da',), 'mechanism')
    t, r = c['task'], c['run']
    params = da_config_params(spec)
    alpha = t['alpha'] if t['alpha'] is not None else params.alpha
    k_min = t['k_min'] if t['k_min'] is not None else t['horizon'] // 2
    points = _segment_points(f, spec, t, key)
    stats = occupation_batch(f, points, params.V, t['horizon'], alpha, k_min)
    results = fan_out(partial(_mechanism_chunk, params=params, horizon=t['horizon'], n_conv=t['n_conv']), f,
                      chunked(points, min(r['chunk_size'], 128)), r['workers'],
                      tqdm_desc="mechanism" if r['show_progress'] else None)
    holds = np.concatenate([b['holds'] for b in results])
    margin = np.concatenate([b['margin'] for b in results])
    exponent = np.concatenate([b['exponent'] for b in results])
    outside = ~stats['late_member']
    log_rate, log_effective = float(np.log(params.nominal_rate)), float(np.log(params.effective_rate))
    summary['metrics'] = {
        'log_rate': log_rate, 'log_effective_rate': log_effective,
        'late_member_fraction': float(stats['late_member'].mean()),
        'outside_fraction': float(outside.mean()),
        'min_margin': float(margin.min()),
        'mean_exponent': float(exponent.mean()),
        'outside_above_rate': float((exponent[outside] >= log_rate).mean()) if outside.any() else None,
    }
    summary['checks']['center_bound'] = bool(holds.all())
    summary['checks']['outside_above_effective_rate'] = bool(np.all(exponent[outside] >= log_effective - 1e-6))
    rows = [list(p) + [v, e, m] for p, v, e, m in zip(points, stats['visits'], exponent, margin)]
    header = tuple(_coordinates(f.dimension)) + ('visits', 'exponent', 'margin')
    return [Artifact('mechanism.csv', 'csv', rows, header)]


def run_subdivision(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    """Share of each subdivided image f(gamma) that lies on pieces meeting V, against tau0."""
    spec, f = _single_system(c)
    _require_kind(spec, ('da',), 'subdivision')
    t = c['task']
    params = da_config_params(spec)
    L = t['L'] if t['L'] is not None else params.L
    rows, shares = [], []
    for i, segment_key in enumerate(jax.random.split(key, t['segments'])):
        x0 = _uniform_points(f, 1, segment_key)[0]
        gamma = grow_usegment(f, x0, L, n_conv=t['n_conv'])
        pieces, report = iterate_subdivide(f, gamma, min(L, gamma.length))
        share = fraction_in(pieces, params.V)
        shares.append(share)
        rows.append([i, *x0, gamma.length, report['image_length'], report['pieces'], share])
    shares = np.array(shares)
    holds = bool(np.all(shares <= params.tau0))
    summary['metrics'] = {
        'tau0': params.tau0, 'L': L, 'delta': params.delta,
        'max_fraction': float(shares.max()),
        'mean_fraction': float(shares.mean()),
        'share_within_tau0': float((shares <= params.tau0).mean()),
        'tau0_verdict': 'holds' if holds else 'fails',
    }
    if not holds:
        logger.warning(f"Pieces meeting V carry up to {shares.max():.3f} of f(gamma), above tau0 = {params.tau0}")
    header = ('segment',) + tuple(_coordinates(f.dimension)) + ('length', 'image_length', 'pieces', 'fraction_in_V')
    return [Artifact('subdivision.csv', 'csv', rows, header)]


# --- partial hyperbolicity certificate ----------------------------------------------------------

def run_certify(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, f = _single_system(c)
    t, r = c['task'], c['run']
    certificate = certify_ph(f, t['grid'], t['n'], t['n_conv'], r['workers'], r['chunk_size'], r['show_progress'])
    summary['metrics'] = {'rates': certificate.to_dict()}
    if spec['kind'] == 'da':
        params = da_config_params(spec)
        summary['checks']['center_floor'] = certificate.lambda2 >= 1.0 - params.beta
        summary['checks']['stable_below_third'] = certificate.mu1 < 1.0 / 3.0
        summary['checks']['unstable_above_three'] = certificate.lambda3 > 3.0
    return [Artifact('certificate.json', 'json', certificate.to_dict())]


# --- sequence lemma ------------------------------------------------------------------------------

def run_seqlemma(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    t = c['task']
    if t['max_length'] < 2 * max(t['N']):
        raise ConfigError(f"max_length = {t['max_length']} is shorter than twice the largest N {max(t['N'])}")
    rows = []
    for i in range(t['sequences']):
        key, length_key, mean_key, values_key = jax.random.split(key, 4)
        N = t['N'][i % len(t['N'])]
        length = int(jax.random.randint(length_key, (), 2 * N, t['max_length'] + 1))
        mean = float(jax.random.uniform(mean_key, (), minval=-1.0, maxval=1.0))
        bound = seq_limsup_bound(mean + np.asarray(jax.random.normal(values_key, (length,), dtype=np.float64)), N)
        rows.append([i, N, length, bound.lhs, bound.rhs, bound.holds, bound.truncated])
    alternating = seq_limsup_bound((-1.0) ** np.arange(t['max_length']), 2)
    rows.append([t['sequences'], 2, t['max_length'], alternating.lhs, alternating.rhs, alternating.holds,
                 alternating.truncated])
    failures = [row[0] for row in rows if not row[5]]
    summary['metrics'] = {'sequences': len(rows), 'violations': len(failures),
                          'alternating': {'lhs': alternating.lhs, 'rhs': alternating.rhs}}
    summary['checks']['bound_holds'] = not failures
    header = ('index', 'N', 'length', 'lhs', 'rhs', 'holds', 'truncated')
    return [Artifact('seqlemma.csv', 'csv', rows, header)]


# --- invariant measures --------------------------------------------------------------------------

def _gibbs(f: DynSystem, spec: dict, task: dict, key: jax.Array):
    """Pesin-Sinai approximation from a u-segment through a random point."""
    segment_key, seed_key = jax.random.split(key)
    D = _segment(f, spec, task, segment_key)
    seed = int(jax.random.randint(seed_key, (), 0, 2 ** 31 - 1))
    logger.info(f"Pesin-Sinai average of {f.name} from a u-segment of length {D.length:.4f}, n = {task['n']}")
    return pesin_sinai_with_report(f, D, task['n'], task['grid'], task['L'], task['max_pieces'], seed)


def _flag_expansions(summary: dict, report: dict) -> None:
    if report['flagged_expansions']:
        summary['flags'].append(f"{report['flagged_expansions']} u-segment expansions below 3 "
                                f"(smallest {report['min_expansion']:.4f})")


def run_gibbs(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, f = _single_system(c)
    t = c['task']
    mu, report = _gibbs(f, spec, t, key)
    summary['metrics'] = {
        'tv_to_uniform': measure_distance(mu, uniform_measure(f, t['grid'])),
        'invariance_defect': cesaro_defect(f, mu),
        **report,
    }
    if spec['kind'] == 'da':
        params = da_config_params(spec)
        centers, weights = mu.support()
        summary['metrics']['mass_in_V'] = float(weights[params.V.contains(centers)].sum())
    _flag_expansions(summary, report)
    return [Artifact('gibbs.bin', 'hist', mu)]


def run_pesin(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, f = _single_system(c)
    t = c['task']
    gibbs_key, orbit_key = jax.random.split(key)
    mu, report = _gibbs(f, spec, t, gibbs_key)
    empirical = empirical_measure(f, _uniform_points(f, 1, orbit_key)[0], t['orbit_length'], t['grid'])
    tv = measure_distance(mu, uniform_measure(f, t['grid']))
    defect = cesaro_defect(f, mu)
    summary['metrics'] = {
        'tv_to_uniform': tv,
        'invariance_defect': defect,
        'tv_to_empirical': measure_distance(mu, empirical),
        'empirical_tv_to_uniform': measure_distance(empirical, uniform_measure(f, t['grid'])),
        **report,
    }
    if spec['kind'] in LINEAR_KINDS:
        summary['checks']['close_to_uniform'] = tv < 0.05
        summary['checks']['invariant'] = defect < 0.05
    _flag_expansions(summary, report)
    return [Artifact('pesin_sinai.bin', 'hist', mu), Artifact('empirical.bin', 'hist', empirical)]


def run_ln(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    t, r = c['task'], c['run']
    members = _members(c)
    rows, table = [], {}
    for (name, spec, f), member_key in zip(members, jax.random.split(key, len(members))):
        tested = {'lebesgue': uniform_measure(f, t['grid'])}
        if spec['kind'] == 'da':
            tested = {'pesin_sinai': _gibbs(f, spec, t, member_key)[0], **tested}
        mu = next(iter(tested.values()))
        result = ln_functional(f, mu, 2 * LN_PAIRS, t['n_conv'], workers=r['workers'], chunk_size=r['chunk_size'])
        violations = superadditivity_violations(result, LN_PAIRS)
        positive = np.nonzero(result.values > 0)[0]
        n0, _ = search_n0(f, list(tested.values()), t['max_n'], t['n_conv'], workers=r['workers'])
        table[name] = {
            'measure': next(iter(tested)),
            'center_rate': result.center_rate,
            'invariance_defect': result.invariance_defect,
            'violations': violations,
            'first_positive_n': int(positive[0]) + 1 if len(positive) else None,
            'n0': n0,
            'n0_measures': list(tested),
            'max_n': t['max_n'],
            'warnings': list(result.warnings),
        }
        summary['checks'][f'superadditive_{name}'] = not violations
        rows += [[name, k + 1, v, e] for k, (v, e) in enumerate(zip(result.values, result.errors))]
    summary['metrics'] = table
    return [Artifact('ln.csv', 'csv', rows, ('system', 'n', 'L_n', 'error'))]


# --- basins --------------------------------------------------------------------------------------

def run_basins(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, f = _single_system(c)
    t, r = c['task'], c['run']
    basins = basin_map(f, t['grid'], t['horizon'], r['seed'], t['tol'], t['eps_conv'], r['workers'], r['chunk_size'],
                       r['show_progress'])
    probe = basin_openness_probe(f, basins, t['samples'], t['horizon'], r['seed'],
                                 min_interface_distance=1.0 / t['grid'])
    summary['metrics'] = {
        'l': basins.count,
        'unconverged': int((~basins.converged).sum()),
        'openness': probe,
        'label_invariance': label_invariance(f, basins, t['horizon']),
    }
    if t['expect_l'] is not None:
        summary['checks']['expected_l'] = basins.count == t['expect_l']
    header = tuple(_coordinates(f.dimension)) + observables_for(f).names + ('label',)
    return [Artifact('basins.ppm', 'ppm', basins.labels.reshape(basins.shape)),
            Artifact('basins.csv', 'csv', basins.rows(), header)]


def run_scan(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    if 'family' not in c:
        raise ConfigError("Task scan needs a [[family]] of systems")
    t, r = c['task'], c['run']
    family = [(name, f) for name, _, f in _members(c)]
    table = uniqueness_scan(family, t['grid'], t['horizon'], r['seed'], t['tol'], r['workers'])
    summary['metrics'] = {'l': {row['name']: row['l'] for row in table},
                          'unconverged': {row['name']: row['unconverged'] for row in table}}
    expect = t['expect_l']
    if expect is not None:
        expect = expect if isinstance(expect, list) else [expect] * len(table)
        if len(expect) != len(table):
            raise ConfigError(f"expect_l lists {len(expect)} counts for {len(table)} family members")
        for row, l in zip(table, expect):
            summary['checks'][f"expected_l_{row['name']}"] = row['l'] == l
    rows = [[row['name'], row['l'], row['unconverged']] for row in table]
    return [Artifact('scan.csv', 'csv', rows, ('system', 'l', 'unconverged'))]


# --- exact checks on the linear and DA constructions -------------------------------------------------

def run_spectrum(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, f = _single_system(c)
    _require_kind(spec, LINEAR_KINDS, 'spectrum')
    t = c['task']
    exponents = lyapunov_spectrum(f, _uniform_points(f, 1, key)[0], t['horizon'], t['n_conv'])
    roots = bisect_spectrum(f.linear_part)
    expected = np.sort(np.log(np.abs(roots)))[::-1]
    isolated = len(roots) == f.dimension
    error = float(np.max(np.abs(exponents - expected))) if isolated else float('inf')
    summary['metrics'] = {'exponents': exponents, 'expected': expected, 'max_error': error}
    summary['checks']['spectrum_isolated'] = isolated
    summary['checks']['exponents_match'] = error < SPECTRUM_TOL
    if spec['kind'] == 'anosov_t3' and isolated:
        lam_s, lam_c, lam_u = roots
        summary['checks']['eigen_chain'] = bool(lam_s < 1 / 3 < 1 < lam_c < 3 < lam_u)
    rows = [[i, e, x] for i, (e, x) in enumerate(zip(exponents, expected))] if isolated else []
    return [Artifact('spectrum.csv', 'csv', rows, ('index', 'exponent', 'log_eigenvalue'))]


def run_fixedpoints(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, f = _single_system(c)
    _require_kind(spec, ('da',), 'fixedpoints')
    params = da_config_params(spec)
    offsets, derivatives = da_center_fixed_points(params)
    points = np.array([da_leaf_point(params, s) for s in offsets])
    residual = np.atleast_1d(distance(f.apply(points), points, f.periodic))
    zero = int(np.argmin(np.abs(offsets)))
    outer = np.delete(derivatives, zero)
    summary['metrics'] = {'t': params.t, 't0': params.t0, 'offsets': offsets, 'derivatives': derivatives,
                          'max_residual': float(residual.max())}
    summary['checks']['three_fixed_points'] = len(offsets) == 3
    summary['checks']['inside_V'] = bool(np.all(np.abs(offsets) < params.delta))
    summary['checks']['center_contracting_at_p0'] = bool(derivatives[zero] < 1.0)
    summary['checks']['center_expanding_off_p0'] = bool(len(outer) > 0 and np.all(outer > 1.0))
    summary['checks']['located'] = bool(residual.max() < FIXED_POINT_TOL)
    rows = [[s] + list(p) + [dh, res] for s, p, dh, res in zip(offsets, points, derivatives, residual)]
    header = ('s',) + tuple(_coordinates(f.dimension)) + ('derivative', 'residual')
    return [Artifact('fixedpoints.csv', 'csv', rows, header)]


def _fiber_orbit(matrix: list, start: tuple[float, ...], max_period: int = 64) -> np.ndarray:
    g = make_linear(matrix, name='fiber')
    orbit = [np.asarray(start, dtype=np.float64)]
    point = g.apply(orbit[0])
    while distance(point, orbit[0]) > 1e-12:
        if len(orbit) == max_period:
            raise ValueError(f"{list(start)} is not periodic with period <= {max_period}")
        orbit.append(point)
        point = g.apply(point)
    return np.array(orbit)


def run_product(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, f = _single_system(c)
    _require_kind(spec, ('product',), 'product')
    t, r = c['task'], c['run']
    points_key, fiber_key = jax.random.split(key)
    log_lam2 = float(np.log(f.params['lambda_2']))
    points = _uniform_points(f, t['samples'], points_key)
    exponents = central_exponents(f, points, t['horizon'], t['n_conv'], r['workers'], r['chunk_size'], r['show_progress'])

    orbit = _fiber_orbit(spec['A2'], (0.5, 0.0))
    candidates = periodic_points(spec['A2'], len(orbit))
    on_lattice = all(np.min(distance(candidates, q)) < 1e-12 for q in orbit)
    x = np.concatenate([_uniform_points(f, 1, fiber_key)[0, :2], orbit[0]])
    mu = empirical_measure(f, x, t['orbit_length'], t['grid'])
    fiber_mass = mu.weights.sum(axis=(0, 1))
    support = {tuple(int(i) for i in cell) for cell in np.argwhere(fiber_mass > 0)}
    expected = {tuple(int(i) for i in np.floor(q * t['grid']).astype(int) % t['grid']) for q in orbit}
    series = central_exponent(f, x, t['horizon'], t['n_conv'])

    summary['metrics'] = {
        'log_lambda_2': log_lam2,
        'max_exponent_error': float(np.max(np.abs(exponents - log_lam2))),
        'fiber_orbit': orbit,
        'fiber_support': sorted(support),
        'exponent_on_fiber_orbit': series.last,
    }
    summary['checks']['center_exponent'] = summary['metrics']['max_exponent_error'] < SPECTRUM_TOL
    summary['checks']['fiber_orbit_periodic'] = on_lattice
    summary['checks']['fiber_support'] = support == expected
    return [Artifact('product.bin', 'hist', mu)]


def run_fepsilon(c: dict, summary: dict, key: jax.Array) -> list[Artifact]:
    spec, _ = _single_system(c)
    _require_kind(spec, ('f_epsilon',), 'fepsilon')
    t = c['task']
    c0 = t['c0'] if t['c0'] is not None else DEFAULT_C0
    block = build_system({'kind': 'block', 'name': None, 'kappa': spec['kappa'], 'drift': spec['drift'],
                          'matrix': spec['matrix']})
    axis = (np.arange(t['sup_grid']) + 0.5) / t['sup_grid']
    xs, zs = np.meshgrid(axis, axis, indexing='ij')
    probe = np.column_stack([xs.ravel(), np.zeros(xs.size), zs.ravel()])
    target = block.apply(probe)

    epsilons = sorted(t['epsilons'], reverse=True)
    rows, sups = [], []
    for epsilon, epsilon_key in zip(epsilons, jax.random.split(key, len(epsilons))):
        f = build_system({**spec, 'epsilon': epsilon})
        region = _uniform_points(f, t['samples'], epsilon_key)
        region[:, 0] = 1.0 - epsilon + epsilon * region[:, 0]
        sums = _nue_sums(f, region, c)
        _, _, verdicts = _verdicts(sums, c0)
        sup = float(np.max(distance(f.apply(probe), target, DHP_PERIODIC)))
        sups.append(sup)
        rows.append([epsilon, float(np.abs(sums).max()), verdicts.count('fail'), len(verdicts), sup])
        logger.info(f"epsilon = {epsilon}: max |S_n| = {rows[-1][1]:.3e}, sup distance to the block = {sup:.6f}")

    summary['metrics'] = {'c0': c0, 'epsilons': epsilons, 'sup_distance': sups,
                          'max_abs_sum': {str(row[0]): row[1] for row in rows}}
    if spec['variant'] == 'single':
        summary['checks']['zero_sums'] = all(row[1] <= NUE_ZERO_TOL for row in rows)
        summary['checks']['nue_fails'] = all(row[2] == row[3] for row in rows)
        summary['checks']['sup_distance_decreasing'] = bool(np.all(np.diff(sups) < 0))
    return [Artifact('fepsilon.csv', 'csv', rows, ('epsilon', 'max_abs_sum', 'fail', 'points', 'sup_distance'))]


RUNNERS: dict[str, Callable[[dict, dict, jax.Array], list[Artifact]]] = {
    'exponents': run_exponents,
    'nue': run_nue,
    'occupation': run_occupation,
    'mechanism': run_mechanism,
    'subdivision': run_subdivision,
    'certify': run_certify,
    'seqlemma': run_seqlemma,
    'gibbs': run_gibbs,
    'pesin': run_pesin,
    'ln': run_ln,
    'basins': run_basins,
    'scan': run_scan,
    'spectrum': run_spectrum,
    'fixedpoints': run_fixedpoints,
    'product': run_product,
    'fepsilon': run_fepsilon,
}


def run_task(c: dict) -> tuple[dict, list[Artifact]]:
    """
    Runs the task of a resolved config.

    Args:
        c: Resolved config (see `phdyn.config.resolve`).

    Returns:
        summary: Task metrics, named boolean `checks` and human-readable `flags`; every failed check is flagged.
        artifacts: Files to write next to the summary.
    """
    name = c['task']['name']
    root_key = jax.random.PRNGKey(seed=c['run']['seed'])
    summary = {'metrics': {}, 'checks': {}, 'flags': []}
    start_time = time.time()
    artifacts = RUNNERS[name](c, summary, root_key)
    logger.info(f"Task {name} finished in {time.time() - start_time:.2f}s")
    checks = {k: bool(v) for k, v in summary['checks'].items()}
    flags = summary['flags'] + [f"check failed: {k}" for k, v in checks.items() if not v]
    return {'task': name, **summary['metrics'], 'checks': checks, 'flags': flags}, artifacts
