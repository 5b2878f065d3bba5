"""Scalar time-average diagnostics: center exponents, NUE statistics, occupation, L_n and the sequence lemma."""

from functools import partial
from typing import Optional, Sequence
import logging

import numpy as np
import numpy.typing as npt
import flax.struct

from phdyn.errors import NewtonInverseError
from phdyn.measures import HistogramMeasure, cesaro_defect, sub_cell_offsets
from phdyn.parallel import chunked, fan_out
from phdyn.splitting import (DEFAULT_CONVERGENCE, RESIDUAL_TOL, cumulative_log_singular, restricted_log_rates,
                             restricted_maps, transport_frames)
from phdyn.systems import DAParams
from phdyn.torus import BoxDomain, DynSystem, wrap

logger = logging.getLogger(__name__)

TAIL_FRACTION = 0.25
INVARIANCE_TOL = 0.05
QUADRATURE_FLOOR = 1e-9


def tail_window(length: int, tail: float = TAIL_FRACTION) -> int:
    """Number of final entries forming the tail window; at least one."""
    return max(1, int(np.ceil(tail * length)))


@flax.struct.dataclass
class ExponentSeries:
    x0: np.ndarray = flax.struct.field(pytree_node=False)
    values: np.ndarray = flax.struct.field(pytree_node=False)  # values[n - 1] = (1/n) log m(Df^n|E^c)
    horizon: int = flax.struct.field(pytree_node=False)
    cut_reason: Optional[str] = flax.struct.field(pytree_node=False, default=None)

    @property
    def last(self) -> float:
        return float(self.values[-1])

    @property
    def liminf(self) -> float:
        return float(self.values[-tail_window(len(self.values)):].min())

    @property
    def limsup(self) -> float:
        return float(self.values[-tail_window(len(self.values)):].max())


@flax.struct.dataclass
class NUEStat:
    x0: np.ndarray = flax.struct.field(pytree_node=False)
    sums: np.ndarray = flax.struct.field(pytree_node=False)  # sums[n - 1] = S_n
    c0: float = flax.struct.field(pytree_node=False)
    window: int = flax.struct.field(pytree_node=False)
    horizon: int = flax.struct.field(pytree_node=False)

    @property
    def tail_max(self) -> float:
        return float(self.sums[-self.window:].max())

    @property
    def tail_min(self) -> float:
        return float(self.sums[-self.window:].min())

    @property
    def verdict(self) -> str:
        if self.tail_max <= -self.c0:
            return 'NUE-pass'
        if self.tail_min <= -self.c0:
            return 'wNUE-pass-only'
        return 'fail'


@flax.struct.dataclass
class OccupationStats:
    x0: np.ndarray = flax.struct.field(pytree_node=False)
    V: BoxDomain = flax.struct.field(pytree_node=False)
    fractions: np.ndarray = flax.struct.field(pytree_node=False)  # fractions[k - 1] = |J_V| / k
    alpha: float = flax.struct.field(pytree_node=False)

    @property
    def members(self) -> np.ndarray:
        """members[k - 1] is True when x lies in M(k, alpha)."""
        return self.fractions >= self.alpha


@flax.struct.dataclass
class LnResult:
    values: np.ndarray = flax.struct.field(pytree_node=False)  # values[n - 1] = L_n
    errors: np.ndarray = flax.struct.field(pytree_node=False)
    invariance_defect: float = flax.struct.field(pytree_node=False)
    warnings: tuple[str, ...] = flax.struct.field(pytree_node=False, default=())

    @property
    def center_rate(self) -> float:
        """L_n / n at the largest n, the estimate of the center rate of the measure."""
        return float(self.values[-1] / len(self.values))

    def tolerance(self, n: int) -> float:
        return 3.0 * float(self.errors[n - 1]) + QUADRATURE_FLOOR


@flax.struct.dataclass
class SequenceBound:
    lhs: float
    rhs: float
    holds: bool = flax.struct.field(pytree_node=False)
    truncated: int = flax.struct.field(pytree_node=False)


# --- center exponents and NUE ----------------------------------------------------------------

def _first_cut(frames_residual: np.ndarray) -> Optional[int]:
    bad = np.nonzero(frames_residual >= RESIDUAL_TOL)[0]
    return int(bad[0]) if len(bad) else None


def center_log_series(f: DynSystem, points: npt.ArrayLike, horizon: int,
                      n_conv: int = DEFAULT_CONVERGENCE) -> tuple[np.ndarray, np.ndarray]:
    """
    log m(Df^n|E^c) for n = 1..horizon over a batch of points.

    Returns:
        logs: Shape (horizon, P).
        residual: Invariance residual after each step, shape (horizon, P).
    """
    frames = transport_frames(f, points, horizon, n_conv)
    log_min, _ = cumulative_log_singular(restricted_maps(frames, 'c'))
    return log_min, frames.residual_along()


def central_exponent(f: DynSystem, x: npt.ArrayLike, horizon: int, n_conv: int = DEFAULT_CONVERGENCE) -> ExponentSeries:
    """
    Finite-time center exponents (1/n) log m(Df^n|E^c_x) for n = 1..horizon.

    The series stops at the first step where the splitting loses invariance, and the cut is
    recorded. The tail window gives liminf and limsup proxies.
    """
    if horizon < 1:
        raise ValueError(f"Need horizon >= 1, got {horizon}")
    x = f.wrap(np.asarray(x, dtype=np.float64))
    try:
        logs, residual = center_log_series(f, x, horizon, n_conv)
    except NewtonInverseError as error:
        logger.warning(f"Center exponent at {x.tolist()} cut before the first step: {error}")
        return ExponentSeries(x0=x, values=np.empty(0), horizon=horizon, cut_reason=str(error))
    logs, residual = logs[:, 0], residual[:, 0]
    cut = _first_cut(residual)
    reason = None
    if cut is not None:
        reason = f"invariance residual {residual[cut]:.3e} at step {cut}"
        logger.warning(f"Center exponent at {x.tolist()} cut: {reason}")
        logs = logs[:cut]
    return ExponentSeries(x0=x, values=logs / np.arange(1, len(logs) + 1), horizon=horizon, cut_reason=reason)


def _central_exponent_chunk(f: DynSystem, chunk: np.ndarray, horizon: int, n_conv: int) -> np.ndarray:
    logs, _ = center_log_series(f, chunk, horizon, n_conv)
    return logs[-1] / horizon


def central_exponents(f: DynSystem, points: np.ndarray, horizon: int, n_conv: int = DEFAULT_CONVERGENCE,
                      workers: int = 1, chunk_size: int = 256, show_progress: bool = False) -> np.ndarray:
    """Last value (1/horizon) log m(Df^horizon|E^c) for each point of a batch."""
    results = fan_out(partial(_central_exponent_chunk, horizon=horizon, n_conv=n_conv), f,
                      chunked(np.atleast_2d(points), chunk_size), workers,
                      tqdm_desc="exponents" if show_progress else None)
    return np.concatenate(results)


def cu_conorm_logs(f: DynSystem, points: npt.ArrayLike, horizon: int, n_conv: int = DEFAULT_CONVERGENCE) -> np.ndarray:
    """
    log m(Df|E^cu) at x_0 .. x_{horizon-1}, shape (horizon, P).

    The conorm is taken in the adapted metric where E^c and E^u are orthogonal, so it is the
    smaller of the center and unstable conorms.
    """
    frames = transport_frames(f, points, horizon, n_conv)
    one_step = []
    for bundle in ('c', 'u'):
        B = restricted_maps(frames, bundle)
        one_step.append(np.log(np.linalg.svd(B, compute_uv=False)[..., -1]))
    return np.minimum(*one_step)


def nue_statistic(f: DynSystem, x: npt.ArrayLike, horizon: int, c0: float, n_conv: int = DEFAULT_CONVERGENCE,
                  tail: float = TAIL_FRACTION) -> NUEStat:
    """
    Birkhoff sums S_n = (1/n) sum_{j<n} log ||(Df|E^cu_{f^j x})^-1|| and the NUE verdict.

    NUE passes when the tail maximum of S_n is at most -c0; wNUE alone when only the tail minimum is.
    """
    if horizon < 1:
        raise ValueError(f"Need horizon >= 1, got {horizon}")
    if not c0 > 0:
        raise ValueError(f"c0 must be positive, got {c0}")
    x = f.wrap(np.asarray(x, dtype=np.float64))
    inverse_norms = -cu_conorm_logs(f, x, horizon, n_conv)[:, 0]
    sums = np.cumsum(inverse_norms) / np.arange(1, horizon + 1)
    return NUEStat(x0=x, sums=sums, c0=float(c0), window=tail_window(horizon, tail), horizon=horizon)


# --- occupation ------------------------------------------------------------------------------

def occupation(f: DynSystem, x: npt.ArrayLike, V: BoxDomain, horizon: int, alpha: float) -> OccupationStats:
    """Fractions |J_V(x)| / k of the first k iterates f^0(x) .. f^(k-1)(x) inside V, for k = 1..horizon."""
    if horizon < 1:
        raise ValueError(f"Need horizon >= 1, got {horizon}")
    x = f.wrap(np.asarray(x, dtype=np.float64))
    point, inside = x, np.empty(horizon, dtype=bool)
    for j in range(horizon):
        inside[j] = V.contains(point)
        point = f.apply(point)
    fractions = np.cumsum(inside) / np.arange(1, horizon + 1)
    return OccupationStats(x0=x, V=V, fractions=fractions, alpha=float(alpha))


def occupation_batch(f: DynSystem, points: np.ndarray, V: BoxDomain, horizon: int, alpha: float,
                     k_min: int) -> dict[str, np.ndarray]:
    """
    Occupation summary of a batch without storing orbits.

    Returns:
        A dict with `visits` (|J_V| at the horizon), `late_member` (x in M(k, alpha) for some
        k >= k_min) and `max_late_fraction` (largest fraction over k >= k_min).
    """
    point = f.wrap(np.atleast_2d(points))
    count = np.zeros(len(point))
    late_max = np.zeros(len(point))
    for k in range(1, horizon + 1):
        count += V.contains(point)
        if k >= k_min:
            late_max = np.maximum(late_max, count / k)
        point = f.apply(point)
    return {'visits': count, 'late_member': late_max >= alpha, 'max_late_fraction': late_max}


# --- L_n and its super-additivity --------------------------------------------------------------

def _center_log_chunk(f: DynSystem, chunk: np.ndarray, n: int, n_conv: int) -> tuple[np.ndarray, np.ndarray]:
    log_min, _, residual = restricted_log_rates(f, chunk, n, n_conv)
    return log_min[..., 1], residual


def ln_functional(f: DynSystem, mu: HistogramMeasure, n: int, n_conv: int = DEFAULT_CONVERGENCE,
                  invariance_tol: float = INVARIANCE_TOL, workers: int = 1, chunk_size: int = 512) -> LnResult:
    """
    L_k(f, mu) = integral of log m(Df^k|E^c) d mu for k = 1..n, by cell-center quadrature.

    The quadrature error is the difference to the same sum over the 2^d sub-cell centers. A
    histogram that is not invariant to within `invariance_tol` gets a warning attached, since
    super-additivity is then not guaranteed.
    """
    if n < 1:
        raise ValueError(f"Need n >= 1, got {n}")
    centers, weights = mu.support()
    offsets = sub_cell_offsets(mu.resolution)
    fine = wrap((centers[:, None, :] + offsets[None]).reshape(-1, centers.shape[1]), mu.periodic)
    fine_weights = np.repeat(weights / len(offsets), len(offsets))

    task = partial(_center_log_chunk, n=n, n_conv=n_conv)
    coarse = fan_out(task, f, chunked(centers, chunk_size), workers)
    refined = fan_out(task, f, chunked(fine, chunk_size), workers)
    coarse_logs = np.concatenate([r[0] for r in coarse], axis=1)
    fine_logs = np.concatenate([r[0] for r in refined], axis=1)
    residual = max(np.concatenate([r[1] for r in coarse]).max(), np.concatenate([r[1] for r in refined]).max())

    values = coarse_logs @ weights
    errors = np.abs(fine_logs @ fine_weights - values)
    defect = cesaro_defect(f, mu)
    warnings = []
    if defect > invariance_tol:
        warnings.append(f"measure is not invariant: pushforward distance {defect:.4f} > {invariance_tol}")
    if residual >= RESIDUAL_TOL:
        warnings.append(f"splitting residual {residual:.3e} along quadrature orbits")
    for warning in warnings:
        logger.warning(f"L_n of {f.name}: {warning}")
    return LnResult(values=values, errors=errors, invariance_defect=defect, warnings=tuple(warnings))


def superadditivity_violations(result: LnResult, max_pair: int = 10) -> list[dict]:
    """Pairs (n, m) with L_{n+m} < L_n + L_m - tol, tol = 3 x the largest quadrature error of the three."""
    if len(result.values) < 2 * max_pair:
        raise ValueError(f"Need L_n up to n = {2 * max_pair}, have {len(result.values)}")
    violations = []
    for n in range(1, max_pair + 1):
        for m in range(1, max_pair + 1):
            tol = max(result.tolerance(n), result.tolerance(m), result.tolerance(n + m))
            deficit = result.values[n - 1] + result.values[m - 1] - result.values[n + m - 1]
            if deficit > tol:
                violations.append({'n': n, 'm': m, 'deficit': float(deficit), 'tol': tol})
    return violations


def search_n0(f: DynSystem, measures: Sequence[HistogramMeasure], max_n: int = 64,
              n_conv: int = DEFAULT_CONVERGENCE, workers: int = 1) -> tuple[Optional[int], np.ndarray]:
    """
    Smallest n <= max_n with min over the given measures of L_n > 0.

    Returns:
        n0: The integer, or None when no n up to max_n qualifies.
        table: L_n per measure, shape (len(measures), max_n).
    """
    table = np.stack([ln_functional(f, mu, max_n, n_conv, workers=workers).values for mu in measures])
    positive = np.nonzero(table.min(axis=0) > 0)[0]
    n0 = int(positive[0]) + 1 if len(positive) else None
    logger.info(f"n0 search on {f.name} over {len(measures)} measures: n0 = {n0}")
    return n0, table


# --- sequence lemma --------------------------------------------------------------------------

def seq_limsup_bound(a: npt.ArrayLike, N: int, tail: float = TAIL_FRACTION) -> SequenceBound:
    """
    Finite check of limsup (1/nN) sum_{k<nN} a_k <= max_l limsup (1/n) sum_{k<n} a_{kN+l}.

    Both limsups are proxied by maxima over the same tail of n; a tail of the sequence that is
    not a multiple of N is dropped and its length recorded.
    """
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    a = np.asarray(a, dtype=np.float64)
    n = len(a) // N
    if n < 1:
        raise ValueError(f"Sequence of length {len(a)} is shorter than N = {N}")
    truncated = len(a) - n * N
    a = a[:n * N]
    m = np.arange(1, n + 1)
    start = n - tail_window(n, tail)
    averages = np.cumsum(a)[N * m - 1] / (N * m)
    residues = np.cumsum(a.reshape(n, N), axis=0) / m[:, None]
    lhs = float(averages[start:].max())
    rhs = float(residues[start:].max())
    return SequenceBound(lhs=lhs, rhs=rhs, holds=lhs <= rhs + 1e-12, truncated=truncated)


# --- DA pointwise bound and Lyapunov spectrum ---------------------------------------------------

def da_center_bound(f: DynSystem, params: DAParams, points: np.ndarray, horizon: int,
                    n_conv: int = DEFAULT_CONVERGENCE, slack: float = 1e-6) -> dict[str, np.ndarray]:
    """
    Checks n lambda^c_n >= (n - |J_V|) log eta_c + |J_V| log(1 - beta) - n slack for every n <= horizon.

    Returns:
        A dict with per-point `holds`, the smallest `margin`, `visits` = |J_V| at the horizon and
        the final exponent `exponent`.
    """
    points = f.wrap(np.atleast_2d(points))
    logs, _ = center_log_series(f, points, horizon, n_conv)
    V = params.V
    point, inside = points, np.empty((horizon,) + points.shape[:1], dtype=bool)
    for j in range(horizon):
        inside[j] = V.contains(point)
        point = f.apply(point)
    visits = np.cumsum(inside, axis=0)
    steps = np.arange(1, horizon + 1)[:, None]
    bound = (steps - visits) * np.log(params.eta_c) + visits * np.log(1.0 - params.beta) - steps * slack
    margin = (logs - bound).min(axis=0)
    return {'holds': margin >= 0, 'margin': margin, 'visits': visits[-1], 'exponent': logs[-1] / horizon}


def lyapunov_spectrum(f: DynSystem, x: npt.ArrayLike, n: int, burn_in: int = DEFAULT_CONVERGENCE) -> np.ndarray:
    """
    Finite-time Lyapunov exponents by QR re-orthonormalisation, in descending order.

    The first `burn_in` steps only align the frame and do not enter the averages.
    """
    if n < 1:
        raise ValueError(f"Need n >= 1, got {n}")
    point = f.wrap(np.asarray(x, dtype=np.float64))
    Q = np.eye(f.dimension)
    logs = np.zeros(f.dimension)
    for j in range(burn_in + n):
        Q, R = np.linalg.qr(f.jacobian(point) @ Q)
        if j >= burn_in:
            logs += np.log(np.abs(np.diag(R)))
        point = f.apply(point)
    return np.sort(logs / n)[::-1]
