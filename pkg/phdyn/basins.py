"""Birkhoff-vector basin maps: detection and counting of physical measures on a grid of initial points."""

from functools import partial
from typing import Callable, Optional, Sequence
import logging

import numpy as np
import numpy.typing as npt
import jax
import jax.numpy as jnp
import flax.struct
from scipy.sparse.csgraph import connected_components
from sklearn.neighbors import NearestNeighbors, radius_neighbors_graph

from phdyn.parallel import chunked, fan_out
from phdyn.torus import DynSystem, wrap

logger = logging.getLogger(__name__)

EPS_CONV = 0.01
DEFAULT_TOL = 0.1
SLICE_Z = 0.5


@flax.struct.dataclass
class ObservableSet:
    """Named observables evaluated together as one vector-valued jax function of a point."""
    names: tuple[str, ...] = flax.struct.field(pytree_node=False)
    fn: Callable = flax.struct.field(pytree_node=False)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(jax.vmap(self.fn)(jnp.asarray(np.atleast_2d(points))))


def observables_for(f: DynSystem) -> ObservableSet:
    """
    cos and sin of 2 pi times each coordinate, plus for glued systems a smoothed indicator
    (1 - cos(2 pi (x - tau) / lam)) / 2 of every block range [tau, tau + lam).
    """
    names = [f"{fn}_{i}" for i in range(f.dimension) for fn in ('cos', 'sin')]
    blocks = [(b['tau'], b['lam']) for b in f.params.get('blocks', [])]
    names += [f"block_{tau:.6g}" for tau, _ in blocks]

    def fn(p):
        values = [g(2.0 * jnp.pi * p[i]) for i in range(f.dimension) for g in (jnp.cos, jnp.sin)]
        for tau, lam in blocks:
            inside = (p[0] >= tau) & (p[0] < tau + lam)
            values.append(jnp.where(inside, 0.5 * (1.0 - jnp.cos(2.0 * jnp.pi * (p[0] - tau) / lam)), 0.0))
        return jnp.stack(values)

    return ObservableSet(names=tuple(names), fn=fn)


@flax.struct.dataclass
class BasinMap:
    points: np.ndarray = flax.struct.field(pytree_node=False)     # (P, d)
    vectors: np.ndarray = flax.struct.field(pytree_node=False)    # (P, m), Birkhoff averages at horizon n
    converged: np.ndarray = flax.struct.field(pytree_node=False)  # (P,)
    labels: np.ndarray = flax.struct.field(pytree_node=False)     # (P,), 0 for unconverged
    count: int = flax.struct.field(pytree_node=False)
    tol: float = flax.struct.field(pytree_node=False)
    shape: Optional[tuple[int, ...]] = flax.struct.field(pytree_node=False, default=None)

    def rows(self) -> list[list]:
        """CSV rows: point coordinates, Birkhoff vector, label."""
        return [[float(c) for c in p] + [float(v) for v in vec] + [int(label)]
                for p, vec, label in zip(self.points, self.vectors, self.labels)]


def slice_grid(grid: int, key: jax.Array, z: float = SLICE_Z) -> np.ndarray:
    """
    One jittered point per cell of the grid x grid slice {x} x {y} x {z}, row-major in (y, x).

    Jitter keeps the points off dyadic rationals, which integer automorphisms map to periodic
    orbits in floating point.
    """
    jitter = np.asarray(jax.random.uniform(key, (grid, grid, 2)))
    j, i = np.meshgrid(np.arange(grid), np.arange(grid), indexing='ij')
    x = (i + jitter[..., 0]) / grid
    y = (j + jitter[..., 1]) / grid
    return np.column_stack([x.reshape(-1), y.reshape(-1), np.full(grid * grid, z)])


def birkhoff_vectors(f: DynSystem, points: np.ndarray, n: int, obs: ObservableSet,
                     eps_conv: float = EPS_CONV) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Birkhoff averages (1/n) sum_{k<n} obs(f^k x) over a batch, computed with `jax.lax.scan`.

    Returns:
        vectors: Averages at horizon n, shape (P, m).
        half: Averages at horizon n // 2.
        converged: Whether the two differ by less than eps_conv in max-norm.
    """
    if n < 2:
        raise ValueError(f"Need n >= 2, got {n}")
    half_n = n // 2
    step = jax.vmap(f.map_fn)
    evaluate = jax.vmap(obs.fn)

    def body(carry, _):
        point, total = carry
        return (step(point), total + evaluate(point)), None

    @partial(jax.jit, static_argnums=1)
    def run(carry, length):
        carry, _ = jax.lax.scan(body, carry, None, length=length)
        return carry

    x = jnp.asarray(wrap(np.atleast_2d(points), f.periodic))
    carry = run((x, jnp.zeros((x.shape[0], len(obs.names)))), half_n)
    half = np.asarray(carry[1]) / half_n
    carry = run(carry, n - half_n)
    vectors = np.asarray(carry[1]) / n
    converged = np.max(np.abs(vectors - half), axis=1) < eps_conv
    return vectors, half, converged


def birkhoff_vector(f: DynSystem, x: npt.ArrayLike, n: int, obs: ObservableSet,
                    eps_conv: float = EPS_CONV) -> tuple[np.ndarray, bool]:
    vectors, _, converged = birkhoff_vectors(f, np.asarray(x, dtype=np.float64), n, obs, eps_conv)
    return vectors[0], bool(converged[0])


def _birkhoff_chunk(f: DynSystem, chunk: np.ndarray, n: int, eps_conv: float) -> tuple[np.ndarray, np.ndarray]:
    vectors, _, converged = birkhoff_vectors(f, chunk, n, observables_for(f), eps_conv)
    return vectors, converged


def cluster_basins(points: np.ndarray, vectors: np.ndarray, converged: np.ndarray, tol: float = DEFAULT_TOL,
                   eps_conv: float = EPS_CONV, shape: Optional[tuple[int, ...]] = None) -> BasinMap:
    """
    Single-linkage clustering of converged Birkhoff vectors in the max-norm.

    Clusters are numbered 1..l in order of their first member when the points are sorted
    lexicographically; unconverged points get label 0 and do not count.
    """
    if tol <= eps_conv:
        raise ValueError(f"Cluster tolerance {tol} must exceed the convergence gate {eps_conv}")
    labels = np.zeros(len(points), dtype=np.int64)
    index = np.nonzero(converged)[0]
    count = 0
    if len(index):
        # links need distance strictly below tol
        graph = radius_neighbors_graph(vectors[index], radius=np.nextafter(tol, 0.0), metric='chebyshev',
                                       include_self=False)
        _, components = connected_components(graph, directed=False)
        order = np.lexsort(points[index].T[::-1])
        renumber = {}
        for i in order:
            renumber.setdefault(components[i], len(renumber) + 1)
        labels[index] = [renumber[c] for c in components]
        count = len(renumber)
    logger.info(f"Basin clustering: {count} clusters, {int((~converged).sum())} unconverged of {len(points)} points")
    return BasinMap(points=points, vectors=vectors, converged=converged, labels=labels, count=count, tol=tol, shape=shape)


def basin_map(f: DynSystem, grid: int, n: int, seed: int = 0, tol: float = DEFAULT_TOL, eps_conv: float = EPS_CONV,
              workers: int = 1, chunk_size: int = 512, show_progress: bool = False) -> BasinMap:
    """Birkhoff vectors on the jittered z = 1/2 slice grid, clustered into basins."""
    points = slice_grid(grid, jax.random.PRNGKey(seed))
    results = fan_out(partial(_birkhoff_chunk, n=n, eps_conv=eps_conv), f, chunked(points, chunk_size), workers,
                      tqdm_desc=f"basins {f.name}" if show_progress else None)
    vectors = np.concatenate([r[0] for r in results])
    converged = np.concatenate([r[1] for r in results])
    return cluster_basins(points, vectors, converged, tol, eps_conv, shape=(grid, grid))


def assign_labels(basins: BasinMap, vectors: np.ndarray, converged: np.ndarray) -> np.ndarray:
    """Label of the nearest converged member within tol, or 0."""
    members = np.nonzero(basins.labels > 0)[0]
    labels = np.zeros(len(vectors), dtype=np.int64)
    if len(members) == 0:
        return labels
    nearest = NearestNeighbors(n_neighbors=1, metric='chebyshev').fit(basins.vectors[members])
    distance, index = nearest.kneighbors(vectors)
    hit = converged & (distance[:, 0] < basins.tol)
    labels[hit] = basins.labels[members[index[hit, 0]]]
    return labels


def interior_points(basins: BasinMap) -> np.ndarray:
    """Indices of labelled points whose four grid neighbours carry the same label."""
    if basins.shape is None:
        return np.nonzero(basins.labels > 0)[0]
    grid = basins.labels.reshape(basins.shape)
    same = grid > 0
    same[1:] &= grid[1:] == grid[:-1]
    same[:-1] &= grid[:-1] == grid[1:]
    same[:, 1:] &= grid[:, 1:] == grid[:, :-1]
    same[:, :-1] &= grid[:, :-1] == grid[:, 1:]
    return np.nonzero(same.reshape(-1))[0]


def basin_openness_probe(f: DynSystem, basins: BasinMap, samples: int, n: int, seed: int = 0,
                         radii: Sequence[float] = (1e-3, 1e-4), min_interface_distance: float = 0.0) -> dict:
    """
    Perturbs sampled interior points of every cluster and reports how often the label survives.

    Args:
        f: The system the map was computed for.
        basins: The basin map.
        samples: Interior points drawn per cluster.
        n: Birkhoff horizon of the recomputation.
        seed: Seed of the sampling.
        radii: Perturbation radii.
        min_interface_distance: Skip points closer than this (in x) to a block interface.

    Returns:
        {'radii': {r: {'stable_fraction', 'probed'}}, 'clusters': l}.
    """
    key = jax.random.PRNGKey(seed)
    candidates = interior_points(basins)
    interfaces = np.array([b['tau'] for b in f.params.get('blocks', [])] + ([1.0] if 'blocks' in f.params else []))
    if len(interfaces) and min_interface_distance > 0:
        gap = np.min(np.abs(basins.points[candidates, 0][:, None] - interfaces[None]), axis=1)
        candidates = candidates[gap > min_interface_distance]
    chosen = []
    for label in range(1, basins.count + 1):
        key, subkey = jax.random.split(key)
        members = candidates[basins.labels[candidates] == label]
        if len(members):
            pick = np.asarray(jax.random.permutation(subkey, len(members)))[:samples]
            chosen.append(members[np.sort(pick)])
    chosen = np.concatenate(chosen) if chosen else np.zeros(0, dtype=np.int64)
    report = {'radii': {}, 'clusters': basins.count}
    for r in radii:
        key, subkey = jax.random.split(key)
        if len(chosen) == 0:
            report['radii'][r] = {'stable_fraction': 1.0, 'probed': 0}
            continue
        direction = np.array(jax.random.normal(subkey, (len(chosen), f.dimension)))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        moved = wrap(basins.points[chosen] + r * direction, f.periodic)
        if not all(f.periodic):
            moved[:, 0] = np.clip(moved[:, 0], 0.0, 1.0)
        vectors, _, converged = birkhoff_vectors(f, moved, n, observables_for(f))
        stable = assign_labels(basins, vectors, converged) == basins.labels[chosen]
        report['radii'][r] = {'stable_fraction': float(stable.mean()), 'probed': int(len(chosen))}
    return report


def label_invariance(f: DynSystem, basins: BasinMap, n: int, m: int = 10) -> float:
    """Fraction of converged points whose m-th iterate receives the same label."""
    members = np.nonzero(basins.labels > 0)[0]
    if len(members) == 0:
        return 1.0
    moved = basins.points[members]
    for _ in range(m):
        moved = f.apply(moved)
    vectors, _, converged = birkhoff_vectors(f, moved, n, observables_for(f))
    return float((assign_labels(basins, vectors, converged) == basins.labels[members]).mean())


def uniqueness_scan(family: Sequence[tuple[str, DynSystem]], grid: int, n: int, seed: int = 0,
                    tol: float = DEFAULT_TOL, workers: int = 1) -> list[dict]:
    """Number of physical-measure candidates l for each member of a family of systems."""
    dims = {f.dimension for _, f in family}
    if len(dims) != 1:
        raise ValueError(f"Family members do not share a phase space: dimensions {sorted(dims)}")
    table = []
    for name, f in family:
        basins = basin_map(f, grid, n, seed=seed, tol=tol, workers=workers)
        table.append({'name': name, 'l': basins.count, 'unconverged': int((~basins.converged).sum())})
        logger.info(f"{name}: l = {basins.count}")
    return table
