"""u-segments, the subdivision algorithm, averaged pushforwards and histogram measures."""

from typing import Optional
import logging
import struct

import numpy as np
import numpy.typing as npt
import jax
import flax.struct

from phdyn.errors import DistortionError, GridError, NewtonInverseError
from phdyn.splitting import DEFAULT_CONVERGENCE, estimate_unstable
from phdyn.torus import BoxDomain, DynSystem, scan_orbit, wrap, wrapped_difference

logger = logging.getLogger(__name__)

MIN_GRID = 8
DISTORTION_BOUND = 50.0
EXPANSION_FLOOR = 3.0
ANGLE_TOL = 0.1
HISTOGRAM_MAGIC = b"PHDH"
HISTOGRAM_VERSION = 1
DOMAIN_TAGS = {'T3': 1, 'T4': 2, 'IxT2': 3}


@flax.struct.dataclass
class USegment:
    """A polyline in a strong unstable leaf, in lifted (unwrapped) coordinates, carrying mass on its chords."""
    vertices: np.ndarray = flax.struct.field(pytree_node=False)  # (m, d)
    masses: np.ndarray = flax.struct.field(pytree_node=False)    # (m - 1,)
    length: float = flax.struct.field(pytree_node=False)
    periodic: tuple[bool, ...] = flax.struct.field(pytree_node=False)
    truncated: Optional[str] = flax.struct.field(pytree_node=False, default=None)

    @property
    def chord_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.vertices, axis=0), axis=-1)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def densities(self) -> np.ndarray:
        return self.masses / self.chord_lengths

    @property
    def weights(self) -> np.ndarray:
        """Per-vertex densities, averaged from the adjacent chords."""
        rho = self.densities
        return np.concatenate([rho[:1], 0.5 * (rho[1:] + rho[:-1]), rho[-1:]])

    @property
    def midpoints(self) -> np.ndarray:
        return wrap(0.5 * (self.vertices[1:] + self.vertices[:-1]), self.periodic)


@flax.struct.dataclass
class HistogramMeasure:
    weights: np.ndarray = flax.struct.field(pytree_node=False)  # cell masses, shape = resolution
    domain: str = flax.struct.field(pytree_node=False)
    periodic: tuple[bool, ...] = flax.struct.field(pytree_node=False)

    @property
    def resolution(self) -> tuple[int, ...]:
        return tuple(self.weights.shape)

    def centers(self) -> np.ndarray:
        """Cell centers in row-major order, shape (prod(resolution), d)."""
        axes = [(np.arange(r) + 0.5) / r for r in self.resolution]
        return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, len(axes))

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        flat = self.weights.reshape(-1)
        nonzero = flat > 0
        return self.centers()[nonzero], flat[nonzero]


def domain_tag(f: DynSystem) -> str:
    if f.dimension == 4:
        return 'T4'
    return 'T3' if all(f.periodic) else 'IxT2'


def deposit(points: np.ndarray, masses: np.ndarray, resolution: tuple[int, ...],
            periodic: tuple[bool, ...]) -> np.ndarray:
    """Accumulates point masses into a histogram of the given resolution."""
    res = np.asarray(resolution)
    idx = np.clip(np.floor(wrap(points, periodic) * res).astype(np.int64), 0, res - 1)
    flat = np.ravel_multi_index(tuple(idx.T), tuple(resolution))
    return np.bincount(flat, weights=masses, minlength=int(np.prod(res))).reshape(resolution)


def histogram(f: DynSystem, points: np.ndarray, masses: np.ndarray, grid: int) -> HistogramMeasure:
    weights = deposit(points, masses, (grid,) * f.dimension, f.periodic)
    return HistogramMeasure(weights=weights / weights.sum(), domain=domain_tag(f), periodic=f.periodic)


def uniform_measure(f: DynSystem, grid: int) -> HistogramMeasure:
    resolution = (grid,) * f.dimension
    return HistogramMeasure(weights=np.full(resolution, 1.0 / grid ** f.dimension), domain=domain_tag(f),
                            periodic=f.periodic)


def measure_distance(mu: HistogramMeasure, nu: HistogramMeasure) -> float:
    """Total-variation distance between two histograms on the same grid."""
    if mu.resolution != nu.resolution or mu.domain != nu.domain:
        raise GridError(f"Cannot compare a {mu.domain} histogram of resolution {mu.resolution} "
                        f"with a {nu.domain} histogram of resolution {nu.resolution}")
    return float(0.5 * np.abs(mu.weights - nu.weights).sum())


def _check_grid(grid: int) -> None:
    if grid < MIN_GRID:
        raise GridError(f"Histogram grid {grid} is too coarse; need at least {MIN_GRID} cells per axis")


# --- u-segments ----------------------------------------------------------------------------

def lift(points: np.ndarray, periodic: tuple[bool, ...]) -> np.ndarray:
    """Unwraps a polyline given by wrapped points whose consecutive chords are shorter than 1/2."""
    steps = wrapped_difference(points[1:], points[:-1], periodic)
    return points[0] + np.concatenate([np.zeros((1, points.shape[1])), np.cumsum(steps, axis=0)])


def grow_usegment(f: DynSystem, x: npt.ArrayLike, target_length: float, h_max: Optional[float] = None,
                  n_conv: int = DEFAULT_CONVERGENCE) -> USegment:
    """
    Integrates the E^u line field through x, half of the target length to each side.

    Steps are midpoint steps; a step is halved while the direction turns by more than 0.1 rad
    across it. A failing direction estimate truncates the segment and records why.

    Args:
        f: System with dim E^u = 1.
        x: Center of the segment.
        target_length: Arc length to reach.
        h_max: Largest step; defaults to target_length / 32.
        n_conv: Convergence length of the E^u estimates.

    Returns:
        A segment with uniform density and total mass 1.
    """
    if not target_length > 0:
        raise ValueError(f"Cannot grow a u-segment of length {target_length}")
    if f.dims[2] != 1:
        raise ValueError(f"u-segments need dim E^u = 1, got {f.dims[2]} for {f.name}")
    h_max = target_length / 32 if h_max is None else h_max
    x = f.wrap(np.asarray(x, dtype=np.float64))
    direction = estimate_unstable(f, x, n_conv)[:, 0]

    def direction_at(p: np.ndarray, reference: np.ndarray) -> np.ndarray:
        e = estimate_unstable(f, f.wrap(p), n_conv)[:, 0]
        return e if np.dot(e, reference) >= 0 else -e

    halves, reason = [], None
    for sign in (1.0, -1.0):
        p, e, travelled, h = x.copy(), sign * direction, 0.0, h_max
        branch = []
        try:
            while travelled < target_length / 2 - 1e-15:
                h = min(h, target_length / 2 - travelled)
                e_mid = direction_at(p + 0.5 * h * e, e)
                if np.arccos(np.clip(np.dot(e, e_mid), -1.0, 1.0)) > ANGLE_TOL and h > 1e-9:
                    h *= 0.5
                    continue
                p = p + h * e_mid
                travelled += h
                branch.append(p)
                e = direction_at(p, e_mid)
                h = min(2.0 * h, h_max)
        except NewtonInverseError as error:
            reason = f"E^u estimate failed after arc length {travelled:.4f}: {error}"
            logger.warning(reason)
        halves.append(branch)

    vertices = np.array(halves[1][::-1] + [x] + halves[0])
    chords = np.linalg.norm(np.diff(vertices, axis=0), axis=-1)
    if len(chords) == 0:
        raise ValueError(f"u-segment through {x.tolist()} is degenerate ({reason})")
    length = float(chords.sum())
    return USegment(vertices=vertices, masses=chords / length, length=length, periodic=f.periodic, truncated=reason)


def _refine(segment: USegment, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Inserts r - 1 points inside each chord; every sub-chord carries 1/r of its chord's mass."""
    v = segment.vertices
    s = np.arange(r) / r
    inner = v[:-1, None, :] + s[None, :, None] * (v[1:] - v[:-1])[:, None, :]
    points = np.concatenate([inner.reshape(-1, v.shape[1]), v[-1:]])
    return points, np.repeat(segment.masses / r, r)


def _resample(points: np.ndarray, masses: np.ndarray, start: float, stop: float, count: int,
              periodic: tuple[bool, ...]) -> USegment:
    """The sub-arc between arc lengths start and stop, with `count` vertices equally spaced in arc length."""
    chords = np.linalg.norm(np.diff(points, axis=0), axis=-1)
    cum_len = np.concatenate([[0.0], np.cumsum(chords)])
    cum_mass = np.concatenate([[0.0], np.cumsum(masses)])
    s = np.linspace(start, stop, count)
    vertices = np.column_stack([np.interp(s, cum_len, points[:, i]) for i in range(points.shape[1])])
    return USegment(vertices=vertices, masses=np.diff(np.interp(s, cum_len, cum_mass)), length=float(stop - start),
                    periodic=periodic)


def iterate_subdivide(f: DynSystem, gamma: USegment, L: float, refine: int = 4, vertices_per_piece: int = 17,
                      distortion_bound: float = DISTORTION_BOUND) -> tuple[list[USegment], dict]:
    """
    Maps a u-segment forward and cuts its image into pieces with lengths in [L, 2L].

    The image is cut into k = ceil(length / 2L) pieces of equal arc length. Mass moves with the
    points, so densities pick up the inverse u-Jacobian and the total mass is conserved.

    Args:
        f: The system.
        gamma: Segment with length >= L.
        L: Scale of the pieces.
        refine: Sub-chords mapped per chord.
        vertices_per_piece: Vertex count of every returned piece.
        distortion_bound: Largest admissible ratio of densities inside a piece.

    Returns:
        pieces: The pieces, ordered along the image.
        report: Image length, expansion factor and whether it reaches 3.
    """
    if not L > 0:
        raise ValueError(f"L must be positive, got {L}")
    if gamma.length < L * (1.0 - 1e-9):
        raise ValueError(f"Segment of length {gamma.length:.6f} is shorter than L = {L:.6f}")
    points, masses = _refine(gamma, refine)
    image = lift(f.apply(wrap(points, f.periodic)), f.periodic)
    image_length = float(np.linalg.norm(np.diff(image, axis=0), axis=-1).sum())
    expansion = image_length / gamma.length
    report = {'image_length': image_length, 'expansion': expansion, 'expansion_ok': expansion >= EXPANSION_FLOOR}
    if not report['expansion_ok']:
        logger.warning(f"u-segment of {f.name} expanded by {expansion:.4f} < {EXPANSION_FLOOR}")

    k = max(1, int(np.ceil(image_length / (2.0 * L) - 1e-12)))
    edges = np.linspace(0.0, image_length, k + 1)
    pieces = [_resample(image, masses, a, b, vertices_per_piece, f.periodic) for a, b in zip(edges[:-1], edges[1:])]
    for piece in pieces:
        rho = piece.densities
        ratio = float(rho.max() / rho.min())
        if ratio > distortion_bound:
            raise DistortionError(ratio, distortion_bound)
    report['pieces'] = k
    return pieces, report


def fraction_in(pieces: list[USegment], V: BoxDomain) -> float:
    """Share of the total length carried by pieces that meet V."""
    total = sum(p.length for p in pieces)
    inside = sum(p.length for p in pieces if V.contains(wrap(p.vertices, V.periodic)).any())
    return inside / total


def sample_on_segment(segment: USegment, count: int, key: jax.Array) -> np.ndarray:
    """Points drawn uniformly with respect to arc length."""
    chords = segment.chord_lengths
    cum_len = np.concatenate([[0.0], np.cumsum(chords)])
    s = np.sort(np.asarray(jax.random.uniform(key, (count,), minval=0.0, maxval=cum_len[-1])))
    points = np.column_stack([np.interp(s, cum_len, segment.vertices[:, i]) for i in range(segment.vertices.shape[1])])
    return wrap(points, segment.periodic)


def _systematic_resample(pieces: list[USegment], count: int, key: jax.Array) -> list[USegment]:
    """Keeps `count` pieces drawn proportionally to mass; each kept copy carries total / count."""
    mass = np.array([p.total_mass for p in pieces])
    total = mass.sum()
    offset = float(jax.random.uniform(key, (), maxval=1.0 / count))
    positions = offset + np.arange(count) / count
    chosen = np.minimum(np.searchsorted(np.cumsum(mass) / total, positions, side='right'), len(pieces) - 1)
    return [pieces[i].replace(masses=pieces[i].masses * (total / count) / mass[i]) for i in chosen]


def pesin_sinai_with_report(f: DynSystem, D: USegment, n: int, grid: int, L: Optional[float] = None,
                            max_pieces: int = 256, seed: int = 0) -> tuple[HistogramMeasure, dict]:
    """
    The averaged pushforward (1/n) sum_j f^j_* (Leb_D / Leb(D)) deposited on a grid.

    Args:
        f: The system.
        D: Initial u-segment; its mass is normalised to 1.
        n: Number of averaged iterates.
        grid: Cells per axis, at least 8.
        L: Piece scale of the subdivision; defaults to the length of D.
        max_pieces: Cap on the number of pieces, enforced by mass-preserving systematic resampling.
        seed: Seed of the resampling.

    Returns:
        measure: The histogram.
        report: Smallest expansion factor seen, flagged expansions and the final piece count.
    """
    if n < 1:
        raise ValueError(f"Need n >= 1, got {n}")
    _check_grid(grid)
    L = D.length if L is None else L
    key = jax.random.PRNGKey(seed)
    resolution = (grid,) * f.dimension
    pieces = [D.replace(masses=D.masses / D.total_mass)]
    accumulated = np.zeros(resolution)
    min_expansion, flagged = np.inf, 0
    for j in range(n):
        accumulated += deposit(np.concatenate([p.midpoints for p in pieces]), np.concatenate([p.masses for p in pieces]),
                               resolution, f.periodic)
        if j == n - 1:
            break
        images = []
        for piece in pieces:
            new, report = iterate_subdivide(f, piece, min(L, piece.length))
            images.extend(new)
            min_expansion = min(min_expansion, report['expansion'])
            flagged += not report['expansion_ok']
        if len(images) > max_pieces:
            key, subkey = jax.random.split(key)
            images = _systematic_resample(images, max_pieces, subkey)
        pieces = images
    measure = HistogramMeasure(weights=accumulated / accumulated.sum(), domain=domain_tag(f), periodic=f.periodic)
    return measure, {'min_expansion': float(min_expansion), 'flagged_expansions': flagged, 'pieces': len(pieces)}


def pesin_sinai(f: DynSystem, D: USegment, n: int, grid: int, L: Optional[float] = None, max_pieces: int = 256,
                seed: int = 0) -> HistogramMeasure:
    return pesin_sinai_with_report(f, D, n, grid, L, max_pieces, seed)[0]


def empirical_measure(f: DynSystem, x: npt.ArrayLike, n: int, grid: int) -> HistogramMeasure:
    """Histogram of the orbit x, f(x), ..., f^(n-1)(x); a batch of starting points is averaged."""
    if n < 1:
        raise ValueError(f"Need n >= 1, got {n}")
    x = f.wrap(np.asarray(x, dtype=np.float64))
    points = np.concatenate([x[None], scan_orbit(f, x, n - 1)]) if n > 1 else x[None]
    points = points.reshape(-1, f.dimension)
    return histogram(f, points, np.ones(len(points)), grid)


def sub_cell_offsets(resolution: tuple[int, ...], factor: int = 2) -> np.ndarray:
    """Offsets from a cell center to the centers of its factor^d sub-cells."""
    axes = [((np.arange(factor) + 0.5) / factor - 0.5) / r for r in resolution]
    return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, len(resolution))


def pushforward(f: DynSystem, mu: HistogramMeasure, factor: int = 2) -> HistogramMeasure:
    """f_* mu, with each cell's mass split evenly over its factor^d sub-cell centers."""
    centers, weights = mu.support()
    offsets = sub_cell_offsets(mu.resolution, factor)
    points = (centers[:, None, :] + offsets[None]).reshape(-1, centers.shape[1])
    masses = np.repeat(weights / len(offsets), len(offsets))
    images = f.apply(wrap(points, mu.periodic))
    weights = deposit(images, masses, mu.resolution, mu.periodic)
    return mu.replace(weights=weights / weights.sum())


def cesaro_defect(f: DynSystem, mu: HistogramMeasure, factor: int = 2) -> float:
    """TV distance between f_* mu and mu; zero for an invariant histogram up to discretisation."""
    return measure_distance(pushforward(f, mu, factor), mu)


# --- serialisation -------------------------------------------------------------------------

def histogram_to_bytes(mu: HistogramMeasure, config_sha256: str) -> bytes:
    """
    Flat binary layout, little endian: magic b"PHDH", u32 version, u32 ndim, ndim x u32 resolution,
    u32 domain tag, 32-byte config sha256, then the cell masses as row-major float64.
    """
    header = HISTOGRAM_MAGIC + struct.pack('<II', HISTOGRAM_VERSION, len(mu.resolution))
    header += struct.pack(f'<{len(mu.resolution)}I', *mu.resolution)
    header += struct.pack('<I', DOMAIN_TAGS[mu.domain]) + bytes.fromhex(config_sha256)
    return header + np.ascontiguousarray(mu.weights, dtype='<f8').tobytes()


def histogram_from_bytes(data: bytes) -> tuple[HistogramMeasure, str]:
    if data[:4] != HISTOGRAM_MAGIC:
        raise ValueError(f"Not a histogram file (magic {data[:4]!r})")
    version, ndim = struct.unpack_from('<II', data, 4)
    if version != HISTOGRAM_VERSION:
        raise ValueError(f"Unknown histogram version {version}")
    offset = 12
    resolution = struct.unpack_from(f'<{ndim}I', data, offset)
    offset += 4 * ndim
    (tag,) = struct.unpack_from('<I', data, offset)
    offset += 4
    digest = data[offset:offset + 32].hex()
    offset += 32
    weights = np.frombuffer(data, dtype='<f8', offset=offset).reshape(resolution).astype(np.float64)
    domain = {v: k for k, v in DOMAIN_TAGS.items()}[tag]
    periodic = (False, True, True) if domain == 'IxT2' else (True,) * ndim
    return HistogramMeasure(weights=weights, domain=domain, periodic=periodic), digest


def histogram_rows(mu: HistogramMeasure) -> list[list]:
    """CSV rows: cell index per axis, cell center per axis, mass; nonzero cells only."""
    rows = []
    centers = mu.centers()
    for flat, mass in enumerate(mu.weights.reshape(-1)):
        if mass > 0:
            index = np.unravel_index(flat, mu.resolution)
            rows.append([int(i) for i in index] + [float(c) for c in centers[flat]] + [float(mass)])
    return rows
