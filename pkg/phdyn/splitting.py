"""Finite-time estimation of the invariant splitting E^s + E^c + E^u and of rates restricted to it."""

from functools import partial
import logging

import numpy as np
import numpy.typing as npt
import flax.struct

from phdyn.errors import CertificateError, UnreliableFrameError
from phdyn.parallel import chunked, fan_out
from phdyn.torus import DynSystem, backward_orbit, orbit

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
DEFAULT_CONVERGENCE = 60
BUNDLES = ('s', 'c', 'u')
GENERIC_FRAME_SEED = 20_240_617


@flax.struct.dataclass
class SplittingFrame:
    at: np.ndarray = flax.struct.field(pytree_node=False)
    basis_s: np.ndarray = flax.struct.field(pytree_node=False)  # orthonormal columns
    basis_c: np.ndarray = flax.struct.field(pytree_node=False)
    basis_u: np.ndarray = flax.struct.field(pytree_node=False)
    residual: float = flax.struct.field(pytree_node=False)
    reliable: bool = flax.struct.field(pytree_node=False)

    def basis(self, bundle: str) -> np.ndarray:
        return {'s': self.basis_s, 'c': self.basis_c, 'u': self.basis_u}[bundle]


@flax.struct.dataclass
class PHCertificate:
    lambda1: float
    mu1: float
    lambda2: float
    mu2: float
    lambda3: float
    mu3: float
    C: float
    n_checked: int

    def to_dict(self) -> dict:
        return {'lambda1': self.lambda1, 'mu1': self.mu1, 'lambda2': self.lambda2, 'mu2': self.mu2,
                'lambda3': self.lambda3, 'mu3': self.mu3, 'C': self.C, 'n_checked': self.n_checked}


@flax.struct.dataclass
class OrbitFrames:
    """Splitting frames along a batch of orbits; bundle arrays have shape (n + 1, P, d, k)."""
    points: np.ndarray = flax.struct.field(pytree_node=False)     # (n + 1, P, d)
    jacobians: np.ndarray = flax.struct.field(pytree_node=False)  # (n, P, d, d), Df at x_0 .. x_{n-1}
    s: np.ndarray = flax.struct.field(pytree_node=False)
    c: np.ndarray = flax.struct.field(pytree_node=False)
    u: np.ndarray = flax.struct.field(pytree_node=False)
    cu: np.ndarray = flax.struct.field(pytree_node=False)

    def bundle(self, name: str) -> np.ndarray:
        return {'s': self.s, 'c': self.c, 'u': self.u, 'cu': self.cu}[name]

    def residual_along(self) -> np.ndarray:
        """Sine of the largest angle between Df(E^σ(x_j)) and E^σ(x_{j+1}), maximised over σ; shape (n, P)."""
        if len(self.jacobians) == 0:
            return np.zeros((0, self.points.shape[1]))
        sines = [subspace_sine(orthonormalize(self.jacobians @ E[:-1]), E[1:]) for E in (self.s, self.c, self.u)]
        return np.max(np.stack(sines), axis=0)


def orthonormalize(M: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(M)
    return Q


def subspace_sine(Q1: np.ndarray, Q2: np.ndarray) -> np.ndarray:
    """Sine of the largest principal angle between the column spans of orthonormal Q1 and Q2."""
    rejection = Q1 - Q2 @ (np.swapaxes(Q2, -1, -2) @ Q1)
    return np.linalg.norm(rejection, ord=2, axis=(-2, -1))


def generic_frame(d: int, k: int) -> np.ndarray:
    """A fixed orthonormal d x k frame in general position with respect to every invariant subspace we meet."""
    rng = np.random.default_rng(GENERIC_FRAME_SEED)
    return orthonormalize(rng.standard_normal((d, d)))[:, :k]


def canonical_signs(frame: np.ndarray) -> np.ndarray:
    """Flips each column so that its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(frame), axis=-2)
    pivots = np.take_along_axis(frame, idx[..., None, :], axis=-2)
    return frame * np.where(pivots < 0, -1.0, 1.0)


def _jacobians(f: DynSystem, points: np.ndarray) -> np.ndarray:
    m, P, d = points.shape
    if m == 0:
        return np.empty((0, P, d, d))
    return f.jacobian(points.reshape(m * P, d)).reshape(m, P, d, d)


def _push(jacobians: np.ndarray, frame: np.ndarray) -> np.ndarray:
    frames = [frame]
    for J in jacobians:
        frame = orthonormalize(J @ frame)
        frames.append(frame)
    return np.stack(frames)


def _pull(jacobians: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """Frames at x_0 .. x_m given one at x_m, pulled back through Df(x_{m-1}), ..., Df(x_0)."""
    frames = [frame]
    for J in jacobians[::-1]:
        frame = orthonormalize(np.linalg.solve(J, frame))
        frames.append(frame)
    return np.stack(frames[::-1])


def center_from(cu: np.ndarray, cs: np.ndarray, c: int) -> np.ndarray:
    """
    E^c = E^cu ∩ E^cs: the c directions of E^cu that E^cs captures best.

    The candidates are the eigenvectors of CU^T (I - CS CS^T) CU with the smallest eigenvalues,
    which vanish exactly on the intersection.
    """
    leak = cu - cs @ (np.swapaxes(cs, -1, -2) @ cu)
    gram = np.swapaxes(cu, -1, -2) @ leak
    _, vectors = np.linalg.eigh(0.5 * (gram + np.swapaxes(gram, -1, -2)))
    return orthonormalize(cu @ vectors[..., :c])


def transport_frames(f: DynSystem, x: npt.ArrayLike, n: int, n_conv: int = DEFAULT_CONVERGENCE) -> OrbitFrames:
    """
    Estimates the splitting at x_j = f^j(x) for 0 <= j <= n by QR cascades.

    Unstable-type frames (E^u, E^cu) are pushed forward from f^-n_conv(x), stable-type frames
    (E^s, E^cs) are pulled back from f^(n + n_conv)(x), and E^c is the intersection E^cu ∩ E^cs.

    Args:
        f: The system; f.dims gives (dim E^s, dim E^c, dim E^u).
        x: Base point (d,) or batch (P, d).
        n: Orbit length along which frames are returned.
        n_conv: Convergence length of each cascade.

    Returns:
        The frames along the orbits, always batched.
    """
    s, c, u = f.dims
    if min(f.dims) < 1:
        raise ValueError(f"Every bundle needs dimension >= 1, got {f.dims} for {f.name}")
    if n < 0 or n_conv < 1:
        raise ValueError(f"Need n >= 0 and n_conv >= 1, got n = {n}, n_conv = {n_conv}")
    x = np.atleast_2d(f.wrap(x))
    P, d = x.shape

    past = backward_orbit(f, x, n_conv)
    future = orbit(f, x, n + n_conv)
    J_past = _jacobians(f, past[:-1])
    J_future = _jacobians(f, future[:-1])

    def start(k: int) -> np.ndarray:
        return np.broadcast_to(generic_frame(d, k), (P, d, k)).copy()

    U = _push(J_future[:n], _push(J_past, start(u))[-1])
    CU = _push(J_future[:n], _push(J_past, start(c + u))[-1])
    S = _pull(J_future, start(s))[:n + 1]
    CS = _pull(J_future, start(s + c))[:n + 1]
    return OrbitFrames(points=future[:n + 1], jacobians=J_future[:n], s=S, c=center_from(CU, CS, c), u=U, cu=CU)


def estimate_unstable(f: DynSystem, x: npt.ArrayLike, n: int = DEFAULT_CONVERGENCE) -> np.ndarray:
    """Orthonormal basis (d, dim E^u) of E^u(x): a generic frame pushed forward from f^-n(x)."""
    if n < 1:
        raise ValueError(f"Need n >= 1, got {n}")
    x = np.asarray(x, dtype=np.float64)
    past = backward_orbit(f, np.atleast_2d(x), n)
    P, d = past.shape[1:]
    frame = _push(_jacobians(f, past[:-1]), np.broadcast_to(generic_frame(d, f.dims[2]), (P, d, f.dims[2])).copy())[-1]
    frame = canonical_signs(frame)
    return frame[0] if x.ndim == 1 else frame


def estimate_splitting(f: DynSystem, x: npt.ArrayLike, n: int = DEFAULT_CONVERGENCE) -> SplittingFrame:
    """
    Estimates E^s(x), E^c(x), E^u(x) and checks one-step invariance against an independent
    estimate at f(x). Frames failing the check are returned with `reliable=False` and logged.
    """
    if n < 1:
        raise ValueError(f"Need n >= 1, got {n}")
    x = f.wrap(np.asarray(x, dtype=np.float64))
    frames = transport_frames(f, np.stack([x, f.apply(x)]), 0, n)
    J = f.jacobian(x)
    residual = max(float(subspace_sine(orthonormalize(J @ E[0, 0]), E[0, 1])) for E in (frames.s, frames.c, frames.u))
    reliable = residual < RESIDUAL_TOL
    if not reliable:
        logger.warning(f"Splitting of {f.name} at {x.tolist()} is unreliable: invariance residual {residual:.3e}")
    return SplittingFrame(at=x, basis_s=canonical_signs(frames.s[0, 0]), basis_c=canonical_signs(frames.c[0, 0]),
                          basis_u=canonical_signs(frames.u[0, 0]), residual=residual, reliable=reliable)


def restricted_maps(frames: OrbitFrames, bundle: str) -> np.ndarray:
    """B_j = E(x_{j+1})^T Df(x_j) E(x_j), the one-step maps restricted to a bundle; shape (n, P, k, k)."""
    E = frames.bundle(bundle)
    return np.swapaxes(E[1:], -1, -2) @ frames.jacobians @ E[:-1]


def cumulative_log_singular(B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Logs of the smallest and largest singular values of B_{j} ... B_0 for every j.

    Args:
        B: Restricted maps of shape (n, P, k, k).

    Returns:
        log_min, log_max: Arrays of shape (n, P); entry j belongs to the (j + 1)-step product.
    """
    n, P, k, _ = B.shape
    if k == 1:
        logs = np.cumsum(np.log(np.abs(B[..., 0, 0])), axis=0)
        return logs, logs.copy()
    log_min, log_max = np.empty((n, P)), np.empty((n, P))
    product = np.broadcast_to(np.eye(k), (P, k, k)).copy()
    scale = np.zeros(P)
    for j in range(n):
        product = B[j] @ product
        norm = np.linalg.norm(product, ord=2, axis=(-2, -1))
        product = product / norm[:, None, None]
        scale += np.log(norm)
        singular = np.linalg.svd(product, compute_uv=False)
        log_min[j] = scale + np.log(singular[:, -1])
        log_max[j] = scale + np.log(singular[:, 0])
    return log_min, log_max


def restricted_log_rates(f: DynSystem, points: npt.ArrayLike, n: int,
                         n_conv: int = DEFAULT_CONVERGENCE) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Cumulative log m(Df^k|E^σ) and log ||Df^k|E^σ|| for k = 1..n over a batch of points.

    Returns:
        log_min, log_max: Arrays of shape (n, P, 3), bundles ordered s, c, u.
        residual: Worst invariance residual along each orbit, shape (P,).
    """
    if n < 1:
        raise ValueError(f"Need n >= 1, got {n}")
    frames = transport_frames(f, points, n, n_conv)
    pairs = [cumulative_log_singular(restricted_maps(frames, bundle)) for bundle in BUNDLES]
    log_min = np.stack([p[0] for p in pairs], axis=-1)
    log_max = np.stack([p[1] for p in pairs], axis=-1)
    return log_min, log_max, frames.residual_along().max(axis=0)


def restricted_rates(f: DynSystem, frame: SplittingFrame, n: int,
                     n_conv: int = DEFAULT_CONVERGENCE) -> dict[str, tuple[float, float]]:
    """
    Smallest and largest singular values of Df^n restricted to each bundle at frame.at.

    Args:
        f: The system.
        frame: A reliable frame; its base point is the start of the orbit.
        n: Number of steps.
        n_conv: Convergence length used to re-estimate the splitting along the orbit.

    Returns:
        {'s': (m, norm), 'c': (m, norm), 'u': (m, norm)}.
    """
    if not frame.reliable:
        raise UnreliableFrameError("Cannot transport an unreliable frame", frame.residual, frame.at)
    frames = transport_frames(f, frame.at, n, n_conv)
    residual = frames.residual_along()[:, 0]
    if len(residual) and residual.max() >= RESIDUAL_TOL:
        j = int(np.argmax(residual))
        raise UnreliableFrameError(f"Splitting of {f.name} is not invariant at step {j} of the orbit",
                                   float(residual[j]), frames.points[j, 0])
    rates = {}
    for bundle in BUNDLES:
        log_min, log_max = cumulative_log_singular(restricted_maps(frames, bundle))
        rates[bundle] = (float(np.exp(log_min[-1, 0])), float(np.exp(log_max[-1, 0])))
    return rates


def lattice(grid: int, d: int) -> np.ndarray:
    """Cell centers of the uniform grid^d lattice on [0, 1)^d."""
    axis = (np.arange(grid) + 0.5) / grid
    return np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)


def _certify_chunk(f: DynSystem, chunk: np.ndarray, n: int, n_conv: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return restricted_log_rates(f, chunk, n, n_conv)


def certify_ph(f: DynSystem, grid: int, n: int, n_conv: int = DEFAULT_CONVERGENCE, workers: int = 1,
               chunk_size: int = 512, show_progress: bool = False) -> PHCertificate:
    """
    Fits the six rates of partial hyperbolicity over a grid^d lattice.

    Each rate is a minimum (lambda) or maximum (mu) over the lattice of n-step geometric means;
    C is the smallest constant covering every intermediate step k <= n. The certificate is
    refused if the ordering chain of the rates fails.

    Args:
        f: The system.
        grid: Points per axis.
        n: Number of steps.
        n_conv: Convergence length of the splitting cascades.
        workers: Ray worker count.
        chunk_size: Points per work item; results do not depend on it or on `workers`.
        show_progress: Whether to show a progress bar.

    Returns:
        The certificate.
    """
    if grid < 1 or n < 1:
        raise ValueError(f"Need grid >= 1 and n >= 1, got grid = {grid}, n = {n}")
    points = lattice(grid, f.dimension)
    logger.info(f"Certifying {f.name} on {len(points)} lattice points, n = {n}")
    results = fan_out(partial(_certify_chunk, n=n, n_conv=n_conv), f, chunked(points, chunk_size), workers,
                      tqdm_desc="certify" if show_progress else None)
    log_min = np.concatenate([r[0] for r in results], axis=1)
    log_max = np.concatenate([r[1] for r in results], axis=1)
    residual = np.concatenate([r[2] for r in results])

    worst = int(np.argmax(residual))
    if residual[worst] >= RESIDUAL_TOL:
        raise UnreliableFrameError(f"Splitting of {f.name} is not invariant along the orbit", float(residual[worst]),
                                   points[worst])

    lam = np.exp(log_min[-1].min(axis=0) / n)
    mu = np.exp(log_max[-1].max(axis=0) / n)
    steps = np.arange(1, n + 1)[:, None, None]
    transient = np.maximum(steps * np.log(lam) - log_min, log_max - steps * np.log(mu))
    C = float(np.exp(max(0.0, transient.max())))
    rates = {'lambda1': float(lam[0]), 'mu1': float(mu[0]), 'lambda2': float(lam[1]), 'mu2': float(mu[1]),
             'lambda3': float(lam[2]), 'mu3': float(mu[2])}
    logger.info(f"Rates of {f.name}: " + ", ".join(f"{k} = {v:.6f}" for k, v in rates.items()) + f", C = {C:.4f}")

    argmax_norm = log_max[-1].argmax(axis=0)
    argmin_conorm = log_min[-1].argmin(axis=0)
    chain = [
        (mu[0] < lam[1], "mu1 < lambda2", argmax_norm[0]),
        (mu[1] < lam[2], "mu2 < lambda3", argmax_norm[1]),
        (mu[0] < 1.0, "mu1 < 1", argmax_norm[0]),
        (lam[2] > 1.0, "lambda3 > 1", argmin_conorm[2]),
    ]
    for holds, name, index in chain:
        if not holds:
            raise CertificateError(f"Partial hyperbolicity of {f.name} refused: {name} fails", points[index], rates)
    return PHCertificate(**rates, C=C, n_checked=len(points))
