"""Phase-space arithmetic on tori and the differentiable-system interface."""

from typing import Callable, Optional
import logging

import numpy as np
import numpy.typing as npt
import jax
import jax.numpy as jnp
import flax.struct

from phdyn.errors import NewtonInverseError

jax.config.update("jax_enable_x64", True)

logger = logging.getLogger(__name__)

NEWTON_MAX_ITER = 100


def _mask(d: int, periodic: Optional[tuple[bool, ...]]) -> np.ndarray:
    if periodic is None:
        return np.ones(d, dtype=bool)
    assert len(periodic) == d, f"periodic flags {periodic} do not match dimension {d}"
    return np.asarray(periodic, dtype=bool)


def wrap(raw: npt.ArrayLike, periodic: Optional[tuple[bool, ...]] = None) -> np.ndarray:
    """
    Reduces coordinates modulo 1 into [0, 1).

    Args:
        raw: A point of shape (d,) or a batch of shape (n, d).
        periodic: Per-coordinate flags; coordinates flagged False are left untouched.

    Returns:
        The wrapped coordinates, same shape as the input.
    """
    x = np.array(raw, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"Cannot wrap non-finite coordinates {x.tolist()}")
    mask = _mask(x.shape[-1], periodic)
    w = x - np.floor(x)
    w = np.where(w >= 1.0, w - 1.0, w)
    return np.where(mask, w, x)


def wrap_jnp(x: jax.Array, periodic: tuple[bool, ...]) -> jax.Array:
    """Traceable version of `wrap`, used inside map definitions."""
    w = x - jnp.floor(x)
    w = jnp.where(w >= 1.0, w - 1.0, w)
    return jnp.where(jnp.asarray(periodic), w, x)


def wrapped_difference(x: npt.ArrayLike, y: npt.ArrayLike, periodic: Optional[tuple[bool, ...]] = None) -> np.ndarray:
    """Shortest representative of x - y; every periodic component lies in [-1/2, 1/2)."""
    diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    mask = _mask(diff.shape[-1], periodic)
    return np.where(mask, diff - np.floor(diff + 0.5), diff)


def wrapped_difference_jnp(x: jax.Array, y: jax.Array, periodic: tuple[bool, ...]) -> jax.Array:
    diff = x - y
    return jnp.where(jnp.asarray(periodic), diff - jnp.floor(diff + 0.5), diff)


def distance(x: npt.ArrayLike, y: npt.ArrayLike, periodic: Optional[tuple[bool, ...]] = None) -> np.ndarray | float:
    """Wrapped Euclidean distance; at most sqrt(d)/2 on a full torus."""
    d = np.linalg.norm(wrapped_difference(x, y, periodic), axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def operator_norm(A: npt.ArrayLike) -> float:
    return float(np.linalg.svd(np.asarray(A, dtype=np.float64), compute_uv=False)[0])


def min_conorm(A: npt.ArrayLike) -> float:
    return float(np.linalg.svd(np.asarray(A, dtype=np.float64), compute_uv=False)[-1])


@flax.struct.dataclass
class BoxDomain:
    """A wrapped ball V = B(center, radius)."""
    center: np.ndarray = flax.struct.field(pytree_node=False)
    radius: float = flax.struct.field(pytree_node=False)
    periodic: Optional[tuple[bool, ...]] = flax.struct.field(pytree_node=False, default=None)

    @classmethod
    def create(cls, center: npt.ArrayLike, radius: float, periodic: Optional[tuple[bool, ...]] = None) -> 'BoxDomain':
        if not radius > 0:
            raise ValueError(f"Ball radius must be positive, got {radius}")
        return cls(center=wrap(center, periodic), radius=float(radius), periodic=periodic)

    def contains(self, x: npt.ArrayLike) -> np.ndarray:
        return np.asarray(distance(x, self.center, self.periodic) < self.radius)


@flax.struct.dataclass
class DynSystem:
    """
    A differentiable self-map of T^d or of [0,1] x T^(d-1).

    `map_fn` and `inverse_fn` act on a single point and are written with jax.numpy, so the
    Jacobian comes from forward-mode differentiation. Batched and jitted versions are built
    once in `create`. Systems without a closed-form inverse fall back on `newton_inverse`.
    """
    name: str = flax.struct.field(pytree_node=False)
    dimension: int = flax.struct.field(pytree_node=False)
    periodic: tuple[bool, ...] = flax.struct.field(pytree_node=False)
    dims: tuple[int, int, int] = flax.struct.field(pytree_node=False)
    linear_part: np.ndarray = flax.struct.field(pytree_node=False)
    params: dict = flax.struct.field(pytree_node=False)
    map_fn: Callable = flax.struct.field(pytree_node=False)
    inverse_fn: Optional[Callable] = flax.struct.field(pytree_node=False)
    batch_apply: Callable = flax.struct.field(pytree_node=False)
    batch_jacobian: Callable = flax.struct.field(pytree_node=False)
    batch_inverse: Optional[Callable] = flax.struct.field(pytree_node=False)
    spec: Optional[dict] = flax.struct.field(pytree_node=False, default=None)

    @classmethod
    def create(cls, name: str, map_fn: Callable, linear_part: npt.ArrayLike, dims: tuple[int, int, int],
               inverse_fn: Optional[Callable] = None, periodic: Optional[tuple[bool, ...]] = None,
               params: Optional[dict] = None) -> 'DynSystem':
        linear_part = np.asarray(linear_part, dtype=np.float64)
        d = linear_part.shape[0]
        assert sum(dims) == d, f"bundle dimensions {dims} do not add up to {d}"
        periodic = tuple(periodic) if periodic is not None else (True,) * d
        return cls(
            name=name,
            dimension=d,
            periodic=periodic,
            dims=tuple(dims),
            linear_part=linear_part,
            params=dict(params or {}),
            map_fn=map_fn,
            inverse_fn=inverse_fn,
            batch_apply=jax.jit(jax.vmap(map_fn)),
            batch_jacobian=jax.jit(jax.vmap(jax.jacfwd(map_fn))),
            batch_inverse=jax.jit(jax.vmap(inverse_fn)) if inverse_fn is not None else None,
        )

    def with_spec(self, spec: dict) -> 'DynSystem':
        return self.replace(spec=spec)

    def _batched(self, fn: Callable, x: npt.ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return np.array(fn(x[None]))[0]
        return np.array(fn(x))

    def apply(self, x: npt.ArrayLike) -> np.ndarray:
        return self._batched(self.batch_apply, x)

    def jacobian(self, x: npt.ArrayLike) -> np.ndarray:
        return self._batched(self.batch_jacobian, x)

    def inverse(self, y: npt.ArrayLike) -> np.ndarray:
        if self.batch_inverse is not None:
            return self._batched(self.batch_inverse, y)
        return newton_inverse(self, y)

    def distance(self, x: npt.ArrayLike, y: npt.ArrayLike) -> np.ndarray | float:
        return distance(x, y, self.periodic)

    def wrap(self, x: npt.ArrayLike) -> np.ndarray:
        return wrap(x, self.periodic)


def newton_inverse(f: DynSystem, y: npt.ArrayLike, guess: Optional[npt.ArrayLike] = None,
                   tol: float = 1e-12, max_iter: int = NEWTON_MAX_ITER) -> np.ndarray:
    """
    Solves f(x) = y by Newton's method on the wrapped residual.

    Args:
        f: The system to invert.
        y: Target point (d,) or batch (n, d).
        guess: Initial guess; defaults to the exact inverse of the linear part applied to y.
        tol: Residual tolerance in wrapped distance.
        max_iter: Iteration cap.

    Returns:
        The preimage(s), same shape as y.
    """
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    if guess is None:
        x = wrap(y @ np.linalg.inv(f.linear_part).T, f.periodic)
    else:
        x = np.atleast_2d(np.array(guess, dtype=np.float64))
    residual = np.full(len(y), np.inf)
    for _ in range(max_iter):
        r = wrapped_difference(f.apply(x), y, f.periodic)
        residual = np.linalg.norm(r, axis=-1)
        active = residual >= tol
        if not active.any():
            return x[0] if single else x
        step = np.linalg.solve(f.jacobian(x), r[..., None])[..., 0]
        candidate = wrap(x - step, f.periodic)
        # backtrack where the full step increases the residual
        for _ in range(10):
            worse = np.linalg.norm(wrapped_difference(f.apply(candidate), y, f.periodic), axis=-1) > residual
            if not (worse & active).any():
                break
            step = np.where(worse[:, None], 0.5 * step, step)
            candidate = wrap(x - step, f.periodic)
        x = np.where(active[:, None], candidate, x)
    raise NewtonInverseError(f"Newton inverse of {f.name} did not converge in {max_iter} steps",
                             residual=float(residual.max()))


def orbit(f: DynSystem, x: npt.ArrayLike, n: int) -> np.ndarray:
    """Forward orbit x, f(x), ..., f^n(x); shape (n + 1, d) or (n + 1, batch, d)."""
    x = np.asarray(x, dtype=np.float64)
    points = np.atleast_2d(x)
    result = np.empty((n + 1,) + points.shape)
    result[0] = points
    for j in range(n):
        points = f.apply(points)
        result[j + 1] = points
    return result[:, 0] if x.ndim == 1 else result


def backward_orbit(f: DynSystem, x: npt.ArrayLike, n: int) -> np.ndarray:
    """Backward orbit ordered in time: f^-n(x), ..., f^-1(x), x."""
    x = np.asarray(x, dtype=np.float64)
    points = np.atleast_2d(x)
    result = np.empty((n + 1,) + points.shape)
    result[n] = points
    for j in range(n, 0, -1):
        points = f.inverse(points)
        result[j - 1] = points
    return result[:, 0] if x.ndim == 1 else result


def scan_orbit(f: DynSystem, x: npt.ArrayLike, n: int) -> np.ndarray:
    """f(x), ..., f^n(x) computed in one `jax.lax.scan`; shape (n, d) or (n, batch, d)."""
    x = np.asarray(x, dtype=np.float64)
    step = jax.vmap(f.map_fn) if x.ndim == 2 else f.map_fn

    def body(point, _):
        image = step(point)
        return image, image

    _, points = jax.jit(lambda p: jax.lax.scan(body, p, None, length=n))(jnp.asarray(x))
    return np.array(points)
