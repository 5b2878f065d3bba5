"""Constructors for the concrete diffeomorphism families: linear Anosov, DA, DHP blocks, products."""

from typing import Optional, Sequence
import itertools
import logging

import numpy as np
import numpy.typing as npt
import jax
import jax.numpy as jnp
import flax.struct
from scipy import optimize

from phdyn.errors import ConstructionError
from phdyn.torus import DynSystem, BoxDomain, wrap_jnp, wrapped_difference_jnp

logger = logging.getLogger(__name__)

T3_MATRIX = ((0, 0, 1), (1, 0, -6), (0, 1, 5))
DEFAULT_BLOCK_MATRIX = ((2, 1), (1, 1))
SHIPPED_T_MARGIN = 0.3
BOUNDARY_TOL = 1e-10
DHP_PERIODIC = (False, True, True)


@flax.struct.dataclass
class LinearAnosovSpec:
    matrix: np.ndarray = flax.struct.field(pytree_node=False)
    eigenvalues: np.ndarray = flax.struct.field(pytree_node=False)
    eigenbasis: np.ndarray = flax.struct.field(pytree_node=False)  # unit eigenvectors as columns

    @property
    def unstable_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])


def linear_anosov_spec(matrix: npt.ArrayLike) -> LinearAnosovSpec:
    """Validates an integer hyperbolic automorphism and records its sorted real spectrum."""
    A = np.asarray(matrix, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConstructionError(f"Expected a square matrix, got shape {A.shape}")
    if not np.allclose(A, np.round(A)):
        raise ConstructionError(f"Matrix {A.tolist()} is not an integer matrix")
    if abs(round(np.linalg.det(A))) != 1:
        raise ConstructionError(f"Matrix {A.tolist()} has |det| != 1")
    eigenvalues, vectors = np.linalg.eig(A)
    if np.max(np.abs(eigenvalues.imag)) > 1e-9:
        raise ConstructionError(f"Matrix {A.tolist()} has non-real eigenvalues {eigenvalues.tolist()}")
    eigenvalues, vectors = eigenvalues.real, vectors.real
    order = np.argsort(eigenvalues)
    eigenvalues, vectors = eigenvalues[order], vectors[:, order]
    if np.any(eigenvalues <= 0):
        raise ConstructionError(f"Eigenvalues {eigenvalues.tolist()} are not all positive")
    if np.any(np.abs(eigenvalues - 1.0) < 1e-9):
        raise ConstructionError(f"Matrix {A.tolist()} has an eigenvalue equal to 1")
    if np.any(np.diff(eigenvalues) < 1e-9):
        raise ConstructionError(f"Eigenvalues {eigenvalues.tolist()} are not distinct")
    vectors = vectors / np.linalg.norm(vectors, axis=0)
    signs = np.sign(vectors[np.argmax(np.abs(vectors), axis=0), np.arange(len(eigenvalues))])
    return LinearAnosovSpec(matrix=np.round(A).astype(np.int64), eigenvalues=eigenvalues, eigenbasis=vectors * signs)


def bisect_spectrum(matrix: npt.ArrayLike, samples: int = 8192) -> np.ndarray:
    """Isolates the real roots of the characteristic polynomial by sign changes and bisection."""
    coefficients = np.poly(np.asarray(matrix, dtype=np.float64))
    bound = 1.0 + np.max(np.abs(coefficients[1:]))
    grid = np.linspace(-bound, bound, samples)
    values = np.polyval(coefficients, grid)
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(optimize.bisect(lambda s: np.polyval(coefficients, s), a, b, xtol=1e-15))
    return np.array(sorted(roots))


def make_linear(matrix: npt.ArrayLike, name: str = 'linear', dims: Optional[tuple[int, int, int]] = None,
                params: Optional[dict] = None) -> DynSystem:
    """Toral automorphism x -> A x mod 1 with its exact integer inverse."""
    A = np.asarray(matrix, dtype=np.float64)
    d = A.shape[0]
    if dims is None:
        dims = (1, d - 2, 1) if d >= 3 else (1, 0, 1)
    A_inv = np.linalg.inv(A)
    if abs(round(np.linalg.det(A))) == 1 and np.allclose(A, np.round(A)):
        A_inv = np.round(A_inv)
    periodic = (True,) * d
    A_j, A_inv_j = jnp.asarray(A), jnp.asarray(A_inv)

    def map_fn(x):
        return wrap_jnp(A_j @ x, periodic)

    def inverse_fn(y):
        return wrap_jnp(A_inv_j @ y, periodic)

    return DynSystem.create(name=name, map_fn=map_fn, inverse_fn=inverse_fn, linear_part=A, dims=dims,
                            periodic=periodic, params={'matrix': A.tolist(), **(params or {})})


def make_identity(d: int = 3) -> DynSystem:
    return make_linear(np.eye(d), name='identity')


def make_linear_anosov_T3() -> tuple[DynSystem, LinearAnosovSpec]:
    """The companion matrix of t^3 - 5t^2 + 6t - 1, the seed of the DA family."""
    spec = linear_anosov_spec(T3_MATRIX)
    check_da_eigen_chain(spec)
    return make_linear(spec.matrix, name='anosov_t3', dims=(1, 1, 1)), spec


def check_da_eigen_chain(spec: LinearAnosovSpec) -> None:
    if len(spec.eigenvalues) != 3:
        raise ConstructionError(f"DA seed must be 3x3, got spectrum {spec.eigenvalues.tolist()}")
    lam_s, lam_c, lam_u = spec.eigenvalues
    if not (lam_s < 1 / 3 < 1 < lam_c < 3 < lam_u):
        raise ConstructionError(f"Spectrum {spec.eigenvalues.tolist()} violates lambda_s < 1/3 < 1 < lambda_c < 3 < lambda_u")


# --- derived-from-Anosov family -------------------------------------------------------------

def smooth_bump(q):
    """C^2 bump: 1 on [0, 1/2], 0 on [1, inf), quintic smoothstep in between."""
    u = jnp.clip(2.0 * q - 1.0, 0.0, 1.0)
    return 1.0 - u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)


@flax.struct.dataclass
class DAParams:
    base: LinearAnosovSpec = flax.struct.field(pytree_node=False)
    t: float = flax.struct.field(pytree_node=False)
    delta: float = flax.struct.field(pytree_node=False)
    beta: float = flax.struct.field(pytree_node=False)
    alpha: float = flax.struct.field(pytree_node=False)
    eta_c: float = flax.struct.field(pytree_node=False)
    L: float = flax.struct.field(pytree_node=False)
    tau0: float = flax.struct.field(pytree_node=False)
    p0: tuple[float, ...] = flax.struct.field(pytree_node=False)

    @property
    def lambda_c(self) -> float:
        return float(self.base.eigenvalues[1])

    @property
    def t0(self) -> float:
        """Parameter where the center eigenvalue at p0 crosses 1."""
        return self.lambda_c - 1.0

    @property
    def t_max(self) -> float:
        return self.t0 + SHIPPED_T_MARGIN

    @property
    def nominal_rate(self) -> float:
        return 3.0 ** (1.0 - self.alpha) * (1.0 - self.beta) ** self.alpha

    @property
    def effective_rate(self) -> float:
        return self.eta_c ** (1.0 - self.alpha) * (1.0 - self.beta) ** self.alpha

    @property
    def V(self) -> BoxDomain:
        return BoxDomain.create(self.p0, self.delta)

    def to_dict(self) -> dict:
        return {'t': self.t, 'delta': self.delta, 'beta': self.beta, 'alpha': self.alpha, 'eta_c': self.eta_c,
                'L': self.L, 'tau0': self.tau0, 'p0': list(self.p0)}


def da_params(t: float = 0.0, delta: float = 0.45, beta: float = 0.75, alpha: float = 0.3,
              eta_c: Optional[float] = None, L: Optional[float] = None, tau0: float = 0.95,
              p0: Sequence[float] = (0.0, 0.0, 0.0), base: Optional[LinearAnosovSpec] = None) -> DAParams:
    """Builds validated DA parameters; eta_c defaults to lambda_c and L to 2 * delta."""
    base = base if base is not None else linear_anosov_spec(T3_MATRIX)
    check_da_eigen_chain(base)
    params = DAParams(base=base, t=float(t), delta=float(delta), beta=float(beta), alpha=float(alpha),
                      eta_c=float(eta_c) if eta_c is not None else float(base.eigenvalues[1]),
                      L=float(L) if L is not None else 2.0 * float(delta), tau0=float(tau0),
                      p0=tuple(float(c) for c in p0))
    if not 0.0 < params.delta < 0.5:
        raise ConstructionError(f"delta must lie in (0, 1/2), got {params.delta}")
    if not (0.0 < params.beta < 1.0 and 0.0 < params.alpha < 1.0 and 0.0 < params.tau0 < 1.0):
        raise ConstructionError(f"beta, alpha and tau0 must lie in (0, 1), got {params.beta}, {params.alpha}, {params.tau0}")
    if not 1.0 < params.eta_c <= params.lambda_c + 1e-12:
        raise ConstructionError(f"eta_c must lie in (1, lambda_c = {params.lambda_c:.6f}], got {params.eta_c}")
    if params.nominal_rate <= 1.0:
        raise ConstructionError(f"3^(1-alpha) (1-beta)^alpha = {params.nominal_rate:.6f} is not > 1")
    if not 0.0 <= params.t <= params.t_max + 1e-12:
        raise ConstructionError(f"t = {params.t} outside the shipped range [0, {params.t_max:.6f}]")
    if params.L <= 0:
        raise ConstructionError(f"L must be positive, got {params.L}")
    image = np.asarray(base.matrix, dtype=np.float64) @ np.asarray(params.p0)
    if np.max(np.abs(image - np.asarray(params.p0) - np.round(image - np.asarray(params.p0)))) > 1e-12:
        raise ConstructionError(f"p0 = {list(params.p0)} is not a fixed point of the linear map")
    return params


def make_da(params: DAParams, sweep_grid: int = 40, min_singular: float = 0.01) -> DynSystem:
    """
    The DA deformation f_t(x) = f_0(x) - t rho(|x - p0| / delta) sin(2 pi c(x)) / (2 pi) v_c.

    Args:
        params: Validated DA parameters.
        sweep_grid: Points per axis of the injectivity sweep (0 disables it).
        min_singular: Smallest admissible singular value of Df_t on the sweep.

    Returns:
        The DA system; it has no closed-form inverse and inverts by Newton iteration.
    """
    base = params.base
    A = jnp.asarray(base.matrix, dtype=jnp.float64)
    v_c = jnp.asarray(base.eigenbasis[:, 1])
    center_row = jnp.asarray(np.linalg.inv(base.eigenbasis)[1])
    p0 = jnp.asarray(params.p0)
    periodic = (True, True, True)
    t, delta = params.t, params.delta

    def map_fn(x):
        d = wrapped_difference_jnp(x, p0, periodic)
        r2 = jnp.dot(d, d)
        r = jnp.where(r2 > 0.0, jnp.sqrt(jnp.where(r2 > 0.0, r2, 1.0)), 0.0)
        c = jnp.dot(center_row, d)
        push = t * smooth_bump(r / delta) * jnp.sin(2.0 * jnp.pi * c) / (2.0 * jnp.pi)
        return wrap_jnp(A @ x - push * v_c, periodic)

    system = DynSystem.create(name='da', map_fn=map_fn, linear_part=np.asarray(base.matrix, dtype=np.float64),
                              dims=(1, 1, 1), periodic=periodic, params=params.to_dict())
    if sweep_grid > 0 and t > 0:
        axis = (np.arange(sweep_grid) + 0.5) / sweep_grid
        grid = np.stack(np.meshgrid(axis, axis, axis, indexing='ij'), axis=-1).reshape(-1, 3)
        singular = np.linalg.svd(system.jacobian(grid), compute_uv=False)[:, -1]
        worst = int(np.argmin(singular))
        if singular[worst] <= min_singular:
            raise ConstructionError(f"DA map at t = {t} fails the injectivity sweep: min singular value "
                                    f"{singular[worst]:.3e} at {grid[worst].tolist()}")
        logger.info(f"DA injectivity sweep on {sweep_grid}^3 points: min singular value = {singular[worst]:.4f}")
    return system


def da_center_fixed_points(params: DAParams, samples: int = 20_000) -> tuple[np.ndarray, np.ndarray]:
    """
    Fixed points of the DA map on the center leaf through p0, by 1-D root isolation.

    On the leaf p0 + s v_c the map reduces to h(s) = lambda_c s - t rho(|s|/delta) sin(2 pi s)/(2 pi).

    Returns:
        offsets: Sorted leaf coordinates s of the fixed points (0 is always one of them).
        derivatives: h'(s) at each of them, the center derivative of the map.
    """
    lam_c, t, delta = params.lambda_c, params.t, params.delta

    def h(s):
        return lam_c * s - t * smooth_bump(jnp.abs(s) / delta) * jnp.sin(2.0 * jnp.pi * s) / (2.0 * jnp.pi)

    def phi(s: float) -> float:
        return float(h(s)) - s

    grid = delta * np.arange(1, samples + 1) / samples
    values = np.array(jax.vmap(h)(jnp.asarray(grid))) - grid
    positive = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if fa == 0.0:
            positive.append(a)
        elif fa * fb < 0:
            positive.append(optimize.brentq(phi, a, b, xtol=1e-15, rtol=1e-15))
    offsets = np.array(sorted([-s for s in positive] + [0.0] + positive))
    dh = jax.grad(h)
    derivatives = np.array([float(dh(s)) for s in offsets])
    return offsets, derivatives


def da_leaf_point(params: DAParams, s: float) -> np.ndarray:
    point = np.asarray(params.p0) + s * params.base.eigenbasis[:, 1]
    return point - np.floor(point)


# --- DHP blocks and gluing -------------------------------------------------------------------

def l_squeeze(lam: float, tau: float, p: npt.ArrayLike) -> np.ndarray:
    """Squeezing and sliding map L_{lam,tau}(x, y, z) = (lam x + tau, y, z)."""
    if not 0.0 < lam <= 1.0 or not -1e-12 <= tau <= 1.0 - lam + 1e-12:
        raise ValueError(f"Invalid squeeze parameters lam = {lam}, tau = {tau}")
    q = np.array(p, dtype=np.float64)
    q[..., 0] = lam * q[..., 0] + tau
    return q


def l_squeeze_inverse(lam: float, tau: float, p: npt.ArrayLike) -> np.ndarray:
    q = np.array(p, dtype=np.float64)
    q[..., 0] = (q[..., 0] - tau) / lam
    return q


def make_surrogate_block(kappa: float, A: npt.ArrayLike = DEFAULT_BLOCK_MATRIX, drift: float = 0.0,
                         newton_steps: int = 40) -> DynSystem:
    """
    Surrogate DHP block g(x, y, z) = (x + kappa sin(2 pi x) (drift + cos(2 pi y)), A(y, z)) on [0,1] x T^2.

    It fixes both boundary tori, where it equals (x, A(y, z)), and reduces to I x A at kappa = 0.
    It is not volume preserving; its center exponents are measured, never assumed.
    """
    spec = linear_anosov_spec(A)
    if spec.matrix.shape != (2, 2):
        raise ConstructionError(f"Block base must be a 2x2 Anosov matrix, got shape {spec.matrix.shape}")
    if kappa < 0 or 1.0 - 2.0 * np.pi * kappa * (1.0 + abs(drift)) <= 0:
        raise ConstructionError(f"kappa = {kappa} with drift = {drift} breaks injectivity in x "
                                f"(need 1 - 2 pi kappa (1 + |drift|) > 0)")
    B = jnp.asarray(spec.matrix, dtype=jnp.float64)
    B_inv = jnp.asarray(np.round(np.linalg.inv(spec.matrix)))

    def map_fn(p):
        x, yz = p[0], p[1:]
        x_new = x + kappa * jnp.sin(2.0 * jnp.pi * x) * (drift + jnp.cos(2.0 * jnp.pi * yz[0]))
        return jnp.concatenate([x_new[None], wrap_jnp(B @ yz, (True, True))])

    def inverse_fn(q):
        yz = wrap_jnp(B_inv @ q[1:], (True, True))
        forcing = drift + jnp.cos(2.0 * jnp.pi * yz[0])

        def newton_step(_, x):
            residual = x + kappa * jnp.sin(2.0 * jnp.pi * x) * forcing - q[0]
            slope = 1.0 + 2.0 * jnp.pi * kappa * jnp.cos(2.0 * jnp.pi * x) * forcing
            return x - residual / slope

        x = jax.lax.fori_loop(0, newton_steps, newton_step, q[0])
        return jnp.concatenate([x[None], yz])

    linear_part = np.eye(3)
    linear_part[1:, 1:] = spec.matrix
    block = DynSystem.create(name='block', map_fn=map_fn, inverse_fn=inverse_fn, linear_part=linear_part,
                             dims=(1, 1, 1), periodic=DHP_PERIODIC,
                             params={'kappa': kappa, 'drift': drift, 'matrix': spec.matrix.tolist()})
    yz = _boundary_samples()
    for side in (0.0, 1.0):
        image = block.apply(np.column_stack([np.full(len(yz), side), yz]))
        assert np.max(np.abs(image[:, 0] - side)) < BOUNDARY_TOL, f"block moves the boundary torus x = {side}"
    return block


def _boundary_samples(n: int = 64) -> np.ndarray:
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    k = np.arange(n)
    return np.column_stack([(k + 0.5) / n, (k * golden) % 1.0])


@flax.struct.dataclass
class BlockSpec:
    """One conjugated block L_{lam,tau} g L^-1 of a gluing; block_map None means the literal (x, A(y,z))."""
    block_map: Optional[DynSystem] = flax.struct.field(pytree_node=False)
    lam: float = flax.struct.field(pytree_node=False)
    tau: float = flax.struct.field(pytree_node=False)
    inverted: bool = flax.struct.field(pytree_node=False, default=False)
    matrix: Optional[tuple] = flax.struct.field(pytree_node=False, default=None)

    def forward_fn(self):
        if self.block_map is None:
            B = jnp.asarray(self.matrix, dtype=jnp.float64)
            return lambda p: jnp.concatenate([p[:1], wrap_jnp(B @ p[1:], (True, True))])
        return self.block_map.inverse_fn if self.inverted else self.block_map.map_fn

    def backward_fn(self):
        if self.block_map is None:
            B_inv = jnp.asarray(np.round(np.linalg.inv(np.asarray(self.matrix, dtype=np.float64))))
            return lambda p: jnp.concatenate([p[:1], wrap_jnp(B_inv @ p[1:], (True, True))])
        return self.block_map.map_fn if self.inverted else self.block_map.inverse_fn


def _conjugate(fn, lam: float, tau: float, literal: bool):
    if literal:
        return lambda p: wrap_jnp(fn(p), (True, True, True))

    def conjugated(p):
        q = fn(p.at[0].set((p[0] - tau) / lam))
        return wrap_jnp(q.at[0].set(lam * q[0] + tau), (True, True, True))

    return conjugated


def _piecewise(branches, starts: np.ndarray, ends: np.ndarray):
    def piecewise(p):
        conditions = [(p[0] >= a) & (p[0] < b) for a, b in zip(starts, ends)]
        conditions[-1] = p[0] >= starts[-1]
        return jnp.select(conditions, [branch(p) for branch in branches], default=branches[-1](p))

    return piecewise


def make_glued(blocks: Sequence[BlockSpec], name: str = 'glued', match_boundaries: bool = True) -> DynSystem:
    """
    Glues conjugated blocks f|[tau, tau + lam) = L_{lam,tau} g L_{lam,tau}^-1 into a map of T^3.

    The block intervals must tile [0, 1) and every block must restrict to the same (x, A(y,z))
    on its boundary tori, so the glued map is continuous across interfaces. `match_boundaries=False`
    skips the second check and lets the interfaces become discontinuities.
    """
    if not blocks:
        raise ConstructionError("Cannot glue an empty list of blocks")
    blocks = sorted(blocks, key=lambda b: b.tau)
    edge = 0.0
    for block in blocks:
        if not 0.0 < block.lam <= 1.0:
            raise ConstructionError(f"Block width {block.lam} outside (0, 1]")
        if abs(block.tau - edge) > 1e-12:
            raise ConstructionError(f"Block intervals do not tile [0, 1): gap or overlap at x = {edge}")
        edge = block.tau + block.lam
    if abs(edge - 1.0) > 1e-12:
        raise ConstructionError(f"Block intervals end at {edge}, not at 1")

    yz = _boundary_samples()
    reference = None
    for i, block in enumerate(blocks):
        forward = jax.vmap(block.forward_fn())
        for side in (0.0, 1.0):
            image = np.asarray(forward(jnp.asarray(np.column_stack([np.full(len(yz), side), yz]))))
            if np.max(np.abs(image[:, 0] - side)) > BOUNDARY_TOL:
                raise ConstructionError(f"Block {i} does not fix the boundary torus x = {side}")
            reference = image[:, 1:] if reference is None else reference
            mismatch = np.abs(image[:, 1:] - reference)
            if match_boundaries and np.max(np.minimum(mismatch, 1.0 - mismatch)) > BOUNDARY_TOL:
                raise ConstructionError(f"Block {i} has a boundary map different from the other blocks")

    starts = np.array([b.tau for b in blocks])
    ends = starts + np.array([b.lam for b in blocks])
    forward = [_conjugate(b.forward_fn(), b.lam, b.tau, b.block_map is None) for b in blocks]
    backward = [_conjugate(b.backward_fn(), b.lam, b.tau, b.block_map is None) for b in blocks]
    first = next((b for b in blocks if b.block_map is not None), None)
    matrix = np.asarray(first.block_map.params['matrix'] if first is not None else blocks[0].matrix, dtype=np.float64)
    linear_part = np.eye(3)
    linear_part[1:, 1:] = matrix
    layout = [{'lam': b.lam, 'tau': b.tau, 'inverted': b.inverted, 'literal': b.block_map is None} for b in blocks]
    return DynSystem.create(name=name, map_fn=_piecewise(forward, starts, ends),
                            inverse_fn=_piecewise(backward, starts, ends), linear_part=linear_part,
                            dims=(1, 1, 1), params={'blocks': layout})


def equal_blocks(block: DynSystem, k: int) -> list[BlockSpec]:
    if k < 1:
        raise ValueError(f"Need at least one block, got k = {k}")
    return [BlockSpec(block_map=block, lam=1.0 / k, tau=i / k) for i in range(k)]


def make_mixed_sign(block: DynSystem) -> DynSystem:
    """g on [0, 1/3) and g^-1 on [1/3, 1): the two blocks carry opposite center behaviour."""
    return make_glued([BlockSpec(block_map=block, lam=1.0 / 3.0, tau=0.0),
                       BlockSpec(block_map=block, lam=2.0 / 3.0, tau=1.0 / 3.0, inverted=True)],
                      name='mixed_sign', match_boundaries=False)


def make_f_epsilon(epsilon: float, block: DynSystem, variant: str = 'single',
                   second_block: Optional[DynSystem] = None) -> DynSystem:
    """
    The f_epsilon family: the block squeezed onto [0, 1 - epsilon), and on [1 - epsilon, 1) either the
    literal product (x, A(y, z)) (variant 'single') or a second squeezed block (variant 'two_blocks').
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    head = BlockSpec(block_map=block, lam=1.0 - epsilon, tau=0.0)
    if variant == 'single':
        tail = BlockSpec(block_map=None, lam=epsilon, tau=1.0 - epsilon, matrix=tuple(map(tuple, block.params['matrix'])))
    elif variant == 'two_blocks':
        tail = BlockSpec(block_map=second_block if second_block is not None else block, lam=epsilon, tau=1.0 - epsilon)
    else:
        raise ValueError(f"Unknown f_epsilon variant {variant}")
    system = make_glued([head, tail], name=f'f_epsilon_{variant}')
    return system.replace(params={**system.params, 'epsilon': epsilon, 'variant': variant})


# --- product example -------------------------------------------------------------------------

def make_product_anosov(A1: npt.ArrayLike, A2: npt.ArrayLike) -> DynSystem:
    """
    f = A1 x A2 on T^4 with E^u = E^u_1, E^c = E^u_2 and E^s = E^s_1 + E^s_2.

    Requires the unstable eigenvalues to satisfy lambda_1 > lambda_2 > 1.
    """
    spec1, spec2 = linear_anosov_spec(A1), linear_anosov_spec(A2)
    if spec1.matrix.shape != (2, 2) or spec2.matrix.shape != (2, 2):
        raise ConstructionError("Product example needs two 2x2 matrices")
    lam1, lam2 = spec1.unstable_eigenvalue, spec2.unstable_eigenvalue
    if not lam1 > lam2 + 1e-12 or not lam2 > 1.0:
        raise ConstructionError(f"Product example needs lambda_1 > lambda_2 > 1, got {lam1:.6f} and {lam2:.6f}")
    matrix = np.zeros((4, 4))
    matrix[:2, :2] = spec1.matrix
    matrix[2:, 2:] = spec2.matrix
    e_u = np.concatenate([spec1.eigenbasis[:, 1], np.zeros(2)])
    e_c = np.concatenate([np.zeros(2), spec2.eigenbasis[:, 1]])
    e_s = np.column_stack([np.concatenate([spec1.eigenbasis[:, 0], np.zeros(2)]),
                           np.concatenate([np.zeros(2), spec2.eigenbasis[:, 0]])])
    return make_linear(matrix, name='product', dims=(2, 1, 1),
                       params={'lambda_1': lam1, 'lambda_2': lam2, 'E_u': e_u.tolist(), 'E_c': e_c.tolist(),
                               'E_s': e_s.T.tolist()})


def periodic_points(matrix: npt.ArrayLike, period: int, max_candidates: int = 2_000_000) -> np.ndarray:
    """
    All points of period dividing `period` of an integer automorphism, enumerated exactly.

    They are the solutions of (A^p - I) x = 0 mod 1, i.e. x = v / D with D = |det(A^p - I)|.
    """
    A = np.round(np.asarray(matrix, dtype=np.float64)).astype(np.int64)
    d = A.shape[0]
    M = np.linalg.matrix_power(A, period) - np.eye(d, dtype=np.int64)
    D = abs(int(round(np.linalg.det(M))))
    if D == 0:
        raise ValueError(f"A^{period} - I is singular; periodic points are not isolated")
    if D ** d > max_candidates:
        raise ValueError(f"Too many candidates ({D}^{d}) for period {period}")
    found = []
    for chunk in _lattice_chunks(D, d):
        hits = np.all((chunk @ M.T) % D == 0, axis=1)
        found.append(chunk[hits])
    return np.concatenate(found).astype(np.float64) / D


def _lattice_chunks(D: int, d: int, rows: int = 65_536):
    batch = []
    for v in itertools.product(range(D), repeat=d):
        batch.append(v)
        if len(batch) == rows:
            yield np.array(batch, dtype=np.int64)
            batch = []
    if batch:
        yield np.array(batch, dtype=np.int64)
