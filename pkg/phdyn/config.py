"""Experiment configuration: strict TOML schema, defaults, overrides, hashing and system construction."""

from functools import lru_cache
from typing import Any, Optional
import copy
import hashlib
import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from phdyn.errors import ConfigError
from phdyn.systems import (DEFAULT_BLOCK_MATRIX, BlockSpec, da_params, equal_blocks, make_da, make_f_epsilon,
                           make_glued, make_identity, make_linear, make_linear_anosov_T3, make_mixed_sign,
                           make_product_anosov, make_surrogate_block)
from phdyn.torus import DynSystem

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = 'PHDYN_OUTPUT_ROOT'
DEFAULT_OUTPUT_ROOT = 'runs'

BLOCK_DEFAULTS = {'kappa': 0.05, 'drift': 0.5, 'matrix': [list(row) for row in DEFAULT_BLOCK_MATRIX]}
BLOCK_ENTRY_DEFAULTS = {'lam': None, 'tau': None, 'inverted': False}
SYSTEM_DEFAULTS: dict[str, dict[str, Any]] = {
    'linear': {'matrix': None, 'dims': None},
    'anosov_t3': {},
    'da': {'t': None, 't_offset': None, 'delta': 0.45, 'beta': 0.75, 'alpha': 0.3, 'eta_c': None, 'L': None,
           'tau0': 0.95, 'p0': [0.0, 0.0, 0.0], 'sweep_grid': 40},
    'block': dict(BLOCK_DEFAULTS),
    'glued': {**BLOCK_DEFAULTS, 'k': 2, 'blocks': None},
    'mixed_sign': dict(BLOCK_DEFAULTS),
    'f_epsilon': {**BLOCK_DEFAULTS, 'epsilon': 0.1, 'variant': 'single', 'second_kappa': None, 'second_drift': None},
    'product': {'A1': [[3, 2], [1, 1]], 'A2': [[2, 1], [1, 1]]},
    'identity': {'d': 3},
}

TASKS = ('exponents', 'nue', 'occupation', 'gibbs', 'basins', 'certify', 'seqlemma', 'ln',
         'spectrum', 'fixedpoints', 'mechanism', 'subdivision', 'pesin', 'product', 'scan', 'fepsilon')
TASK_DEFAULTS: dict[str, Any] = {
    'name': None,
    'horizon': 200,
    'grid': 16,
    'n': 20,
    'n_conv': 60,
    'samples': 100,
    'alpha': None,
    'c0': None,
    'tol': 0.1,
    'eps_conv': 0.01,
    'L': None,
    'max_pieces': 256,
    'k_min': None,
    'segment_length': None,
    'max_n': 64,
    'sequences': 1000,
    'max_length': 600,
    'N': [2, 3, 5],
    'epsilons': [0.2, 0.1, 0.05],
    'sup_grid': 20,
    'expect_l': None,
    'orbit_length': 100_000,
    'segments': 100,
}
RUN_DEFAULTS: dict[str, Any] = {'seed': 0, 'workers': 1, 'output': None, 'show_progress': False, 'chunk_size': 512}
# run keys that never change results
UNHASHED_RUN_KEYS = ('workers', 'output', 'show_progress')


def _strict(table: dict, allowed: dict, where: str) -> dict:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"Unknown keys {unknown} in [{where}]; allowed: {sorted(allowed)}")
    return {**copy.deepcopy(allowed), **table}


def _block_entry(table: dict, where: str) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table with keys {sorted(BLOCK_ENTRY_DEFAULTS)}")
    entry = _strict(table, BLOCK_ENTRY_DEFAULTS, where)
    missing = [k for k in ('lam', 'tau') if entry[k] is None]
    if missing:
        raise ConfigError(f"[{where}] needs {missing}")
    return entry


def resolve_system(table: dict, where: str = 'system') -> dict:
    if not isinstance(table, dict) or 'kind' not in table:
        raise ConfigError(f"[{where}] needs a 'kind' key; choose from {sorted(SYSTEM_DEFAULTS)}")
    kind = table['kind']
    if kind not in SYSTEM_DEFAULTS:
        raise ConfigError(f"Unknown system kind {kind}; choose from {sorted(SYSTEM_DEFAULTS)}")
    extra = {'kind': kind, 'name': None}
    resolved = _strict({k: v for k, v in table.items()}, {**extra, **SYSTEM_DEFAULTS[kind]}, where)
    if kind == 'linear' and resolved['matrix'] is None:
        raise ConfigError(f"[{where}] of kind linear needs a matrix")
    if kind == 'glued' and resolved['blocks'] is not None:
        if not isinstance(resolved['blocks'], list) or not resolved['blocks']:
            raise ConfigError(f"[{where}].blocks must be a non-empty array of tables")
        resolved['blocks'] = [_block_entry(b, f'{where}.blocks.{i}') for i, b in enumerate(resolved['blocks'])]
    return resolved


def resolve(raw: dict) -> dict:
    """
    Validates a raw config dict and merges the defaults.

    Args:
        raw: Parsed TOML with a [system] table or a [[family]] array, a [task] and optionally a [run] table.

    Returns:
        The resolved config; every table carries every key of its schema.
    """
    unknown = sorted(set(raw) - {'system', 'family', 'task', 'run'})
    if unknown:
        raise ConfigError(f"Unknown top-level tables {unknown}")
    if ('system' in raw) == ('family' in raw):
        raise ConfigError("Give exactly one of [system] or [[family]]")
    resolved: dict[str, Any] = {}
    if 'system' in raw:
        resolved['system'] = resolve_system(raw['system'])
    else:
        if not isinstance(raw['family'], list) or not raw['family']:
            raise ConfigError("[[family]] must be a non-empty array of system tables")
        resolved['family'] = [resolve_system(t, f'family.{i}') for i, t in enumerate(raw['family'])]
    if 'task' not in raw:
        raise ConfigError("Missing [task] table")
    resolved['task'] = _strict(raw['task'], TASK_DEFAULTS, 'task')
    if resolved['task']['name'] not in TASKS:
        raise ConfigError(f"Unknown task {resolved['task']['name']}; choose from {list(TASKS)}")
    resolved['run'] = _strict(raw.get('run', {}), RUN_DEFAULTS, 'run')
    return resolved


def load(path: str) -> dict:
    try:
        with open(path, 'rb') as file:
            raw = tomllib.load(file)
    except FileNotFoundError as error:
        raise ConfigError(f"Config file {path} not found") from error
    except tomllib.TOMLDecodeError as error:
        raise ConfigError(f"Config file {path} is not valid TOML: {error}") from error
    return raw


def _parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"value = {text}")['value']
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, seed: Optional[int] = None, workers: Optional[int] = None, output: Optional[str] = None,
                    assignments: Optional[list[str]] = None) -> dict:
    """CLI overrides: --seed, --workers, --output and --set table.key=value (values parsed as TOML)."""
    raw = copy.deepcopy(raw)
    run = raw.setdefault('run', {})
    for key, value in (('seed', seed), ('workers', workers), ('output', output)):
        if value is not None:
            run[key] = value
    for assignment in assignments or []:
        target, sep, text = assignment.partition('=')
        table, dot, key = target.strip().partition('.')
        if not sep or not dot or table not in ('system', 'task', 'run'):
            raise ConfigError(f"Cannot parse override {assignment!r}; expected table.key=value")
        raw.setdefault(table, {})[key] = _parse_value(text.strip())
    return raw


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(',', ':'))


def hashed_view(resolved: dict) -> dict:
    """The resolved config without the run keys that never change results."""
    hashed = {k: v for k, v in resolved.items() if k != 'run'}
    hashed['run'] = {k: v for k, v in resolved['run'].items() if k not in UNHASHED_RUN_KEYS}
    return hashed


def config_hash(resolved: dict) -> str:
    """sha256 of the canonical JSON of `hashed_view(resolved)`."""
    return hashlib.sha256(canonical_json(hashed_view(resolved)).encode()).hexdigest()


def output_root() -> str:
    return os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)


def _block(spec: dict, kappa_key: str = 'kappa', drift_key: str = 'drift') -> DynSystem:
    kappa = spec[kappa_key] if spec.get(kappa_key) is not None else spec['kappa']
    drift = spec[drift_key] if spec.get(drift_key) is not None else spec['drift']
    return make_surrogate_block(kappa, spec['matrix'], drift=drift)


def build_system(spec: dict) -> DynSystem:
    """Builds (and caches per process) the system described by a resolved system table."""
    return _build_cached(canonical_json(spec))


@lru_cache(maxsize=32)
def _build_cached(key: str) -> DynSystem:
    spec = json.loads(key)
    kind = spec['kind']
    logger.info(f"Building system {spec.get('name') or kind}")
    if kind == 'linear':
        dims = tuple(spec['dims']) if spec['dims'] is not None else None
        system = make_linear(spec['matrix'], dims=dims)
    elif kind == 'anosov_t3':
        system, _ = make_linear_anosov_T3()
    elif kind == 'da':
        system = make_da(da_config_params(spec), sweep_grid=spec['sweep_grid'])
    elif kind == 'block':
        system = _block(spec)
    elif kind == 'glued':
        block = _block(spec)
        if spec['blocks'] is None:
            blocks = equal_blocks(block, spec['k'])
        else:
            blocks = [BlockSpec(block_map=block, lam=b['lam'], tau=b['tau'], inverted=b['inverted'])
                      for b in spec['blocks']]
        system = make_glued(blocks)
    elif kind == 'mixed_sign':
        system = make_mixed_sign(_block(spec))
    elif kind == 'f_epsilon':
        second = _block(spec, 'second_kappa', 'second_drift') if spec['variant'] == 'two_blocks' else None
        system = make_f_epsilon(spec['epsilon'], _block(spec), spec['variant'], second_block=second)
    elif kind == 'product':
        system = make_product_anosov(spec['A1'], spec['A2'])
    elif kind == 'identity':
        system = make_identity(spec['d'])
    else:
        raise ConfigError(f"Unknown system kind {kind}")
    return system.with_spec(spec)


def da_config_params(spec: dict):
    """DA parameters from a resolved `da` table; `t_offset` means t = t0 + t_offset."""
    if spec['t'] is not None and spec['t_offset'] is not None:
        raise ConfigError("Give at most one of t and t_offset for a da system")
    keys = ('delta', 'beta', 'alpha', 'eta_c', 'L', 'tau0', 'p0')
    params = da_params(t=0.0, **{k: spec[k] for k in keys})
    if spec['t_offset'] is not None:
        return da_params(t=params.t0 + spec['t_offset'], **{k: spec[k] for k in keys})
    return da_params(t=spec['t'] if spec['t'] is not None else 0.0, **{k: spec[k] for k in keys})
