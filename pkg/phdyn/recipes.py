"""Named presets reproducing the desk-scale checks; each is a raw config accepted by `phdyn.config.resolve`."""

import copy

from phdyn.errors import ConfigError

DA_SHIPPED = {'kind': 'da', 't_offset': 0.2}

RECIPES: dict[str, tuple[str, dict]] = {
    'AC1': ("QR Lyapunov spectrum of the linear T3 seed against its characteristic roots",
            {'system': {'kind': 'anosov_t3'}, 'task': {'name': 'spectrum', 'horizon': 10_000}}),
    'AC2': ("Partial hyperbolicity certificate of the shipped DA map on a 30^3 lattice",
            {'system': DA_SHIPPED, 'task': {'name': 'certify', 'grid': 30, 'n': 20}}),
    'AC3': ("Three fixed points of the DA map on the center leaf through p0",
            {'system': DA_SHIPPED, 'task': {'name': 'fixedpoints'}}),
    'AC4': ("DA occupation of V and the pointwise center bound on a u-segment",
            {'system': DA_SHIPPED,
             'task': {'name': 'mechanism', 'samples': 10_000, 'horizon': 2000, 'k_min': 1000}}),
    'AC5': ("Pesin-Sinai average on the linear T3 seed against Lebesgue",
            {'system': {'kind': 'anosov_t3'},
             'task': {'name': 'pesin', 'n': 200, 'grid': 20, 'max_pieces': 2048, 'orbit_length': 100_000}}),
    'AC6': ("f_epsilon fails NUE on its literal region while approaching the block",
            {'system': {'kind': 'f_epsilon', 'variant': 'single'},
             'task': {'name': 'fepsilon', 'samples': 100, 'horizon': 200, 'epsilons': [0.2, 0.1, 0.05]}}),
    'AC7': ("Physical measure counts of glued blocks and of the two-block f_epsilon family",
            {'family': [{'kind': 'glued', 'name': 'glued_1', 'k': 1},
                        {'kind': 'glued', 'name': 'glued_2', 'k': 2},
                        {'kind': 'glued', 'name': 'glued_3', 'k': 3},
                        {'kind': 'block', 'name': 'block'},
                        *[{'kind': 'f_epsilon', 'name': f"two_blocks_{epsilon}", 'variant': 'two_blocks', 'epsilon': epsilon}
                          for epsilon in (0.2, 0.1, 0.05)]],
             'task': {'name': 'scan', 'grid': 64, 'horizon': 100_000, 'expect_l': [1, 2, 3, 1, 2, 2, 2]}}),
    'AC8': ("Sequence lemma on random sequences and the alternating example",
            {'system': {'kind': 'anosov_t3'},
             'task': {'name': 'seqlemma', 'sequences': 1000, 'max_length': 600, 'N': [2, 3, 5]}}),
    'AC9': ("Super-additivity of L_n on the linear seed and on the shipped DA map",
            {'family': [{'kind': 'anosov_t3', 'name': 'anosov_t3'}, {**DA_SHIPPED, 'name': 'da'}],
             'task': {'name': 'ln', 'grid': 8, 'n': 50}}),
    'AC10': ("Center exponent and periodic fiber of the product A1 x A2",
             {'system': {'kind': 'product'},
              'task': {'name': 'product', 'samples': 100, 'horizon': 200, 'grid': 8, 'orbit_length': 3000}}),
}


def list_recipes() -> list[tuple[str, str]]:
    return [(name, description) for name, (description, _) in RECIPES.items()]


def recipe(name: str) -> dict:
    """Raw config of the named preset."""
    if name not in RECIPES:
        raise ConfigError(f"Unknown recipe {name}; choose from {list(RECIPES)}")
    return copy.deepcopy(RECIPES[name][1])
