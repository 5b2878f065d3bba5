import pytest

from phdyn.systems import (da_params, equal_blocks, make_da, make_glued, make_linear, make_linear_anosov_T3,
                           make_surrogate_block)


@pytest.fixture(scope='session')
def anosov_t3():
    system, _ = make_linear_anosov_T3()
    return system


@pytest.fixture(scope='session')
def t3_spec():
    _, spec = make_linear_anosov_T3()
    return spec


@pytest.fixture(scope='session')
def shipped_params():
    params = da_params()
    return da_params(t=params.t0 + 0.2)


@pytest.fixture(scope='session')
def da(shipped_params):
    return make_da(shipped_params, sweep_grid=12)


@pytest.fixture(scope='session')
def cat():
    return make_linear([[2, 1], [1, 1]], name='cat')


@pytest.fixture(scope='session')
def block():
    return make_surrogate_block(0.05, drift=0.5)


@pytest.fixture(scope='session')
def glued2(block):
    return make_glued(equal_blocks(block, 2))
