import logging

import numpy as np
import pytest
import ray

from phdyn.config import build_system, resolve_system
from phdyn.parallel import chunked, fan_out


def _first_coordinates(system, chunk):
    return system.apply(chunk)[:, 0]


class _InlineRemote:
    def __init__(self, fn):
        self.fn = fn

    def remote(self, *args):
        return self.fn(*args)


@pytest.fixture
def system():
    return build_system(resolve_system({'kind': 'anosov_t3'}))


def test_chunked():
    chunks = chunked(np.arange(10), 4)
    assert [len(c) for c in chunks] == [4, 4, 2]
    with pytest.raises(ValueError):
        chunked(np.arange(3), 0)


def test_inline_fan_out_keeps_order(system):
    points = np.random.default_rng(0).random((7, 3))
    results = fan_out(_first_coordinates, system, chunked(points, 3))
    np.testing.assert_allclose(np.concatenate(results), system.apply(points)[:, 0])


def test_running_ray_with_other_worker_count_is_logged(system, monkeypatch, caplog):
    monkeypatch.setattr(ray, 'is_initialized', lambda: True)
    monkeypatch.setattr(ray, 'cluster_resources', lambda: {'CPU': 2.0})
    monkeypatch.setattr(ray, 'remote', _InlineRemote)
    monkeypatch.setattr(ray, 'get', lambda result: result)
    points = np.random.default_rng(1).random((5, 3))
    with caplog.at_level(logging.WARNING, logger='phdyn.parallel'):
        results = fan_out(_first_coordinates, system, chunked(points, 2), workers=4)
    assert 'ignoring workers = 4' in caplog.text
    np.testing.assert_allclose(np.concatenate(results), system.apply(points)[:, 0])
