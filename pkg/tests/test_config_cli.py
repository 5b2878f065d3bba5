import json
import os

import numpy as np
import pytest

from phdyn.cli import EXIT_CONFIG, execute, main
from phdyn.config import apply_overrides, config_hash, resolve
from phdyn.errors import ConfigError
from phdyn.io import write_csv, write_ppm
from phdyn.recipes import list_recipes, recipe

SEQLEMMA = {'system': {'kind': 'anosov_t3'}, 'task': {'name': 'seqlemma', 'sequences': 20, 'max_length': 60}}


def test_resolve_merges_defaults():
    c = resolve(SEQLEMMA)
    assert c['task']['N'] == [2, 3, 5]
    assert c['run']['seed'] == 0
    assert c['system']['name'] is None


@pytest.mark.parametrize('raw', [
    {'system': {'kind': 'anosov_t3'}, 'task': {'name': 'seqlemma', 'bogus': 1}},
    {'system': {'kind': 'anosov_t3', 'delta': 0.1}, 'task': {'name': 'seqlemma'}},
    {'system': {'kind': 'nope'}, 'task': {'name': 'seqlemma'}},
    {'system': {'kind': 'anosov_t3'}, 'task': {'name': 'nope'}},
    {'system': {'kind': 'anosov_t3'}, 'family': [{'kind': 'da'}], 'task': {'name': 'ln'}},
    {'system': {'kind': 'linear'}, 'task': {'name': 'spectrum'}},
    {'task': {'name': 'seqlemma'}},
])
def test_resolve_rejects(raw):
    with pytest.raises(ConfigError):
        resolve(raw)


def test_overrides_and_hash():
    raw = apply_overrides(SEQLEMMA, seed=3, workers=4, assignments=['task.N=[2, 4]', 'task.sequences=7'])
    c = resolve(raw)
    assert c['run']['seed'] == 3 and c['run']['workers'] == 4
    assert c['task']['N'] == [2, 4] and c['task']['sequences'] == 7
    assert SEQLEMMA['task'] == {'name': 'seqlemma', 'sequences': 20, 'max_length': 60}
    same = resolve(apply_overrides(raw, workers=1, output='elsewhere'))
    assert config_hash(same) == config_hash(c)
    assert config_hash(resolve(apply_overrides(raw, seed=4))) != config_hash(c)
    with pytest.raises(ConfigError):
        apply_overrides(SEQLEMMA, assignments=['sequences=3'])


def test_recipes():
    assert [name for name, _ in list_recipes()] == [f"AC{i}" for i in range(1, 11)]
    for name, _ in list_recipes():
        resolve(recipe(name))
    with pytest.raises(ConfigError):
        recipe('AC11')


def test_csv_and_ppm_carry_the_hash(tmp_path):
    write_csv(tmp_path / 'a.csv', ('i', 'x'), [[0, 0.5], [1, 0.25]], 'abc')
    assert (tmp_path / 'a.csv').read_text().splitlines() == ['# config_sha256=abc', 'i,x', '0,0.5', '1,0.25']
    write_ppm(tmp_path / 'a.ppm', np.array([[0, 1]]), 'abc')
    assert (tmp_path / 'a.ppm').read_text().splitlines() == ['P3', '# config_sha256=abc', '2 1', '255',
                                                             '0 0 0 230 25 75']


def test_execute_seqlemma(tmp_path):
    summary, directory = execute(SEQLEMMA, output=str(tmp_path / 'out'))
    assert summary['checks'] == {'bound_holds': True}
    assert summary['flags'] == []
    assert summary['sequences'] == 21
    written = json.loads((tmp_path / 'out' / 'summary.json').read_text())
    assert written['config_sha256'] == config_hash(resolve(SEQLEMMA))
    lines = (tmp_path / 'out' / 'seqlemma.csv').read_text().splitlines()
    assert lines[0] == f"# config_sha256={written['config_sha256']}"
    assert len(lines) == 2 + 21


def test_spectrum_task(tmp_path):
    raw = {'system': {'kind': 'anosov_t3'}, 'task': {'name': 'spectrum', 'horizon': 2000}}
    summary, _ = execute(raw, output=str(tmp_path))
    assert summary['checks']['spectrum_isolated']
    assert summary['checks']['eigen_chain']
    assert summary['max_error'] < 1e-4
    np.testing.assert_allclose(np.sort(summary['expected']), np.log([0.1981, 1.5550, 3.2470]), atol=1e-3)


def test_fixedpoints_task(tmp_path):
    summary, _ = execute(recipe('AC3'), output=str(tmp_path))
    assert summary['flags'] == []
    assert len(summary['offsets']) == 3


def test_main(tmp_path, capsys):
    assert main(['list']) == 0
    assert 'AC10' in capsys.readouterr().out
    config = tmp_path / 'bad.toml'
    config.write_text("[system]\nkind = 'anosov_t3'\n[task]\nname = 'seqlemma'\nbogus = 1\n")
    out = tmp_path / 'out'
    assert main(['run', str(config), '--output', str(out)]) == EXIT_CONFIG
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])['error'] == 'ConfigError'
    assert not os.path.exists(out)
    assert main(['recipe', 'AC11']) == EXIT_CONFIG
    config.write_text("[system]\nkind = 'anosov_t3'\n[task]\nname = 'seqlemma'\n")
    assert main(['run', str(config), '--output', str(out), '--set', 'task.sequences=5']) == 0
    assert (out / 'summary.json').exists()


@pytest.mark.parametrize('blocks', [
    [{'lam': 1.0, 'tau': 0.0, 'bogus': 3}],
    [{'tau': 0.0}],
    [],
    ['block'],
])
def test_resolve_rejects_bad_block_entries(blocks):
    with pytest.raises(ConfigError):
        resolve({'system': {'kind': 'glued', 'blocks': blocks}, 'task': {'name': 'basins'}})


def test_block_entries_get_defaults():
    c = resolve({'system': {'kind': 'glued', 'blocks': [{'lam': 0.5, 'tau': 0.0}, {'lam': 0.5, 'tau': 0.5}]},
                 'task': {'name': 'basins'}})
    assert [b['inverted'] for b in c['system']['blocks']] == [False, False]


def test_rerun_is_byte_identical(tmp_path):
    execute(SEQLEMMA, output=str(tmp_path / 'a'))
    execute(SEQLEMMA, workers=1, output=str(tmp_path / 'b'), assignments=['run.show_progress=true'])
    names = sorted(os.listdir(tmp_path / 'a'))
    assert names == sorted(os.listdir(tmp_path / 'b'))
    for name in names:
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()
    echoed = json.loads((tmp_path / 'a' / 'summary.json').read_text())['config']['run']
    assert echoed == {'seed': 0, 'chunk_size': 512}


def test_two_block_recipe_covers_small_epsilons():
    c = resolve(recipe('AC7'))
    two_blocks = [s for s in c['family'] if s['kind'] == 'f_epsilon']
    assert [s['epsilon'] for s in two_blocks] == [0.2, 0.1, 0.05]
    assert all(s['variant'] == 'two_blocks' for s in two_blocks)
    assert c['task']['expect_l'] == [1, 2, 3, 1, 2, 2, 2]


def test_fepsilon_task_on_the_literal_product(tmp_path):
    raw = {'system': {'kind': 'f_epsilon'},
           'task': {'name': 'fepsilon', 'samples': 10, 'horizon': 50, 'epsilons': [0.2, 0.1], 'sup_grid': 5}}
    summary, _ = execute(raw, output=str(tmp_path))
    assert summary['checks']['zero_sums']
    assert summary['checks']['nue_fails']
    assert all(value <= 1e-9 for value in summary['max_abs_sum'].values())
    lines = (tmp_path / 'fepsilon.csv').read_text().splitlines()
    assert len(lines) == 2 + 2


def test_subdivision_task_reports_a_verdict(tmp_path):
    raw = {'system': {'kind': 'da', 't_offset': 0.2, 'sweep_grid': 12}, 'task': {'name': 'subdivision', 'segments': 3}}
    summary, _ = execute(raw, output=str(tmp_path))
    assert summary['tau0'] == 0.95 and summary['L'] == pytest.approx(0.9)
    assert 0.0 <= summary['mean_fraction'] <= summary['max_fraction'] <= 1.0
    assert summary['tau0_verdict'] == ('holds' if summary['max_fraction'] <= 0.95 else 'fails')
    assert 'tau0_verdict' not in summary['checks']
    lines = (tmp_path / 'subdivision.csv').read_text().splitlines()
    assert lines[1] == 'segment,x0,x1,x2,length,image_length,pieces,fraction_in_V'
    assert len(lines) == 2 + 3


def test_subdivision_needs_a_da_system(tmp_path):
    with pytest.raises(ConfigError):
        execute({'system': {'kind': 'anosov_t3'}, 'task': {'name': 'subdivision'}}, output=str(tmp_path))


def test_ln_task_searches_n0(tmp_path):
    raw = {'system': {'kind': 'anosov_t3'}, 'task': {'name': 'ln', 'grid': 4, 'n_conv': 20, 'max_n': 4}}
    summary, _ = execute(raw, output=str(tmp_path))
    member = summary['anosov_t3_0']
    assert member['n0'] == 1
    assert member['n0_measures'] == ['lebesgue']
    assert member['max_n'] == 4
    assert summary['checks'] == {'superadditive_anosov_t3_0': True}


def test_exponents_task_reports_block_signs(tmp_path):
    raw = {'system': {'kind': 'mixed_sign'}, 'task': {'name': 'exponents', 'samples': 20, 'horizon': 300}}
    summary, _ = execute(raw, output=str(tmp_path))
    blocks = summary['blocks']
    assert [b['inverted'] for b in blocks] == [False, True]
    assert sum(b['points'] for b in blocks) == 20
    for b in blocks:
        if b['points']:
            assert b['sign'] == np.sign(b['mean_exponent'])
