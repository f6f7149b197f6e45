import json
import os

import numpy as np
import yaml

from reidnas.algorithms import count_params_flops, derive_genotype
from reidnas.cli import cli
from reidnas.datatypes import AlphaParams, Genotype, MacroConfig
from reidnas.io import read_features, save_checkpoint
from tests.fixtures import rng, synthetic_cfg, random_genotype


def last_json(text):
    return json.loads(text.strip().splitlines()[-1])


def test_count(tmp_path, rng, capsys):
    genotype = random_genotype(rng)
    path = tmp_path / 'genotype.json'
    path.write_text(genotype.to_json())
    code = cli(['count', '--genotype', str(path), '--macro', 'C=4,l=1.1.1.1,B=2,hw=32x16',
                '--output_dir', str(tmp_path / 'out')])
    assert code == 0
    expected = count_params_flops(genotype, MacroConfig(C=4, l=(1, 1, 1, 1), B=2, input_hw=(32, 16)))
    assert last_json(capsys.readouterr().out) == dict(params=expected[0], macs=expected[1])
    assert os.path.isfile(tmp_path / 'out' / 'config_resolved.yaml')


def test_derive(tmp_path, rng, capsys):
    alpha = AlphaParams.random(2, rng)
    path = save_checkpoint(str(tmp_path / 'alpha_epoch3.ckpt'), 'alpha', MacroConfig(B=2), 3, alpha=alpha)
    assert cli(['derive', '--alpha', path, '--output', str(tmp_path / 'g.json')]) == 0
    derived = Genotype.from_json((tmp_path / 'g.json').read_text())
    assert derived == derive_genotype(alpha)


def test_errors(tmp_path, capsys):
    code = cli(['derive', '--alpha', str(tmp_path / 'missing.ckpt')])
    assert code == 1
    err = last_json(capsys.readouterr().err)
    assert err['error'] == 'ValueError' and 'missing.ckpt' in err['message']

    path = tmp_path / 'bad.json'
    path.write_text('{"normal": []}')
    assert cli(['count', '--genotype', str(path), '--output_dir', str(tmp_path)]) == 1
    assert last_json(capsys.readouterr().err)['error'] == 'GenotypeParseError'

    assert cli(['frobnicate']) != 0
    assert last_json(capsys.readouterr().err)['error'] == 'UsageError'


def test_pipeline(synthetic_cfg, tmp_path, capsys):
    config = tmp_path / 'desk.yaml'
    config.write_text(yaml.safe_dump(synthetic_cfg))
    out = synthetic_cfg['output_dir']

    assert cli(['gen-data', '--config', str(config)]) == 0
    assert len(os.listdir(synthetic_cfg['data']['root'])) == 8
    assert cli(['search', '--config', str(config)]) == 0
    assert os.path.isfile(os.path.join(out, 'genotype.json'))
    resolved = yaml.safe_load(open(os.path.join(out, 'config_resolved.yaml')))
    assert resolved['macro']['num_ids'] == 4

    assert cli(['train', '--config', str(config)]) == 0
    assert os.path.isfile(os.path.join(out, 'best.ckpt'))

    dump = str(tmp_path / 'test_feats.bin')
    capsys.readouterr()
    assert cli(['eval', '--config', str(config), '--dump', dump]) == 0
    report = last_json(capsys.readouterr().out)
    assert 0. <= report['map'] <= 1.
    assert set(report['cmc']) == {'1', '5', '10'}
    with open(os.path.join(out, 'eval_report.json')) as f:
        assert json.load(f) == report

    feats = read_features(dump)
    assert feats['feats'].shape == (32, 16)
    assert cli(['eval', '--config', str(config), '--query', dump, '--gallery', dump]) == 0
    # every image retrieves itself first, at distance zero
    assert last_json(capsys.readouterr().out)['cmc']['1'] == 1.


def test_pipeline_reproducible(synthetic_cfg, tmp_path):
    synthetic_cfg['search'].update(epochs=1, deterministic=True)
    synthetic_cfg['train'].update(epochs=2, deterministic=True)
    config = tmp_path / 'desk.yaml'
    config.write_text(yaml.safe_dump(synthetic_cfg))

    outputs = []
    for run in ('first', 'second'):
        out = str(tmp_path / run)
        for command in ('search', 'train', 'eval'):
            assert cli([command, '--config', str(config), '--output_dir', out]) == 0
        outputs.append({name: open(os.path.join(out, name), 'rb').read()
                        for name in ('genotype.json', 'eval_report.json')})
    assert outputs[0] == outputs[1]
