import os

import numpy as np
import pytest
import torch
import yaml

from reidnas.utils import (CSVLogger, get_config, list_config, load_config, merge_config, parse_macro_string,
                           save_config, set_by_path, sub_seed, to_plain)


def test_packaged_configs():
    names = list_config()
    for name in ('desk_synthetic', 'search_market', 'train_market', 'train_market_pcb'):
        assert name in names
        assert os.path.isfile(get_config(name))
        assert get_config(name + '.yaml') == get_config(name)
        assert isinstance(load_config(name), dict)
    with pytest.raises(ValueError):
        get_config('no_such_config')


def test_load_config_file(tmp_path):
    path = tmp_path / 'c.yaml'
    path.write_text('seed: 3\nsearch:\n  epochs: 5\n')
    assert load_config(str(path)) == dict(seed=3, search=dict(epochs=5))
    path.write_text('')
    assert load_config(str(path)) == dict()
    path.write_text('- 1\n- 2\n')
    with pytest.raises(ValueError):
        load_config(str(path))


def test_config_helpers(tmp_path):
    base = dict(a=dict(b=1, c=2), d=3)
    merged = merge_config(base, dict(a=dict(c=5), e=6))
    assert merged == dict(a=dict(b=1, c=5), d=3, e=6)
    assert base['a']['c'] == 2

    cfg = dict()
    set_by_path(cfg, 'search.epochs', 4)
    set_by_path(cfg, 'seed', 1)
    assert cfg == dict(search=dict(epochs=4), seed=1)
    with pytest.raises(ValueError):
        set_by_path(cfg, 'seed.value', 2)

    assert to_plain(dict(x=(1, (2, 3)))) == dict(x=[1, [2, 3]])
    save_config(dict(macro=dict(l=(1, 2))), str(tmp_path / 'out.yaml'))
    assert yaml.safe_load((tmp_path / 'out.yaml').read_text()) == dict(macro=dict(l=[1, 2]))


def test_parse_macro_string():
    section = parse_macro_string('C=64, l=2.2.2.2, hw=384x128, B=4, ids=751, embed=512')
    assert section == dict(C=64, l=[2, 2, 2, 2], input_hw=[384, 128], B=4, num_ids=751, embed_dim=512)
    assert parse_macro_string('') == dict()
    for bad in ('C', 'X=1', 'C=abc', 'l=2.x'):
        with pytest.raises(ValueError):
            parse_macro_string(bad)


def test_sub_seed():
    names = ('split', 'sampler', 'sampler_val', 'init', 'augment', 'data', 'dropout')
    seeds = [sub_seed(7, name) for name in names]
    assert len(set(seeds)) == len(names)
    assert seeds == [sub_seed(7, name) for name in names]
    assert sub_seed(8, 'split') != sub_seed(7, 'split')
    assert all(0 <= s < 2**32 for s in seeds)


def test_csv_logger(tmp_path):
    cfg = dict(output_dir=str(tmp_path / 'out'))
    logger = CSVLogger(cfg, ['epoch', 'loss', 'lr'], file_name='log.csv')
    logger.record(['epoch', 'loss'], [0, torch.tensor(0.5)])
    logger.step(1)
    logger.record(['epoch', 'lr'], [np.int64(1), 0.01])
    logger.write()
    with pytest.raises(ValueError):
        logger.record(['accuracy'], [1.])
    logger.close()
    lines = (tmp_path / 'out' / 'log.csv').read_text().splitlines()
    assert lines == ['epoch,loss,lr', '0,0.5,', '1,,0.01']
    logger.close()
    assert (tmp_path / 'out' / 'log.csv').read_text().splitlines() == lines


def test_csv_logger_header_only(tmp_path):
    cfg = dict(logger=dict(dir_name=str(tmp_path), versioned=True, log_every_nsteps=2))
    logger = CSVLogger(cfg, ['epoch', 'loss'])
    assert logger.logdir == os.path.join(str(tmp_path), 'version-00')
    logger.record(['epoch'], [0])
    logger.step(1)
    logger.close()
    assert open(logger.logfile).read() == 'epoch,loss\n'


def test_csv_logger_skipped_step(tmp_path):
    cfg = dict(output_dir=str(tmp_path), logger=dict(log_every_nsteps=2))
    logger = CSVLogger(cfg, ['epoch', 'step', 'loss', 'val_map'])
    logger.record(['epoch', 'step', 'loss'], [0, 1, 0.9])
    logger.step(1)
    logger.record(['epoch', 'step', 'val_map'], [0, 1, 0.25])
    logger.write()
    logger.record(['epoch', 'step', 'loss'], [1, 2, 0.7])
    logger.step(2)
    logger.close()
    lines = open(logger.logfile).read().splitlines()
    assert lines == ['epoch,step,loss,val_map', '0,1,,0.25', '1,2,0.7,']
