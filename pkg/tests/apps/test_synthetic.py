import os

import numpy as np
import pytest
from PIL import Image

from reidnas.apps import SyntheticReID, generate_synthetic, prepare_data
from reidnas.apps.synthetic import nearest_centroid_accuracy
from tests.fixtures import synthetic_cfg


def test_generate(synthetic_cfg):
    root = generate_synthetic(synthetic_cfg)
    folders = sorted(os.listdir(root))
    assert len(folders) == 8
    for folder in folders:
        files = os.listdir(os.path.join(root, folder))
        assert len(files) == 8
    with Image.open(os.path.join(root, folders[0], '0000.png')) as img:
        assert img.size == (16, 32)


def test_generate_deterministic(synthetic_cfg, tmp_path):
    a = generate_synthetic(synthetic_cfg, str(tmp_path / 'a'))
    b = generate_synthetic(synthetic_cfg, str(tmp_path / 'b'))
    for name in ('0000/0000.png', '0005/0007.png'):
        assert open(os.path.join(a, name), 'rb').read() == open(os.path.join(b, name), 'rb').read()


def test_generate_cameras(synthetic_cfg):
    synthetic_cfg['data']['cameras'] = 3
    gen = SyntheticReID(synthetic_cfg)
    assert gen.file_name(4) == '0004_c1.png'
    index = prepare_data(synthetic_cfg)['train']
    assert set(index.cams.tolist()) == {0, 1, 2}


def test_identities_separable(synthetic_cfg):
    index = prepare_data(synthetic_cfg)['train']
    load = lambda path: np.asarray(Image.open(path))
    assert nearest_centroid_accuracy(index, load) > 0.9
    gen = SyntheticReID(synthetic_cfg)
    assert np.abs(gen.signature_image(0) - gen.signature_image(1)).max() > 0.


def test_prepare_data(synthetic_cfg):
    parts = prepare_data(synthetic_cfg)
    assert parts['train'].num_ids == 4 and parts['test'].num_ids == 4
    assert set(parts['train'].names).isdisjoint(parts['test'].names)
    assert parts['train'].labels.max() == 3
    again = prepare_data(synthetic_cfg)
    assert again['test'].names == parts['test'].names


def test_synthetic_errors(synthetic_cfg):
    synthetic_cfg['data']['kind'] = 'folder'
    with pytest.raises(ValueError):
        SyntheticReID(synthetic_cfg)
    synthetic_cfg['data'].update(kind='synthetic', num_ids=1)
    with pytest.raises(ValueError):
        SyntheticReID(synthetic_cfg)
