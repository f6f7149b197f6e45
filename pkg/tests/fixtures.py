import os
from tempfile import NamedTemporaryFile

import numpy as np
import pytest
import torch

from reidnas.datatypes import BlockSpec, Genotype, MacroConfig, space_ops
from tests.conftest import GLOBAL_SEED

@pytest.fixture
def rng(GLOBAL_SEED):
    return  np.random.default_rng(GLOBAL_SEED)

@pytest.fixture
def torch_rng(GLOBAL_SEED):
    return torch.Generator().manual_seed(GLOBAL_SEED)

def writable_temp_file(suffix=None):
    return NamedTemporaryFile('w', suffix=suffix, delete=False).name

def random_genotype(rng, num_blocks=2, space='reid'):
    """a valid genotype with uniformly drawn inputs and operations"""
    ops = space_ops(space)
    def cell():
        return [BlockSpec(int(rng.integers(2 + i)), int(rng.integers(2 + i)),
                          ops[rng.integers(len(ops))], ops[rng.integers(len(ops))])
                for i in range(num_blocks)]
    return Genotype(cell(), cell(), space=space)

@pytest.fixture
def tiny_macro():
    """smallest skeleton that keeps the part-aware band split valid (last stage height 4)"""
    return MacroConfig(C=4, l=(1, 1, 1, 1), B=2, input_hw=(32, 16), num_ids=4, embed_dim=16,
                       dropout_f=0., dropout_g=0.)

@pytest.fixture
def fake_genotype(rng, tiny_macro):
    return random_genotype(rng, tiny_macro.B)

@pytest.fixture
def synthetic_cfg(tmp_path):
    """desk-scale experiment configuration writing under a temporary directory"""
    return dict(
        seed=3,
        output_dir=str(tmp_path / 'runs'),
        device=dict(type='cpu'),
        data=dict(kind='synthetic', root=str(tmp_path / 'data'), num_ids=8, imgs_per_id=8,
                  image_hw=[32, 16], noise=0.05, test_fraction=0.5, seed=1),
        macro=dict(C=4, l=[1, 1, 1, 1], B=2, input_hw=[32, 16], embed_dim=16,
                   dropout_f=0., dropout_g=0.),
        search=dict(epochs=2, P=2, K=2, a_milestones=[1]),
        train=dict(epochs=2, milestones=[1], P=2, K=2, val_fraction=0.0, eval_every=1),
    )

@pytest.fixture
def fake_batch(torch_rng):
    """4 identities x 2 images of 32x16"""
    from reidnas.datatypes import RetrievalBatch
    labels = torch.arange(4).repeat_interleave(2)
    return RetrievalBatch(images=torch.randn(8, 3, 32, 16, generator=torch_rng),
                          labels=labels, indices=torch.arange(8))
