import csv
import os

import numpy as np
import pytest
import torch

from reidnas.algorithms import DivergenceError, derive_genotype, split_query_gallery
from reidnas.apps import Searcher, Trainer, prepare_data, run_search
from reidnas.apps.searcher import load_alpha
from reidnas.apps.trainer import evaluate_network
from reidnas.datatypes import OpKind, RetrievalBatch
from reidnas.io import ReIDDataset, SearchHistoryFile, load_checkpoint
from reidnas.utils import load_config
from tests.fixtures import synthetic_cfg


def snapshot(params):
    return [p.detach().clone() for p in params]


def unchanged(before, params):
    return all(torch.equal(a, p.detach()) for a, p in zip(before, params))


def test_searcher_setup(synthetic_cfg):
    searcher = Searcher(synthetic_cfg)
    assert searcher.macro.num_ids == 4
    assert searcher.steps_per_epoch == 2
    assert searcher.model.space == 'reid'
    batch = next(iter(searcher.dataloader['train']))
    assert batch.is_pk(2, 2)


def test_weight_update_isolation(synthetic_cfg, monkeypatch):
    searcher = Searcher(synthetic_cfg)
    model = searcher.model
    frozen = []

    w_step = searcher.optimizers['w'].step

    def checked_w_step(*args, **kwargs):
        frozen.append(all(not p.requires_grad and p.grad is None for p in model.arch_parameters()))
        return w_step(*args, **kwargs)

    monkeypatch.setattr(searcher.optimizers['w'], 'step', checked_w_step)
    monkeypatch.setattr(searcher.optimizers['a'], 'step', lambda *args, **kwargs: None)
    alpha, weights = snapshot(model.arch_parameters()), snapshot(model.weight_parameters())
    batch_train = next(iter(searcher.dataloader['train']))
    batch_val = next(iter(searcher.dataloader['val']))
    out = searcher.step(batch_train, batch_val)
    assert frozen == [True]
    assert unchanged(alpha, model.arch_parameters())
    assert not unchanged(weights, model.weight_parameters())
    assert all(p.requires_grad for p in model.parameters())
    assert set(out) == {'loss_train', 'loss_val'}


def test_alpha_update_isolation(synthetic_cfg, monkeypatch):
    searcher = Searcher(synthetic_cfg)
    model = searcher.model
    monkeypatch.setattr(searcher.optimizers['w'], 'step', lambda *args, **kwargs: None)
    alpha, weights = snapshot(model.arch_parameters()), snapshot(model.weight_parameters())
    batch_train = next(iter(searcher.dataloader['train']))
    batch_val = next(iter(searcher.dataloader['val']))
    searcher.step(batch_train, batch_val)
    assert unchanged(weights, model.weight_parameters())
    assert not unchanged(alpha, model.arch_parameters())
    assert searcher.state.step == 1


def test_zero_epochs_tie_break(synthetic_cfg):
    synthetic_cfg['search']['epochs'] = 0
    genotype, state = run_search(synthetic_cfg)
    assert state.epoch == 0
    for blk in genotype.normal + genotype.reduction:
        assert (blk.input1, blk.input2) == (0, 1)
        assert blk.op1 == blk.op2 == OpKind.PART_AWARE
    synthetic_cfg['search']['space'] = 'classic'
    genotype, _ = run_search(synthetic_cfg)
    assert all(blk.op1 == OpKind.MAX_POOL_3x3 for blk in genotype.normal)


def test_search_outputs(synthetic_cfg):
    out = synthetic_cfg['output_dir']
    searcher = Searcher(synthetic_cfg, prepare_data(synthetic_cfg)['train'])
    genotype, state = searcher.run()
    assert state.epoch == 2 and state.step == 4
    assert len(state.genotype_history) == 2 and state.genotype_history[-1] == genotype
    assert genotype == derive_genotype(searcher.model.alpha)

    with open(os.path.join(out, 'genotype.json')) as f:
        assert f.read() == genotype.to_json()
    with open(os.path.join(out, 'search_log.csv')) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 4
    assert [int(r['step']) for r in rows] == [1, 2, 3, 4]
    assert float(rows[0]['lr_w']) == pytest.approx(0.1)

    alpha = load_alpha(os.path.join(out, 'alpha_epoch1.ckpt'))
    assert torch.equal(alpha.normal, searcher.model.alpha.normal)
    history = SearchHistoryFile.open(os.path.join(out, 'search_history.h5'), 'r')
    assert history.epochs.tolist() == [0, 1]
    assert history[1]['genotype'] == genotype
    history.close()

    ckpt = load_checkpoint(os.path.join(out, 'supernet_last.ckpt'), 'supernet')
    resumed = Searcher(synthetic_cfg)
    resumed.resume(ckpt)
    assert resumed.state.epoch == 2 and resumed.state.step == 4
    assert torch.equal(resumed.model.alpha.reduction, searcher.model.alpha.reduction)
    with pytest.raises(ValueError):
        load_alpha(os.path.join(out, 'missing.ckpt'))


def test_search_reproducible(synthetic_cfg, tmp_path):
    synthetic_cfg['search'].update(epochs=2, dtype='float64', deterministic=True)
    first, first_state = run_search(synthetic_cfg)
    first_dir = synthetic_cfg['output_dir']
    synthetic_cfg['output_dir'] = str(tmp_path / 'again')
    second, second_state = run_search(synthetic_cfg)
    assert first == second
    assert first_state.step_losses == second_state.step_losses
    for epoch in range(2):
        name = f'alpha_epoch{epoch}.ckpt'
        alpha = load_alpha(os.path.join(first_dir, name))
        again = load_alpha(os.path.join(synthetic_cfg['output_dir'], name))
        assert alpha.normal.dtype == torch.float64
        assert torch.equal(alpha.normal, again.normal)
        assert torch.equal(alpha.reduction, again.reduction)
    with open(os.path.join(first_dir, 'genotype.json'), 'rb') as f:
        genotype_bytes = f.read()
    with open(os.path.join(synthetic_cfg['output_dir'], 'genotype.json'), 'rb') as f:
        assert f.read() == genotype_bytes


def test_divergence_keeps_alpha_trainable(synthetic_cfg):
    synthetic_cfg['search']['epochs'] = 1
    searcher = Searcher(synthetic_cfg)
    searcher.run()
    last = os.path.join(synthetic_cfg['output_dir'], 'supernet_last.ckpt')
    with open(last, 'rb') as f:
        saved = f.read()

    model = searcher.model
    alpha = snapshot(model.arch_parameters())
    batch_train = next(iter(searcher.dataloader['train']))
    batch_val = next(iter(searcher.dataloader['val']))
    nan_batch = RetrievalBatch(torch.full_like(batch_train.images, float('nan')),
                               batch_train.labels, batch_train.indices)
    with pytest.raises(DivergenceError):
        searcher.step(nan_batch, batch_val)
    assert all(p.requires_grad for p in model.arch_parameters())
    assert all(p.requires_grad for p in model.parameters())
    assert unchanged(alpha, model.arch_parameters())
    assert searcher.state.step == 2

    with open(last, 'rb') as f:
        assert f.read() == saved
    ckpt = load_checkpoint(last, 'supernet')
    assert ckpt['epoch'] == 0 and ckpt['step'] == 2
    assert torch.isfinite(ckpt['alpha'].normal).all() and torch.isfinite(ckpt['alpha'].reduction).all()

    searcher.step(batch_train, batch_val)
    assert not unchanged(alpha, model.arch_parameters())


def desk_cfg(tmp_path):
    cfg = load_config('desk_synthetic')
    cfg['output_dir'] = str(tmp_path / 'runs')
    cfg['data']['root'] = str(tmp_path / 'data')
    return cfg


@pytest.mark.slow
def test_desk_search_loss_decrease(tmp_path):
    cfg = desk_cfg(tmp_path)
    cfg['search']['epochs'] = 200
    searcher = Searcher(cfg)
    assert searcher.steps_per_epoch == 1
    _, state = searcher.run()
    losses = [loss_train for loss_train, _ in state.step_losses]
    assert len(losses) == 200
    assert np.mean(losses[-20:]) < 0.5 * losses[0]


@pytest.mark.slow
def test_desk_searched_genotype_beats_chance(tmp_path):
    cfg = desk_cfg(tmp_path)
    data = prepare_data(cfg)
    genotype, _ = run_search(cfg, data['train'])
    trainer = Trainer(cfg, genotype, data['train'])
    network, _ = trainer.run()

    dataset = ReIDDataset(data['test'], trainer.macro.input_hw)
    _, gallery = split_query_gallery(dataset.labels, dataset.index.cams)
    chance = 1. / len(np.unique(dataset.labels[gallery]))
    result = evaluate_network(network, dataset)
    assert result.rank(1) >= 2 * chance
