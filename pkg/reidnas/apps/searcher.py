from __future__ import annotations

import os
from dataclasses import dataclass, field
from time import time

import torch
from torch.utils.data import DataLoader
from tqdm import tqdm

from reidnas.algorithms import PKSampler, RetrievalLoss, Supernet, derive_genotype
from reidnas.algorithms.criterion import DivergenceError, check_finite
from reidnas.datatypes import AlphaParams, Genotype, MacroConfig, RetrievalBatch, SearchConfig
from reidnas.io import DatasetIndex, ReIDDataset, SearchHistoryFile, save_checkpoint, split_dataset
from reidnas.utils import (CSVLogger, device_from_cfg, get_lr, optimizer_factory, scheduler_factory,
                           set_deterministic, sub_seed)

SEARCH_LOG_COLUMNS = ['epoch', 'step', 'loss_train', 'loss_val', 'lr_w', 'lr_a']


@dataclass
class SearchState:
    '''
    Bookkeeping of a search: counters, per-epoch mean losses, alpha snapshots
    and the genotype derived after every epoch.
    '''
    epoch: int = 0
    step: int = 0
    step_losses: list = field(default_factory=list)
    loss_train: list = field(default_factory=list)
    loss_val: list = field(default_factory=list)
    alpha_history: list = field(default_factory=list)
    genotype_history: list = field(default_factory=list)


class Searcher:
    def __init__(self, cfg: dict, index: DatasetIndex = None):
        """Differentiable architecture search with a retrieval objective.

        The training identities are split image-wise into D_train (updates the
        operation weights) and D_val (updates the architecture logits). Each
        step alternates one weight update and one alpha update, both first
        order.

        Several components are created from the configuration dictionary:
        - `reidnas.datatypes.MacroConfig` (cfg['macro'])
        - `reidnas.datatypes.SearchConfig` (cfg['search'])
        - `reidnas.algorithms.Supernet` with one mixed edge per cell edge
        - two `torch.utils.data.DataLoader` with `PKSampler` batches
        - `reidnas.utils.CSVLogger` writing `search_log.csv` (cfg['logger'])

        The main method is `run()`, returning the derived genotype.

        Parameters
        ----------
        cfg : dict
            experiment configuration
        index : DatasetIndex, optional
            training images; prepared from cfg['data'] when omitted
        """
        self._cfg = cfg
        self._search_cfg = SearchConfig.from_cfg(cfg)
        self._seed = int(cfg.get('seed', self._search_cfg.seed))
        self._output_dir = cfg.get('output_dir', 'runs')
        os.makedirs(self._output_dir, exist_ok=True)
        self._device = device_from_cfg(cfg)
        self._dtype = getattr(torch, self._search_cfg.dtype)
        if self._search_cfg.deterministic:
            set_deterministic(True)
        torch.manual_seed(sub_seed(self._seed, 'dropout'))

        if index is None:
            from reidnas.apps.synthetic import prepare_data
            index = prepare_data(cfg)['train']

        macro = MacroConfig.from_cfg(cfg)
        if macro.num_ids != index.num_ids:
            print(f'[Searcher] setting num_ids to the {index.num_ids} training identities (was {macro.num_ids})')
            macro = macro.with_updates(num_ids=index.num_ids)
        self._macro = macro

        # split the training identities image-wise
        sc = self._search_cfg
        train_pos, val_pos = split_dataset(index, sc.split_fraction, sub_seed(self._seed, 'split'))
        print(f'[Searcher] D_train {len(train_pos)} images, D_val {len(val_pos)} images')
        self._datasets = dict(train=ReIDDataset(index.subset(train_pos, relabel=False), macro.input_hw),
                              val=ReIDDataset(index.subset(val_pos, relabel=False), macro.input_hw))
        self._samplers = dict(train=PKSampler(self._datasets['train'].labels, sc.P, sc.K, sub_seed(self._seed, 'sampler')),
                              val=PKSampler(self._datasets['val'].labels, sc.P, sc.K, sub_seed(self._seed, 'sampler_val')))
        self._dataloader = {
            key: DataLoader(self._datasets[key], batch_sampler=self._samplers[key],
                            collate_fn=ReIDDataset.collate_fn, num_workers=sc.num_workers)
            for key in ('train', 'val')
        }

        # model, objectives and optimizers
        self._model = Supernet(macro, sc.space, seed=sub_seed(self._seed, 'init')).to(self._device, self._dtype)
        self._criterion_w = RetrievalLoss(sc.loss_weights, 'mixture', sc.reduction)
        self._criterion_a = RetrievalLoss(sc.loss_weights, sc.alpha_loss, sc.reduction)
        self._opt_w = optimizer_factory(self._model.weight_parameters(), dict(
            Class='SGD', Param=dict(lr=sc.w_lr, momentum=sc.w_momentum, weight_decay=sc.w_weight_decay)))
        self._opt_a = optimizer_factory(self._model.arch_parameters(), dict(
            Class='Adam', Param=dict(lr=sc.a_lr, betas=sc.a_betas, weight_decay=sc.a_weight_decay)))
        self._sch_w = scheduler_factory(self._opt_w, dict(
            Class='CosineAnnealingLR', Param=dict(T_max=max(1, sc.epochs), eta_min=sc.w_lr_min)))
        self._sch_a = scheduler_factory(self._opt_a, dict(
            Class='MultiStepLR', Param=dict(milestones=sc.a_milestones, gamma=sc.a_gamma)))

        self._logger = CSVLogger(cfg, SEARCH_LOG_COLUMNS, file_name='search_log.csv')
        self.state = SearchState()

    @property
    def model(self) -> Supernet:
        """the supernet"""
        return self._model

    @property
    def macro(self) -> MacroConfig:
        return self._macro

    @property
    def search_cfg(self) -> SearchConfig:
        return self._search_cfg

    @property
    def device(self):
        """Torch device being used"""
        return self._device

    @property
    def dataloader(self) -> dict:
        """torch dataloaders for D_train and D_val"""
        return self._dataloader

    @property
    def optimizers(self) -> dict:
        return dict(w=self._opt_w, a=self._opt_a)

    @property
    def schedulers(self) -> dict:
        return dict(w=self._sch_w, a=self._sch_a)

    @property
    def output_dir(self) -> str:
        return self._output_dir

    @property
    def logger(self):
        return self._logger

    @property
    def steps_per_epoch(self) -> int:
        return min(len(self._dataloader['train']), len(self._dataloader['val']))

    def _set_trainable(self, params, flag: bool):
        for p in params:
            p.requires_grad_(flag)

    def _forward_loss(self, batch: RetrievalBatch, criterion, where: str):
        batch = batch.to(self.device, self._dtype)
        loss, parts = criterion(self.model(batch.images), batch.labels)
        check_finite(loss, where, self.state.epoch, self.state.step)
        return loss, parts

    def step(self, batch_train: RetrievalBatch, batch_val: RetrievalBatch) -> dict:
        """One alternation: a weight update on ``batch_train`` with alpha
        frozen, then an alpha update on ``batch_val`` with the weights frozen.

        Returns
        -------
        dict
            ``loss_train`` and ``loss_val`` of this step
        """
        sc = self._search_cfg
        self.model.train()

        # (a) operation weights on D_train
        self._set_trainable(self.model.arch_parameters(), False)
        self._opt_w.zero_grad()
        try:
            loss_w, _ = self._forward_loss(batch_train, self._criterion_w, 'training')
            loss_w.backward()
            if sc.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(self.model.weight_parameters(), sc.grad_clip)
            self._opt_w.step()
        finally:
            self._set_trainable(self.model.arch_parameters(), True)

        # (b) architecture logits on D_val
        self._set_trainable(self.model.weight_parameters(), False)
        self._opt_a.zero_grad()
        try:
            loss_a, _ = self._forward_loss(batch_val, self._criterion_a, 'validation')
            loss_a.backward()
            self._opt_a.step()
        finally:
            self._set_trainable(self.model.weight_parameters(), True)

        self.state.step += 1
        out = dict(loss_train=loss_w.item(), loss_val=loss_a.item())
        self.state.step_losses.append((out['loss_train'], out['loss_val']))
        return out

    def run(self) -> tuple:
        """
        Runs the search for the configured number of epochs, then derives the
        genotype and writes `genotype.json`.

        Returns
        -------
        (Genotype, SearchState)
        """
        history = SearchHistoryFile.open(os.path.join(self.output_dir, 'search_history.h5'), 'w')
        self.logger.open()
        epochs = self._search_cfg.epochs
        try:
            while self.state.epoch < epochs:
                self._run_epoch(history)
        except DivergenceError as err:
            print('[Searcher] search diverged:', err)
            print('[Searcher] last good checkpoint kept in', os.path.join(self.output_dir, 'supernet_last.ckpt'))
            raise
        finally:
            self.logger.close()
            history.close()

        genotype = derive_genotype(self.model.alpha)
        self.save_genotype(genotype)
        print('[Searcher] Stopped search at step', self.state.step, 'epoch', self.state.epoch)
        print(genotype)
        return genotype, self.state

    def _run_epoch(self, history: SearchHistoryFile):
        epoch = self.state.epoch
        for sampler in self._samplers.values():
            sampler.set_epoch(epoch)

        sums = [0., 0.]
        count = 0
        tstart = time()
        batches = zip(self._dataloader['train'], self._dataloader['val'])
        for batch_train, batch_val in tqdm(batches, total=self.steps_per_epoch, desc='Epoch %-3d' % epoch, unit='step'):
            out = self.step(batch_train, batch_val)
            sums[0] += out['loss_train']
            sums[1] += out['loss_val']
            count += 1
            self.logger.record(SEARCH_LOG_COLUMNS, [epoch, self.state.step, out['loss_train'], out['loss_val'],
                                                    get_lr(self._opt_w), get_lr(self._opt_a)])
            self.logger.step(self.state.step)

        self._sch_w.step()
        self._sch_a.step()
        self.state.epoch += 1

        alpha = self.model.alpha
        genotype = derive_genotype(alpha)
        loss_train = sums[0] / max(count, 1)
        loss_val = sums[1] / max(count, 1)
        self.state.loss_train.append(loss_train)
        self.state.loss_val.append(loss_val)
        self.state.alpha_history.append(alpha)
        self.state.genotype_history.append(genotype)
        history.write_one(epoch, alpha, genotype, loss_train, loss_val)
        self.save(epoch)
        print(f'[Searcher] epoch {epoch} loss_train {loss_train:.4f} loss_val {loss_val:.4f} '
              f'({time() - tstart:.1f} s)')

    def save(self, epoch: int):
        """Writes `alpha_epoch{N}.ckpt` and overwrites `supernet_last.ckpt`."""
        alpha = self.model.alpha
        save_checkpoint(os.path.join(self.output_dir, f'alpha_epoch{epoch}.ckpt'), 'alpha',
                        self.macro, epoch, alpha=alpha)
        save_checkpoint(os.path.join(self.output_dir, 'supernet_last.ckpt'), 'supernet',
                        self.macro, epoch, alpha=alpha, state_dict=self.model.state_dict(),
                        optimizers=dict(w=self._opt_w.state_dict(), a=self._opt_a.state_dict(),
                                        sch_w=self._sch_w.state_dict(), sch_a=self._sch_a.state_dict()),
                        space=self.model.space, step=self.state.step)

    def resume(self, ckpt: dict):
        """Restores weights, alpha, optimizers and counters from a loaded supernet checkpoint."""
        if ckpt['kind'] != 'supernet' or ckpt['macro'] != self.macro:
            raise ValueError('checkpoint does not hold a supernet of this macro configuration')
        self.model.load_state_dict(ckpt['state_dict'])
        self._opt_w.load_state_dict(ckpt['optimizers']['w'])
        self._opt_a.load_state_dict(ckpt['optimizers']['a'])
        self._sch_w.load_state_dict(ckpt['optimizers']['sch_w'])
        self._sch_a.load_state_dict(ckpt['optimizers']['sch_a'])
        self.state.epoch = ckpt['epoch'] + 1
        self.state.step = ckpt.get('step', 0)
        print('[Searcher] Resuming search at epoch', self.state.epoch)

    def save_genotype(self, genotype: Genotype) -> str:
        path = os.path.join(self.output_dir, 'genotype.json')
        with open(path, 'w') as f:
            f.write(genotype.to_json())
        return path


def run_search(cfg: dict, index: DatasetIndex = None) -> tuple:
    '''Build a `Searcher` and run it. Returns ``(Genotype, SearchState)``.'''
    return Searcher(cfg, index).run()


def load_alpha(path: str) -> AlphaParams:
    '''Alpha logits stored in an alpha or supernet checkpoint.'''
    from reidnas.io import load_checkpoint
    ckpt = load_checkpoint(path)
    if ckpt.get('alpha') is None:
        raise ValueError(f'{path} holds no architecture logits')
    return ckpt['alpha']
